"""Device parameters, system Hamiltonian and the two-tone drive.

All Hamiltonians are built in the frame rotating at the resonator frequency
per excitation quantum.  In that frame a qutrit level k carries the diagonal
energy eps_k - k*omega_r, the qutrit-resonator couplings are static with the
ladder scaling sqrt(k+1), and each drive tone rotates at its frequency offset
from omega_r.  Fast dynamics at the bare 5.6 GHz scale never appears; the
largest residual rate is set by the anharmonicity.

Units: angular frequencies in rad/s, times in seconds.  Configuration files
use linear MHz (value = omega/2pi) and nanoseconds; conversion happens once
at load time.
"""

from __future__ import annotations

import importlib.resources
import warnings
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .hilbert import (
    DimensionError,
    HilbertSpace,
    annihilation,
    embed,
    qutrit_lowering,
)

TWO_PI = 2.0 * np.pi
MHZ = TWO_PI * 1e6  # linear MHz -> rad/s
NS = 1e-9


class ConfigError(ValueError):
    """Raised for unreadable, malformed or out-of-range configuration input."""


@dataclass(frozen=True)
class DeviceParams:
    """Physical constants of the two-qutrit plus resonator system.

    omega_q1/omega_q2 are the g-e transition frequencies at the gate point,
    alpha the anharmonicities (alpha = 2*omega_e - omega_f > 0 for these
    transmons), lambda the qutrit-resonator couplings and omega_ge/omega_ef
    the Rabi amplitudes of the two drive tones applied to Q2.
    """

    omega_r: float
    omega_q1: float
    omega_q2: float
    alpha_q1: float
    alpha_q2: float
    lambda_q1: float
    lambda_q2: float
    omega_ge: float
    omega_ef: float
    t1_e: tuple[float, float]
    t1_f: tuple[float, float]
    tphi: tuple[float, float] = (40e-6, 40e-6)
    gate_time: float = 209.5e-9
    ramp_time: float = 10e-9
    kappa: float = 0.0
    delta1_convention: str = "supplement"
    drive_frequency_mode: str = "exact"
    crosstalk: bool = False

    def __post_init__(self):
        for name in ("omega_r", "omega_q1", "omega_q2", "alpha_q1", "alpha_q2",
                     "lambda_q1", "lambda_q2"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.omega_ge < 0 or self.omega_ef < 0:
            raise ConfigError("drive amplitudes must be non-negative")
        for pair_name in ("t1_e", "t1_f", "tphi"):
            for v in getattr(self, pair_name):
                if v <= 0:
                    raise ConfigError(f"{pair_name} entries must be positive")
        if self.gate_time <= 0 or self.ramp_time < 0:
            raise ConfigError("gate_time must be positive and ramp_time non-negative")
        if self.kappa < 0:
            raise ConfigError("kappa must be non-negative")
        if self.delta1_convention not in ("supplement", "main_text"):
            raise ConfigError("delta1_convention must be 'supplement' or 'main_text'")
        if self.drive_frequency_mode not in ("exact", "analytic"):
            raise ConfigError("drive_frequency_mode must be 'exact' or 'analytic'")
        if max(self.omega_ge, self.omega_ef) > self.lambda_q2 / 3.0:
            warnings.warn(
                "drive amplitudes are not small compared to lambda_q2; the "
                "dressed-state picture behind the gate assumes Omega << lambda",
                stacklevel=2,
            )

    def omega_q(self, j: int) -> float:
        return (self.omega_q1, self.omega_q2)[_qindex(j)]

    def alpha_q(self, j: int) -> float:
        return (self.alpha_q1, self.alpha_q2)[_qindex(j)]

    def lambda_q(self, j: int) -> float:
        return (self.lambda_q1, self.lambda_q2)[_qindex(j)]

    @property
    def rabi_effective(self) -> float:
        """Effective coupling between the bright state and the dressed level."""
        return np.sqrt(self.omega_ge**2 + self.omega_ef**2) / np.sqrt(2.0)


def _qindex(j: int) -> int:
    if j not in (1, 2):
        raise DimensionError(f"qutrit index must be 1 or 2, got {j}")
    return j - 1


def level_energies(params: DeviceParams, j: int, levels: int = 4) -> np.ndarray:
    """Bare anharmonic-ladder energies eps_k = k*omega - k(k-1)/2 * alpha."""
    omega = params.omega_q(j)
    alpha = params.alpha_q(j)
    k = np.arange(levels)
    return k * omega - k * (k - 1) / 2.0 * alpha


def static_hamiltonian(params: DeviceParams, space: HilbertSpace) -> np.ndarray:
    """Rotating-frame system Hamiltonian (drive off).

    Diagonal: eps_{j,k} - k*omega_r per qutrit level.  Couplings: for each
    qutrit, lambda_j times the photon-conserving ladder exchange with the
    sqrt(k+1) matrix elements, so the g-e element is lambda_j, e-f is
    sqrt(2) lambda_j and f-h is sqrt(3) lambda_j.
    """
    h = np.zeros((space.dim, space.dim), dtype=complex)
    a = annihilation(space.fock_dim)
    a_full = embed(a, 2, space)
    for sub, j in ((0, 1), (1, 2)):
        levels = space.levels_q(j)
        eps = level_energies(params, j, levels)
        diag = eps - np.arange(levels) * params.omega_r
        h += embed(np.diag(diag.astype(complex)), sub, space)
        raise_full = embed(qutrit_lowering(levels).conj().T, sub, space)
        coupling = params.lambda_q(j) * (a_full @ raise_full)
        h += coupling + coupling.conj().T
    return h


def flattop_envelope(t, ramp_time: float, plateau_time: float):
    """Flattop envelope: cosine ramp up, unit plateau, cosine ramp down.

    Continuous with continuous first derivative; the integral over the full
    pulse equals plateau_time + ramp_time.
    """
    if ramp_time < 0 or plateau_time < 0:
        raise ValueError("ramp_time and plateau_time must be non-negative")
    arr = np.atleast_1d(np.asarray(t, dtype=float))
    total = 2 * ramp_time + plateau_time
    out = np.zeros_like(arr)
    if ramp_time > 0:
        up = (arr >= 0) & (arr < ramp_time)
        out[up] = 0.5 * (1 - np.cos(np.pi * arr[up] / ramp_time))
        down = (arr > ramp_time + plateau_time) & (arr <= total)
        out[down] = 0.5 * (1 - np.cos(np.pi * (total - arr[down]) / ramp_time))
    flat = (arr >= ramp_time) & (arr <= ramp_time + plateau_time)
    out[flat] = 1.0
    return out if np.ndim(t) else float(out[0])


@dataclass(frozen=True)
class Tone:
    frequency: float  # rad/s, lab frame
    amplitude: float  # rad/s Rabi amplitude
    phase: float      # rad
    transition: str   # "ge" or "ef"


@dataclass(frozen=True)
class PulseSchedule:
    """Two-tone flattop drive applied to Q2."""

    tones: tuple[Tone, ...]
    ramp_time: float
    plateau_time: float

    def __post_init__(self):
        if self.plateau_time < 0:
            raise ConfigError("plateau_time must be non-negative")

    @property
    def duration(self) -> float:
        return 2 * self.ramp_time + self.plateau_time

    def envelope(self, t):
        return flattop_envelope(t, self.ramp_time, self.plateau_time)


def build_schedule(
    params: DeviceParams,
    space: HilbertSpace | None = None,
    drive_frequencies: tuple[float, float] | None = None,
    total_time: float | None = None,
) -> PulseSchedule:
    """Assemble the two-tone flattop schedule for the gate.

    The g-e and e-f tones carry phases 0 and pi.  The plateau is chosen so
    the total pulse length equals the configured gate time.
    """
    if drive_frequencies is None:
        drive_frequencies = compensated_drive_frequencies(params, space)
    wd1, wd2 = drive_frequencies
    total = params.gate_time if total_time is None else total_time
    plateau = total - 2 * params.ramp_time
    if plateau < 0:
        raise ConfigError("gate_time shorter than the two ramps")
    tones = (
        Tone(wd1, params.omega_ge, 0.0, "ge"),
        Tone(wd2, params.omega_ef, np.pi, "ef"),
    )
    return PulseSchedule(tones=tones, ramp_time=params.ramp_time, plateau_time=plateau)


def drive_transition_operators(params: DeviceParams, space: HilbertSpace) -> dict[str, np.ndarray]:
    """Raising parts of the driven Q2 transitions on the full space."""
    levels = space.levels_q2
    ge = np.zeros((levels, levels), dtype=complex)
    ge[1, 0] = 1.0
    ef = np.zeros((levels, levels), dtype=complex)
    ef[2, 1] = 1.0
    return {"ge": embed(ge, 1, space), "ef": embed(ef, 1, space)}


def drive_hamiltonian(
    params: DeviceParams,
    schedule: PulseSchedule,
    t: float,
    space: HilbertSpace,
    operators: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    """Two-tone drive Hamiltonian at time t in the rotating frame.

    Each tone contributes f(t) * Omega * exp(i*phase) * exp(-i (omega_d -
    omega_r) t) on its raising operator plus the Hermitian conjugate.  With
    Q2 on resonance, no Stark compensation and unit envelope this reduces to
    the textbook form Omega_ge e^{i lambda_2 t}|e><g| - Omega_ef
    e^{-i lambda_2 t}|f><e| + h.c. up to the diagonal gauge that keeps the
    f-level energy in the static Hamiltonian.
    """
    if operators is None:
        operators = drive_transition_operators(params, space)
    env = schedule.envelope(t)
    h = np.zeros((space.dim, space.dim), dtype=complex)
    if env == 0.0:
        return h
    for tone in schedule.tones:
        nu = tone.frequency - params.omega_r
        coeff = env * tone.amplitude * np.exp(1j * tone.phase) * np.exp(-1j * nu * t)
        term = coeff * operators[tone.transition]
        if params.crosstalk:
            other = "ef" if tone.transition == "ge" else "ge"
            scale = np.sqrt(2.0) if other == "ef" else 1.0 / np.sqrt(2.0)
            term = term + coeff * scale * operators[other]
        h += term + term.conj().T
    return h


def _branch_energy(eigvals: np.ndarray, eigvecs: np.ndarray, target: np.ndarray) -> float:
    overlaps = np.abs(eigvecs.conj().T @ target) ** 2
    return float(eigvals[int(np.argmax(overlaps))])


def static_branch_energies(params: DeviceParams, space: HilbertSpace) -> dict[str, float]:
    """Frame energies of the eigenstate branches used for drive calibration.

    Diagonalizes the full static Hamiltonian and tags each relevant branch by
    maximum overlap with its unperturbed counterpart: the four computational
    states (with the resonator in vacuum), the bare e levels and the dressed
    level psi_1^- of the Q2-resonator pair with Q1 parked in f.
    """
    h = static_hamiltonian(params, space)
    eigvals, eigvecs = np.linalg.eigh(h)
    targets = {
        "gg0": space.basis_state("g", "g", 0),
        "gf0": space.basis_state("g", "f", 0),
        "fg0": space.basis_state("f", "g", 0),
        "ff0": space.basis_state("f", "f", 0),
        "ge0": space.basis_state("g", "e", 0),
        "eg0": space.basis_state("e", "g", 0),
    }
    psi_minus = (space.basis_state("f", "e", 0) - space.basis_state("f", "g", 1)) / np.sqrt(2)
    targets["f_psi1m"] = psi_minus
    return {name: _branch_energy(eigvals, eigvecs, vec) for name, vec in targets.items()}


def drive_stark_corrections(params: DeviceParams) -> tuple[float, float]:
    """Second-order drive-induced shifts of the two gate transitions.

    The g-e tone repels g_2 0 from psi_1^+ and psi_1^- from psi_2^+-, the e-f
    tone repels f_2 0 from psi_1^+.  The resulting transition corrections are
    antisymmetric for equal drive amplitudes, preserving two-photon resonance.
    """
    l2 = params.lambda_q2
    shift_g = -params.omega_ge**2 / (4.0 * l2)
    shift_f = -params.omega_ef**2 / (4.0 * l2)
    shift_psi = -(params.omega_ge**2 / 4.0) * (
        1.0 / ((2.0 - np.sqrt(2.0)) * l2) + 1.0 / ((2.0 + np.sqrt(2.0)) * l2)
    )
    return (shift_psi - shift_g, shift_f - shift_psi)


def compensated_drive_frequencies(
    params: DeviceParams, space: HilbertSpace | None = None
) -> tuple[float, float]:
    """Stark-compensated frequencies of the two drive tones.

    In 'analytic' mode the tones sit at omega_r - lambda_2 - delta_1 - delta_2
    and omega_f2 - omega_r + lambda_2 + delta_1 + delta_2, with delta_1 the
    drive-induced shift and delta_2 the photon/h-level shift of the dressed
    level; their sum equals the bare f_2 energy exactly (two-photon
    resonance).

    In 'exact' mode (default) the tones are placed on the transition
    frequencies of the static model obtained from full diagonalization, plus
    the second-order drive shifts of the transitions.  This additionally
    accounts for the level repulsion of the f levels by the ladder couplings,
    which the closed-form shifts do not cover; the two modes agree to a few
    MHz at the default device parameters.
    """
    if params.drive_frequency_mode == "analytic":
        from .dressed import stark_delta1, stark_delta2

        delta1 = stark_delta1(params.omega_ge, params.lambda_q2,
                              convention=params.delta1_convention)
        delta2 = stark_delta2(params.lambda_q1, params.alpha_q1,
                              params.lambda_q2).delta2_total
        wd1 = params.omega_r - params.lambda_q2 - delta1 + delta2
        omega_f2 = 2.0 * params.omega_q2 - params.alpha_q2
        wd2 = omega_f2 - wd1
        return (wd1, wd2)

    if space is None:
        space = HilbertSpace()
    branches = static_branch_energies(params, space)
    t1 = branches["f_psi1m"] - branches["fg0"]
    t2 = branches["ff0"] - branches["f_psi1m"]
    c1, c2 = drive_stark_corrections(params)
    return (params.omega_r + t1 + c1, params.omega_r + t2 + c2)


# ---------------------------------------------------------------------------
# configuration files

_CONFIG_FREQ_KEYS = {
    "omega_r_mhz": "omega_r",
    "omega_q1_mhz": "omega_q1",
    "omega_q2_mhz": "omega_q2",
    "alpha_q1_mhz": "alpha_q1",
    "alpha_q2_mhz": "alpha_q2",
    "lambda_q1_mhz": "lambda_q1",
    "lambda_q2_mhz": "lambda_q2",
    "omega_ge_mhz": "omega_ge",
    "omega_ef_mhz": "omega_ef",
    "kappa_mhz": "kappa",
}

_CONFIG_TIME_KEYS = {
    "t1_e_q1_ns": ("t1_e", 0),
    "t1_e_q2_ns": ("t1_e", 1),
    "t1_f_q1_ns": ("t1_f", 0),
    "t1_f_q2_ns": ("t1_f", 1),
    "tphi_q1_ns": ("tphi", 0),
    "tphi_q2_ns": ("tphi", 1),
    "gate_time_ns": ("gate_time", None),
    "ramp_time_ns": ("ramp_time", None),
}

_CONFIG_DIM_KEYS = {"levels_q1", "levels_q2", "fock_dim"}

_CONFIG_STR_KEYS = {"delta1_convention", "drive_frequency_mode"}

_CONFIG_BOOL_KEYS = {"crosstalk"}


def parse_config_text(text: str, origin: str = "<config>") -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigError(f"{origin}:{lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def load_device_config(path: str) -> tuple[DeviceParams, HilbertSpace]:
    """Load device parameters and space dimensions from a key-value file.

    Frequencies are linear MHz, times nanoseconds.  Unknown keys are errors.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    entries = parse_config_text(text, origin=str(path))

    values: dict[str, object] = {}
    pairs: dict[str, list[float | None]] = {"t1_e": [None, None], "t1_f": [None, None],
                                            "tphi": [None, None]}
    dims: dict[str, int] = {}
    for key, raw in entries.items():
        if key in _CONFIG_FREQ_KEYS:
            values[_CONFIG_FREQ_KEYS[key]] = _parse_float(key, raw, path) * MHZ
        elif key in _CONFIG_TIME_KEYS:
            name, idx = _CONFIG_TIME_KEYS[key]
            seconds = _parse_float(key, raw, path) * NS
            if idx is None:
                values[name] = seconds
            else:
                pairs[name][idx] = seconds
        elif key in _CONFIG_DIM_KEYS:
            dims[key] = int(_parse_float(key, raw, path))
        elif key in _CONFIG_STR_KEYS:
            values[key] = raw
        elif key in _CONFIG_BOOL_KEYS:
            values[key] = raw.strip().lower() in ("1", "true", "yes", "on")
        else:
            raise ConfigError(f"{path}: unknown key {key!r}")

    for name, pair in pairs.items():
        if any(v is not None for v in pair):
            if any(v is None for v in pair):
                raise ConfigError(f"{path}: both qutrit entries required for {name}")
            values[name] = tuple(pair)

    required = {"omega_r", "omega_q1", "omega_q2", "alpha_q1", "alpha_q2",
                "lambda_q1", "lambda_q2", "omega_ge", "omega_ef", "t1_e", "t1_f"}
    missing = sorted(required - set(values))
    if missing:
        raise ConfigError(f"{path}: missing required keys for {', '.join(missing)}")

    try:
        params = DeviceParams(**values)  # type: ignore[arg-type]
        space = HilbertSpace(**{k: dims.get(k, 4) for k in _CONFIG_DIM_KEYS})
    except (ConfigError, DimensionError):
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return params, space


def _parse_float(key: str, raw: str, path: str) -> float:
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{path}: value for {key!r} is not a number: {raw!r}") from exc


def default_config_path() -> str:
    resource = importlib.resources.files("holocnot").joinpath("data/table1_device.cfg")
    return str(resource)


def default_device() -> tuple[DeviceParams, HilbertSpace]:
    return load_device_config(default_config_path())
