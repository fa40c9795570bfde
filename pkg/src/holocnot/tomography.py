"""Measurement simulation and process-matrix reconstruction.

The measurement protocol mirrors the experiment: after the gate each qutrit
receives a pi rotation on its e-f transition, then one of the tomographic
operations {I, X/2, Y/2} in the {g, e} subspace, then a projective readout
in the qutrit basis.  Outcome labels are re-expressed in the computational
frame (the e-f swap exchanges the e and f labels), and only the {g, f}
probabilities enter the reconstruction, so any weight left in the auxiliary
e level shows up as a trace deficit rather than being renormalized away.

Density matrices are fitted by unconstrained least squares in a Hermitian
parameterization and projected to the positive cone by eigenvalue clipping;
the chi matrix likewise, in the two-qubit Pauli operator basis ordered
II, IX, IY, IZ, XI, ..., ZZ with |g> = |0> and |f> = |1>.  No unit-trace
constraint is applied anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .hilbert import HilbertSpace, partial_trace_resonator

SETTING_LABELS = ("I", "X/2", "Y/2")

_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

PAULI_ORDER = tuple(a + b for a in "IXYZ" for b in "IXYZ")


@lru_cache(maxsize=None)
def pauli_basis() -> np.ndarray:
    """Stacked two-qubit Pauli operators (16, 4, 4) in the fixed order."""
    mats = [np.kron(_PAULI_1Q[p[0]], _PAULI_1Q[p[1]]) for p in PAULI_ORDER]
    out = np.stack(mats)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class TomographySetting:
    q1: str
    q2: str

    def __post_init__(self):
        for label in (self.q1, self.q2):
            if label not in SETTING_LABELS:
                raise ValueError(f"unknown tomographic operation {label!r}")


def measurement_settings() -> list[TomographySetting]:
    return [TomographySetting(a, b) for a in SETTING_LABELS for b in SETTING_LABELS]


@dataclass(frozen=True)
class TomographyRecord:
    """Outcome probabilities of one setting, in computational labels.

    probabilities is the 3x3 joint distribution over {g, e, f} x {g, e, f}
    after relabeling; retained is the {g, f} x {g, f} block used for
    reconstruction.
    """

    setting: TomographySetting
    probabilities: np.ndarray
    retained: np.ndarray
    shots: int | None = None


def input_states() -> list[np.ndarray]:
    """The 36 two-qubit product input states, row-major over the 6-state set."""
    s = 1.0 / np.sqrt(2.0)
    singles = [
        np.array([1.0, 0.0], dtype=complex),
        np.array([s, -1j * s], dtype=complex),
        np.array([s, 1j * s], dtype=complex),
        np.array([s, s], dtype=complex),
        np.array([s, -s], dtype=complex),
        np.array([0.0, 1.0], dtype=complex),
    ]
    return [np.kron(a, b) for a in singles for b in singles]


INPUT_LABELS = tuple(f"{a}{b}" for a in ("g", "-iy", "+iy", "+x", "-x", "f")
                     for b in ("g", "-iy", "+iy", "+x", "-x", "f"))


# ---------------------------------------------------------------------------
# measurement simulation


def _single_qutrit_unitary(operation: str, levels: int) -> np.ndarray:
    """e-f pi rotation followed by the tomographic {g, e} operation."""
    ef = np.eye(levels, dtype=complex)
    ef[1, 1] = ef[2, 2] = 0.0
    ef[1, 2] = ef[2, 1] = -1j
    rot = np.eye(levels, dtype=complex)
    c = np.cos(np.pi / 4.0)
    s = np.sin(np.pi / 4.0)
    if operation == "X/2":
        rot[0, 0] = rot[1, 1] = c
        rot[0, 1] = rot[1, 0] = -1j * s
    elif operation == "Y/2":
        rot[0, 0] = rot[1, 1] = c
        rot[0, 1] = -s
        rot[1, 0] = s
    return rot @ ef


def _readout_projectors(levels: int) -> list[np.ndarray]:
    """Three-outcome qutrit readout; levels above f are binned into f."""
    pg = np.zeros((levels, levels), dtype=complex)
    pg[0, 0] = 1.0
    pe = np.zeros((levels, levels), dtype=complex)
    pe[1, 1] = 1.0
    pf = np.zeros((levels, levels), dtype=complex)
    for k in range(2, levels):
        pf[k, k] = 1.0
    return [pg, pe, pf]


@lru_cache(maxsize=None)
def _setting_effects(dims: tuple[int, int]) -> dict:
    """Physical-outcome POVM effects per setting, plus retained-block effects.

    Returns per setting a (3, 3, D, D) array over physical outcomes and a
    (2, 2, D, D) array over the retained computational outcomes, where the
    retained (x, y) in {g, f} corresponds to physical (g or e) after the
    label swap.
    """
    l1, l2 = dims
    effects = {}
    for setting in measurement_settings():
        u1 = _single_qutrit_unitary(setting.q1, l1)
        u2 = _single_qutrit_unitary(setting.q2, l2)
        p1 = [u1.conj().T @ p @ u1 for p in _readout_projectors(l1)]
        p2 = [u2.conj().T @ p @ u2 for p in _readout_projectors(l2)]
        full = np.stack([
            np.stack([np.kron(a, b) for b in p2]) for a in p1
        ])  # (3, 3, D, D) physical outcome order (g, e, f)
        retained = full[np.ix_((0, 1), (0, 1))]  # physical g/e = logical g/f
        effects[(setting.q1, setting.q2)] = (full, retained)
    return effects


_RELABEL = np.array([0, 2, 1])  # physical (g, e, f) -> logical positions


def simulate_measurement(
    rho,
    setting: TomographySetting,
    dims: tuple[int, int] = (4, 4),
    shots: int | None = None,
    rng: np.random.Generator | None = None,
    space: HilbertSpace | None = None,
) -> TomographyRecord:
    """Joint readout probabilities for one tomographic setting.

    rho is a two-qutrit density matrix (or a full-space state if `space` is
    given, in which case the resonator is traced out first).  With `shots`
    the exact distribution is replaced by a multinomial sample.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    if space is not None and rho.shape[0] == space.dim:
        rho = partial_trace_resonator(rho, space)
        dims = (space.levels_q1, space.levels_q2)
    full, _ = _setting_effects(dims)[(setting.q1, setting.q2)]
    probs_phys = np.real(np.einsum("xyab,ba->xy", full, rho))
    probs_phys = np.clip(probs_phys, 0.0, None)
    if shots is not None:
        if rng is None:
            raise ValueError("shot sampling requires a seeded random generator")
        flat = probs_phys.ravel()
        counts = rng.multinomial(shots, flat / flat.sum())
        probs_phys = counts.reshape(3, 3) / shots
    probs_logical = probs_phys[np.ix_(_RELABEL, _RELABEL)]
    retained = probs_logical[np.ix_((0, 2), (0, 2))]
    return TomographyRecord(setting=setting, probabilities=probs_logical,
                            retained=retained, shots=shots)


# ---------------------------------------------------------------------------
# density-matrix reconstruction


def _comp_embedding(dims: tuple[int, int]) -> np.ndarray:
    """Isometry from the 4-dim computational space into the qutrit pair."""
    l1, l2 = dims
    v = np.zeros((l1 * l2, 4), dtype=complex)
    comp_levels = (0, 2)
    col = 0
    for c in comp_levels:
        for d in comp_levels:
            v[c * l2 + d, col] = 1.0
            col += 1
    return v


@lru_cache(maxsize=None)
def _density_design(dims: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix mapping Pauli coordinates of rho to retained data."""
    v = _comp_embedding(dims)
    basis = np.stack([v @ p @ v.conj().T for p in pauli_basis()])
    effects = _setting_effects(dims)
    rows = []
    for setting in measurement_settings():
        _, retained = effects[(setting.q1, setting.q2)]
        for x in range(2):
            for y in range(2):
                rows.append(np.real(np.einsum("ab,kba->k", retained[x, y], basis)))
    a = np.array(rows)
    return a, np.linalg.pinv(a)


def psd_clip(matrix: np.ndarray) -> np.ndarray:
    """Project a Hermitian matrix onto the positive cone (no renormalization)."""
    w, v = np.linalg.eigh(matrix)
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.conj().T


def reconstruct_density(records: list[TomographyRecord], dims: tuple[int, int] = (4, 4)) -> np.ndarray:
    """Least-squares fit of the computational-space density matrix.

    Fits the 16 real Pauli coordinates to the retained probabilities of all
    nine settings, enforces positivity by eigenvalue clipping and leaves the
    trace untouched, so leakage appears as trace below one.
    """
    if len(records) != 9:
        raise ValueError("all nine tomographic settings are required")
    order = {(s.q1, s.q2): i for i, s in enumerate(measurement_settings())}
    data = np.zeros(36)
    seen = set()
    for record in records:
        key = (record.setting.q1, record.setting.q2)
        if key in seen:
            raise ValueError(f"duplicate setting {key}")
        seen.add(key)
        data[order[key] * 4:order[key] * 4 + 4] = record.retained.ravel()
    a, pinv = _density_design(dims)
    if np.linalg.matrix_rank(a) < 16:
        raise np.linalg.LinAlgError("rank-deficient tomography design matrix")
    coords = pinv @ data
    rho = np.tensordot(coords, pauli_basis(), axes=1)
    return psd_clip(rho)


# ---------------------------------------------------------------------------
# chi matrix


def pauli_coordinates(matrix: np.ndarray) -> np.ndarray:
    """Real coordinates tr(P_a M) of a Hermitian 4x4 matrix."""
    return np.real(np.einsum("kab,ba->k", pauli_basis(), matrix))


def chi_of_unitary(u: np.ndarray) -> np.ndarray:
    """Rank-one process matrix of a two-qubit unitary, unit trace."""
    basis = pauli_basis()
    coeffs = np.einsum("kab,ba->k", basis.conj().transpose(0, 2, 1), u) / 4.0
    return np.outer(coeffs, coeffs.conj())


def chi_of_kraus(kraus: list[np.ndarray]) -> np.ndarray:
    """Process matrix of a channel given by Kraus operators."""
    basis = pauli_basis()
    chi = np.zeros((16, 16), dtype=complex)
    for k in kraus:
        coeffs = np.einsum("kab,ba->k", basis.conj().transpose(0, 2, 1), k) / 4.0
        chi += np.outer(coeffs, coeffs.conj())
    return chi


def apply_chi(chi: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Evaluate the channel sum_mn chi_mn E_m rho E_n+."""
    basis = pauli_basis()
    return np.einsum("mn,mab,bc,ndc->ad", chi, basis, rho, basis.conj())


def chi_ideal_cnot() -> np.ndarray:
    """Process matrix of the gate that flips the target iff the control is f."""
    cnot = np.eye(4, dtype=complex)[[0, 1, 3, 2]]
    return chi_of_unitary(cnot)


def _chi_design(inputs: list[np.ndarray]) -> np.ndarray:
    """Real design matrix mapping Hermitian chi parameters to output coords."""
    basis = pauli_basis()
    n = len(inputs)
    t = np.zeros((n, 16, 16, 16), dtype=complex)  # (input, m, n, coord)
    for k, state in enumerate(inputs):
        rho = np.outer(state, state.conj())
        sandwich = np.einsum("mab,bc,ndc->mnad", basis, rho, basis.conj())
        t[k] = np.einsum("pab,mnba->mnp", basis, sandwich)
    a = np.zeros((n * 16, 256))
    col = 0
    for m in range(16):
        a[:, col] = np.real(t[:, m, m, :]).reshape(-1)
        col += 1
    for m in range(16):
        for nn in range(m + 1, 16):
            a[:, col] = 2.0 * np.real(t[:, m, nn, :]).reshape(-1)
            a[:, col + 1] = -2.0 * np.imag(t[:, m, nn, :]).reshape(-1)
            col += 2
    return a


def _assemble_chi(theta: np.ndarray) -> np.ndarray:
    chi = np.zeros((16, 16), dtype=complex)
    col = 0
    for m in range(16):
        chi[m, m] = theta[col]
        col += 1
    for m in range(16):
        for nn in range(m + 1, 16):
            chi[m, nn] = theta[col] + 1j * theta[col + 1]
            chi[nn, m] = theta[col] - 1j * theta[col + 1]
            col += 2
    return chi


@lru_cache(maxsize=1)
def _standard_chi_pinv() -> np.ndarray:
    return np.linalg.pinv(_chi_design(input_states()))


def reconstruct_chi(pairs: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Least-squares process matrix from 36 input/output pairs.

    Hermiticity is built into the parameterization; positivity is enforced
    by eigenvalue clipping.  The trace is not constrained, so leakage out of
    the computational space lowers it below one.
    """
    if len(pairs) != len(input_states()):
        raise ValueError("expected one pair per tomography input state")
    standard = input_states()
    states = [np.asarray(p[0], dtype=complex) for p in pairs]
    if all(np.allclose(s, t, atol=1e-12) for s, t in zip(states, standard)):
        pinv = _standard_chi_pinv()
    else:
        pinv = np.linalg.pinv(_chi_design(states))
    data = np.concatenate([pauli_coordinates(np.asarray(out, dtype=complex))
                           for _, out in pairs])
    theta = pinv @ data
    return psd_clip(_assemble_chi(theta))


def process_fidelity(chi_meas: np.ndarray, chi_id: np.ndarray) -> float:
    """Overlap tr(chi_id chi_meas) of a measured channel with the ideal one."""
    chi_meas = np.asarray(chi_meas)
    chi_id = np.asarray(chi_id)
    if chi_meas.shape != (16, 16) or chi_id.shape != (16, 16):
        raise ValueError("process matrices must be 16x16")
    value = np.trace(chi_id @ chi_meas)
    if abs(value.imag) > 1e-10:
        raise ValueError(f"process fidelity has non-negligible imaginary part {value.imag:.2e}")
    return float(value.real)


# ---------------------------------------------------------------------------
# state metrics and leakage


def state_fidelity(rho: np.ndarray, target: np.ndarray) -> float:
    """Overlap <psi|rho|psi> with a pure target state."""
    rho = np.asarray(rho, dtype=complex)
    target = np.asarray(target, dtype=complex)
    if target.ndim != 1:
        raise ValueError("target must be a pure state vector")
    return float(np.real(target.conj() @ rho @ target))


def concurrence(rho: np.ndarray) -> float:
    """Two-qubit concurrence via the spin-flip construction."""
    rho = np.asarray(rho, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T)) > 1e-8:
        raise ValueError("density matrix must be Hermitian")
    yy = np.kron(_PAULI_1Q["Y"], _PAULI_1Q["Y"])
    rho_tilde = yy @ rho.conj() @ yy
    mu = np.linalg.eigvals(rho @ rho_tilde)
    mu = np.sqrt(np.clip(np.real(mu), 0.0, None))
    mu.sort()
    return float(max(0.0, mu[-1] - mu[-2] - mu[-3] - mu[-4]))


@dataclass(frozen=True)
class LeakageReport:
    per_input: np.ndarray  # (n_inputs, 2) e populations per qutrit
    average: np.ndarray    # (2,)


def leakage_report(final_states, space: HilbertSpace) -> LeakageReport:
    """Average population of the auxiliary e level per qutrit.

    Accepts full-space kets or density matrices; only populations enter, so
    the diagonal suffices.
    """
    per_input = []
    for state in final_states:
        state = np.asarray(state)
        if state.ndim == 1:
            pops = np.abs(state) ** 2
        else:
            pops = np.real(np.diag(state))
        pops = pops.reshape(space.dims)
        per_input.append([float(pops[1, :, :].sum()), float(pops[:, 1, :].sum())])
    per_input = np.array(per_input)
    return LeakageReport(per_input=per_input, average=per_input.mean(axis=0))
