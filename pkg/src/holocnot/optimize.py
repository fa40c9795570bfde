"""Gate-fidelity objective, calibration and the reported parameter sweeps.

The objective runs the complete pipeline: compensated pulse build, full
propagation of the computational block (Schrodinger, or the master equation
with the device decoherence rates), resonator trace-out, simulated
tomography of the 36 product input states, least-squares reconstruction of
the process matrix and its overlap with the ideal gate.

Calibration is derivative-free: a coarse scan of the evolution time seeds a
Nelder-Mead refinement over (gate time, control frequency, target
frequency), all within fixed physical bounds.  Everything is deterministic
for identical inputs.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from . import tomography as tomo
from .hilbert import HilbertSpace
from .model import MHZ, DeviceParams, build_schedule, compensated_drive_frequencies
from .evolve import (
    DEFAULT_STEP,
    closed_gate,
    collapse_set,
    computational_indices,
    hamiltonian_callable,
    lindblad_propagate_batch,
    phase_reference,
    pulse_propagator,
)

WORKERS_ENV = "HOLOCNOT_WORKERS"


@dataclass(frozen=True)
class ChannelResult:
    """Action of the simulated pulse on the computational block.

    sigma_full[i, j] is the full-space image of |i><j| (computational basis
    states with the resonator in vacuum), already rotated into the
    single-qutrit reference frames.  sigma_qutrit is the same after tracing
    out the resonator.
    """

    sigma_full: np.ndarray    # (4, 4, D, D)
    sigma_qutrit: np.ndarray  # (4, 4, dq, dq)
    drive_frequencies: tuple[float, float]
    duration: float
    with_decoherence: bool

    def output_qutrit(self, coeffs: np.ndarray) -> np.ndarray:
        """Two-qutrit output density matrix for a computational input ket."""
        return np.einsum("i,j,ijab->ab", coeffs, np.conj(coeffs), self.sigma_qutrit)

    def output_full(self, coeffs: np.ndarray) -> np.ndarray:
        return np.einsum("i,j,ijab->ab", coeffs, np.conj(coeffs), self.sigma_full)


def _trace_out_resonator_batch(sigma: np.ndarray, space: HilbertSpace) -> np.ndarray:
    d1, d2, nf = space.dims
    r = sigma.reshape(4, 4, d1 * d2, nf, d1 * d2, nf)
    return np.einsum("ijanbn->ijab", r)


def simulate_channel(
    params: DeviceParams,
    space: HilbertSpace,
    with_decoherence: bool,
    step: float = DEFAULT_STEP,
    drive_frequency_offset: float = 0.0,
) -> ChannelResult:
    """Propagate the computational block through the full pulse."""
    freqs = compensated_drive_frequencies(params, space)
    freqs = (freqs[0] + drive_frequency_offset, freqs[1] + drive_frequency_offset)
    schedule = build_schedule(params, space, drive_frequencies=freqs)
    comp = computational_indices(space)
    ref = phase_reference(params, space, schedule.duration)
    if not with_decoherence:
        u = pulse_propagator(params, schedule, space, step=step)
        outputs = ref[:, None] * u[:, comp]
        sigma_full = np.einsum("ai,bj->ijab", outputs, outputs.conj())
    else:
        basis = np.zeros((16, space.dim, space.dim), dtype=complex)
        for i, a in enumerate(comp):
            for j, b in enumerate(comp):
                basis[i * 4 + j, a, b] = 1.0
        fn = hamiltonian_callable(params, schedule, space)
        collapse = collapse_set(params, space)
        final = lindblad_propagate_batch(fn, collapse, basis, (0.0, schedule.duration),
                                         step=step)
        sigma_full = (ref[None, :, None] * final * ref.conj()[None, None, :]).reshape(
            4, 4, space.dim, space.dim)
    return ChannelResult(
        sigma_full=sigma_full,
        sigma_qutrit=_trace_out_resonator_batch(sigma_full, space),
        drive_frequencies=freqs,
        duration=schedule.duration,
        with_decoherence=with_decoherence,
    )


def channel_chi(channel: ChannelResult, space: HilbertSpace,
                shots: int | None = None,
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Process matrix reconstructed from simulated tomography of the channel."""
    dims = (space.levels_q1, space.levels_q2)
    pairs = []
    for state in tomo.input_states():
        rho_q = channel.output_qutrit(state)
        records = [tomo.simulate_measurement(rho_q, s, dims=dims, shots=shots, rng=rng)
                   for s in tomo.measurement_settings()]
        pairs.append((state, tomo.reconstruct_density(records, dims=dims)))
    return tomo.reconstruct_chi(pairs)


def fidelity_objective(
    params: DeviceParams,
    space: HilbertSpace,
    with_decoherence: bool,
    step: float = DEFAULT_STEP,
    drive_frequency_offset: float = 0.0,
) -> float:
    """Process fidelity of the simulated gate against the ideal one."""
    channel = simulate_channel(params, space, with_decoherence, step=step,
                               drive_frequency_offset=drive_frequency_offset)
    chi = channel_chi(channel, space)
    return tomo.process_fidelity(chi, tomo.chi_ideal_cnot())


@dataclass(frozen=True)
class OptimizationResult:
    gate_time: float
    omega_q1: float
    omega_q2: float
    fidelity: float
    evaluations: int
    converged: bool

    def apply(self, params: DeviceParams) -> DeviceParams:
        return replace(params, gate_time=self.gate_time,
                       omega_q1=self.omega_q1, omega_q2=self.omega_q2)


def default_bounds(params: DeviceParams) -> dict[str, tuple[float, float]]:
    """Search bounds: time within [0.5, 2] pi/Omega, frequencies near the bus."""
    t_pi = np.pi / params.rabi_effective
    return {
        "gate_time": (0.5 * t_pi, 2.0 * t_pi),
        "omega_q1": (params.omega_r - 30.0 * MHZ, params.omega_r + 30.0 * MHZ),
        "omega_q2": (params.omega_r - 2.0 * MHZ, params.omega_r + 2.0 * MHZ),
    }


def calibrate(
    params: DeviceParams,
    space: HilbertSpace,
    free: tuple[str, ...] = ("gate_time", "omega_q1", "omega_q2"),
    bounds: dict[str, tuple[float, float]] | None = None,
    budget: int = 150,
    step: float = 0.1e-9,
    time_grid_points: int = 7,
) -> OptimizationResult:
    """Derivative-free calibration of the gate against the closed-system
    objective.

    A coarse scan over the evolution time (at the configured frequencies)
    seeds a Nelder-Mead simplex over the free parameters.  Identical inputs
    give identical results; the evaluation budget caps the total number of
    objective calls.
    """
    if budget < 50:
        raise ValueError("calibration needs a budget of at least 50 evaluations")
    all_bounds = default_bounds(params)
    if bounds:
        all_bounds.update(bounds)
    for name in free:
        if name not in all_bounds:
            raise ValueError(f"unknown calibration parameter {name!r}")

    evaluations = 0

    def run(values: dict[str, float]) -> float:
        nonlocal evaluations
        evaluations += 1
        trial = replace(params, **values)
        return fidelity_objective(trial, space, with_decoherence=False, step=step)

    current = {name: getattr(params, name) for name in free}

    # coarse time scan around the pulse-area condition
    if "gate_time" in free:
        t_pi = np.pi / params.rabi_effective + params.ramp_time
        lo, hi = all_bounds["gate_time"]
        grid = np.clip(t_pi * np.linspace(0.85, 1.1, time_grid_points), lo, hi)
        best_t, best_f = None, -np.inf
        for t in grid:
            f = run({**current, "gate_time": t})
            if f > best_f:
                best_t, best_f = t, f
        current["gate_time"] = float(best_t)

    # simplex refinement in normalized coordinates
    names = list(free)
    scales = {"gate_time": 20e-9, "omega_q1": 8.0 * MHZ, "omega_q2": 1.0 * MHZ}
    x0 = np.array([current[n] for n in names])
    scale = np.array([scales[n] for n in names])

    def objective(x: np.ndarray) -> float:
        values = dict(current)
        penalty = 0.0
        for name, xi in zip(names, x0 + x * scale):
            lo, hi = all_bounds[name]
            clipped = min(max(xi, lo), hi)
            penalty += abs(xi - clipped) / (hi - lo)
            values[name] = clipped
        return 1.0 - run(values) + 10.0 * penalty

    remaining = max(budget - evaluations, 20)
    result = minimize(
        objective,
        np.zeros(len(names)),
        method="Nelder-Mead",
        options={"maxfev": remaining, "xatol": 1e-3, "fatol": 1e-6,
                 "initial_simplex": _initial_simplex(len(names))},
    )
    final = dict(current)
    for name, xi in zip(names, x0 + result.x * scale):
        lo, hi = all_bounds[name]
        final[name] = float(min(max(xi, lo), hi))
    tuned = replace(params, **final)
    fidelity = fidelity_objective(tuned, space, with_decoherence=False, step=step)
    evaluations += 1
    return OptimizationResult(
        gate_time=final.get("gate_time", params.gate_time),
        omega_q1=final.get("omega_q1", params.omega_q1),
        omega_q2=final.get("omega_q2", params.omega_q2),
        fidelity=float(fidelity),
        evaluations=evaluations,
        converged=bool(result.success),
    )


def _initial_simplex(n: int) -> np.ndarray:
    simplex = np.zeros((n + 1, n))
    for i in range(n):
        simplex[i + 1, i] = 0.5
    return simplex


# ---------------------------------------------------------------------------
# reported sweeps

TABLE_CONFIGS = (
    # (alpha / 2pi GHz, drive amplitude / 2pi MHz)
    (0.247, 2.3), (0.5, 2.3), (0.8, 2.3), (1.0, 2.3), (2.0, 2.3),
    (0.247, 2.3), (0.247, 1.8), (0.247, 1.5), (0.247, 1.0), (0.247, 0.5),
    (1.0, 1.5),
)


@dataclass(frozen=True)
class TableRow:
    alpha_ghz: float
    drive_mhz: float
    gate_time_ns: float
    fidelity_with_decoherence: float
    fidelity_without_decoherence: float


def _config_params(base: DeviceParams, alpha_ghz: float, drive_mhz: float) -> DeviceParams:
    return replace(
        base,
        alpha_q1=alpha_ghz * 1e3 * MHZ,
        alpha_q2=alpha_ghz * 1e3 * MHZ,
        omega_ge=drive_mhz * MHZ,
        omega_ef=drive_mhz * MHZ,
    )


def propagation_step(params: DeviceParams, base_step: float = DEFAULT_STEP) -> float:
    """Step size bounded by the fastest drive-phase rotation rate."""
    nu_max = max(abs(f - params.omega_r)
                 for f in compensated_drive_frequencies(params))
    if nu_max == 0.0:
        return base_step
    return float(min(base_step, 0.25 / nu_max))


def evaluate_config(
    base: DeviceParams,
    space: HilbertSpace,
    alpha_ghz: float,
    drive_mhz: float,
    budget: int = 150,
    final_step: float | None = None,
) -> TableRow:
    """Calibrate one sweep configuration and evaluate both fidelities."""
    params = _config_params(base, alpha_ghz, drive_mhz)
    coarse = propagation_step(params, base_step=2.0 * DEFAULT_STEP)
    result = calibrate(params, space, budget=budget, step=coarse)
    tuned = result.apply(params)
    fine = final_step if final_step is not None else propagation_step(tuned)
    f_closed = fidelity_objective(tuned, space, with_decoherence=False, step=fine)
    f_open = fidelity_objective(tuned, space, with_decoherence=True, step=fine)
    return TableRow(
        alpha_ghz=alpha_ghz,
        drive_mhz=drive_mhz,
        gate_time_ns=result.gate_time * 1e9,
        fidelity_with_decoherence=float(f_open),
        fidelity_without_decoherence=float(f_closed),
    )


def _worker_count() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _table_task(args):
    base, space, alpha, drive, budget = args
    return evaluate_config(base, space, alpha, drive, budget=budget)


def table2_sweep(
    base: DeviceParams,
    space: HilbertSpace,
    budget: int = 150,
    parallel: bool = True,
) -> list[TableRow]:
    """Calibrated fidelity table over the published sweep configurations.

    Duplicate configurations are computed once and repeated in the output.
    """
    unique = []
    for cfg in TABLE_CONFIGS:
        if cfg not in unique:
            unique.append(cfg)
    tasks = [(base, space, a, d, budget) for a, d in unique]
    if parallel and _worker_count() > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(_worker_count(), len(tasks))) as pool:
            rows = list(pool.map(_table_task, tasks))
    else:
        rows = [_table_task(t) for t in tasks]
    by_config = {(r.alpha_ghz, r.drive_mhz): r for r in rows}
    return [by_config[cfg] for cfg in TABLE_CONFIGS]


@dataclass(frozen=True)
class SweepResult:
    alpha_ghz: np.ndarray
    lambda_mhz: np.ndarray
    fidelity: np.ndarray      # (n_alpha, n_lambda)
    gate_time_ns: np.ndarray  # (n_alpha, n_lambda)
    threshold: float = 0.99

    @property
    def meets_threshold(self) -> np.ndarray:
        return self.fidelity >= self.threshold


def _sweep_task(args):
    base, space, alpha, lam, budget = args
    params = replace(
        base,
        alpha_q1=alpha * 1e3 * MHZ,
        alpha_q2=alpha * 1e3 * MHZ,
        lambda_q1=lam * MHZ,
        lambda_q2=lam * MHZ,
        omega_ge=2.0 * MHZ,
        omega_ef=2.0 * MHZ,
    )
    coarse = propagation_step(params, base_step=2.0 * DEFAULT_STEP)
    result = calibrate(params, space, budget=budget, step=coarse)
    tuned = result.apply(params)
    fid = fidelity_objective(tuned, space, with_decoherence=False,
                             step=propagation_step(tuned))
    return (alpha, lam, fid, result.gate_time * 1e9)


def sweep_2d(
    alpha_grid_ghz,
    lambda_grid_mhz,
    base: DeviceParams,
    space: HilbertSpace,
    budget: int = 150,
    parallel: bool = True,
) -> SweepResult:
    """Calibrated no-decoherence fidelity over an (anharmonicity, coupling)
    grid at a fixed 2 MHz drive amplitude.  Grids are magnitudes."""
    alpha_grid = np.asarray(list(alpha_grid_ghz), dtype=float)
    lambda_grid = np.asarray(list(lambda_grid_mhz), dtype=float)
    if alpha_grid.size == 0 or lambda_grid.size == 0:
        raise ValueError("sweep grids must be non-empty")
    tasks = [(base, space, float(a), float(l), budget)
             for a in alpha_grid for l in lambda_grid]
    if parallel and _worker_count() > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(_worker_count(), len(tasks))) as pool:
            results = list(pool.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    fid = np.zeros((alpha_grid.size, lambda_grid.size))
    times = np.zeros_like(fid)
    for (a, l, f, t), idx in zip(results, np.ndindex(alpha_grid.size, lambda_grid.size)):
        fid[idx] = f
        times[idx] = t
    return SweepResult(alpha_ghz=alpha_grid, lambda_mhz=lambda_grid,
                       fidelity=fid, gate_time_ns=times)


@dataclass(frozen=True)
class RobustnessPoint:
    offset: float          # rad/s common shift of both tones
    infidelity: float
    excess_infidelity: float
    analytic_estimate: float


def robustness_scan(
    params: DeviceParams,
    space: HilbertSpace,
    offsets,
    step: float | None = None,
) -> list[RobustnessPoint]:
    """Infidelity versus a common detuning of both drive tones.

    No re-calibration is performed.  The analytic fourth-power estimate
    (pi offset^2 / (8 Omega^2))^2 is reported alongside; the excess column
    is the simulated infidelity minus the zero-offset baseline.
    """
    offsets = np.asarray(list(offsets), dtype=float)
    if np.any(np.abs(offsets) > params.rabi_effective * np.sqrt(2.0)):
        raise ValueError("offsets must stay below the drive amplitude")
    use_step = step if step is not None else propagation_step(params)
    baseline = 1.0 - fidelity_objective(params, space, with_decoherence=False,
                                        step=use_step)
    points = []
    for off in offsets:
        if off == 0.0:
            infid = baseline
        else:
            infid = 1.0 - fidelity_objective(params, space, with_decoherence=False,
                                             step=use_step, drive_frequency_offset=off)
        analytic = (np.pi * off**2 / (8.0 * params.omega_ge**2)) ** 2
        points.append(RobustnessPoint(
            offset=float(off),
            infidelity=float(infid),
            excess_infidelity=float(infid - baseline),
            analytic_estimate=float(analytic),
        ))
    return points
