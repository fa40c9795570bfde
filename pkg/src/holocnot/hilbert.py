"""Truncated tensor-product Hilbert space for two qutrits and a bus resonator.

Subsystem ordering is fixed everywhere as Q1 (x) Q2 (x) resonator.  Qutrit
levels are labelled g, e, f, h from the bottom of the ladder; the resonator
is a truncated Fock space.  All operators are dense complex numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEVEL_NAMES = {"g": 0, "e": 1, "f": 2, "h": 3}

HERMITICITY_TOL = 1e-12


class DimensionError(ValueError):
    """Raised when operator or state dimensions do not match the space."""


def _level_index(level: int | str, levels: int) -> int:
    if isinstance(level, str):
        if level not in LEVEL_NAMES:
            raise DimensionError(f"unknown level label {level!r}")
        level = LEVEL_NAMES[level]
    if not 0 <= level < levels:
        raise DimensionError(f"level index {level} out of range for {levels} levels")
    return level


@dataclass(frozen=True)
class HilbertSpace:
    """Dimensions of the Q1 (x) Q2 (x) resonator product space."""

    levels_q1: int = 4
    levels_q2: int = 4
    fock_dim: int = 4

    def __post_init__(self):
        if self.levels_q1 < 3 or self.levels_q2 < 3:
            raise DimensionError("each qutrit needs at least the g, e, f levels")
        if self.fock_dim < 2:
            raise DimensionError("fock_dim must be at least 2")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.levels_q1, self.levels_q2, self.fock_dim)

    @property
    def dim(self) -> int:
        return self.levels_q1 * self.levels_q2 * self.fock_dim

    def levels_q(self, j: int) -> int:
        if j == 1:
            return self.levels_q1
        if j == 2:
            return self.levels_q2
        raise DimensionError(f"qutrit index must be 1 or 2, got {j}")

    def index(self, k1: int | str, k2: int | str, n: int) -> int:
        """Flat index of the product basis state |k1 k2 n>."""
        k1 = _level_index(k1, self.levels_q1)
        k2 = _level_index(k2, self.levels_q2)
        if not 0 <= n < self.fock_dim:
            raise DimensionError(f"photon number {n} out of range")
        return (k1 * self.levels_q2 + k2) * self.fock_dim + n

    def basis_state(self, k1: int | str, k2: int | str, n: int) -> np.ndarray:
        psi = np.zeros(self.dim, dtype=complex)
        psi[self.index(k1, k2, n)] = 1.0
        return psi


def annihilation(fock_dim: int) -> np.ndarray:
    """Photon annihilation operator a with a[n-1, n] = sqrt(n)."""
    if fock_dim < 2:
        raise DimensionError("fock_dim must be at least 2")
    a = np.zeros((fock_dim, fock_dim), dtype=complex)
    for n in range(1, fock_dim):
        a[n - 1, n] = np.sqrt(n)
    return a


def qutrit_transition(levels: int, frm: int | str, to: int | str) -> np.ndarray:
    """Transition operator |to><frm| on a single multilevel qutrit."""
    i = _level_index(to, levels)
    j = _level_index(frm, levels)
    op = np.zeros((levels, levels), dtype=complex)
    op[i, j] = 1.0
    return op


def qutrit_lowering(levels: int) -> np.ndarray:
    """Ladder lowering operator sum_k sqrt(k+1) |k><k+1| on a qutrit."""
    b = np.zeros((levels, levels), dtype=complex)
    for k in range(levels - 1):
        b[k, k + 1] = np.sqrt(k + 1)
    return b


def qutrit_raising(levels: int) -> np.ndarray:
    """Ladder raising operator sum_k sqrt(k+1) |k+1><k|; maps |f> to sqrt(3)|h>."""
    return qutrit_lowering(levels).conj().T


def embed(op: np.ndarray, subsystem: int, space: HilbertSpace) -> np.ndarray:
    """Embed a local operator into the full space (0 = Q1, 1 = Q2, 2 = resonator)."""
    op = np.asarray(op, dtype=complex)
    dims = space.dims
    if not 0 <= subsystem < 3:
        raise DimensionError(f"subsystem index must be 0, 1 or 2, got {subsystem}")
    if op.shape != (dims[subsystem], dims[subsystem]):
        raise DimensionError(
            f"operator shape {op.shape} does not match subsystem dimension {dims[subsystem]}"
        )
    factors = [np.eye(d, dtype=complex) for d in dims]
    factors[subsystem] = op
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def excitation_number(space: HilbertSpace) -> np.ndarray:
    """Total excitation operator: qutrit level numbers plus photon number."""
    n_op = np.zeros((space.dim, space.dim), dtype=complex)
    for j, levels in ((0, space.levels_q1), (1, space.levels_q2)):
        n_op += embed(np.diag(np.arange(levels, dtype=complex)), j, space)
    a = annihilation(space.fock_dim)
    n_op += embed(a.conj().T @ a, 2, space)
    return n_op


def partial_trace_resonator(rho: np.ndarray, space: HilbertSpace) -> np.ndarray:
    """Trace out the resonator, returning the two-qutrit density matrix."""
    d1, d2, nf = space.dims
    rho = np.asarray(rho)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    r = rho.reshape(d1 * d2, nf, d1 * d2, nf)
    return np.einsum("anbn->ab", r)


def assert_hermitian(matrix: np.ndarray, tol: float = HERMITICITY_TOL) -> None:
    dev = np.max(np.abs(matrix - matrix.conj().T))
    if dev > tol:
        raise ValueError(f"matrix is not Hermitian within {tol} (deviation {dev:.3e})")


def is_hermitian(matrix: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    return float(np.max(np.abs(matrix - matrix.conj().T))) <= tol
