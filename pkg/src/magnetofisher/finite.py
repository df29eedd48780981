"""Exact finite-size collective benchmarks in the symmetric Dicke sector.

Stationary expectation values and Fisher information for N up to a few
tens of atoms, used to validate the thermodynamic-limit mean field
(convergence in N, crossover structure, and the large-kappa_z
pre-convergence ratio).
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .params import CollectiveScaledParams
from .superop import (build_collective_finite, collective_spin_ops,
                      CountingFields, unvec, N_MAX_DEFAULT)
from .fcs import (stationary_state, _tilt_directions, _eig_derivatives,
                  _charpoly_derivatives, DegenerateStationaryStateError)
from .dual import DualMatrix
from . import closedform
from .meanfield import solve_mean_field_homotopy, cumulants_meanfield

CHARPOLY_N_MAX = 6      # quartic-style route only for tiny sectors
DENSE_QFI_N_MAX = N_MAX_DEFAULT


@dataclass
class BenchmarkRow:
    n_atoms: int
    h_z: float
    kappa_z: float
    expectation_sx: float   # <S_x>/N
    expectation_sz: float   # <S_z>/N
    qfi_rate: float
    mf_qfi_rate: float

    @property
    def ratio(self):
        if self.mf_qfi_rate == 0:
            return np.inf
        return self.qfi_rate / self.mf_qfi_rate


def stationary_expectations(scaled: CollectiveScaledParams, n_atoms=None):
    """(<S_x>/N, <S_y>/N, <S_z>/N) in the stationary state."""
    s = scaled if n_atoms is None else scaled.with_updates(n_atoms=float(n_atoms))
    n = int(s.n_atoms)
    til = build_collective_finite(s, CountingFields())
    rho = unvec(stationary_state(til.nmat, til.dim))
    rho = rho / np.trace(rho)
    sx, sy, sz = collective_spin_ops(n)
    vals = tuple(float(np.trace(op @ rho).real) / n for op in (sx, sy, sz))
    if any(abs(v) > 0.5 + 1e-9 for v in vals):
        raise DegenerateStationaryStateError("unphysical stationary expectation")
    return vals


def stationary_density(scaled: CollectiveScaledParams):
    til = build_collective_finite(scaled, CountingFields())
    rho = unvec(stationary_state(til.nmat, til.dim))
    rho = rho / np.trace(rho)
    return 0.5 * (rho + rho.conj().T)


def qfi_finite(scaled: CollectiveScaledParams, n_atoms=None, method="auto"):
    """Fisher information rate of the finite collective model (per h_z**2).

    -d2(lambda0)/d(delta)**2 via dual-number perturbation of the tilted
    generator; the resolvent route covers the full N range, the
    characteristic-polynomial route cross-checks tiny sectors.
    """
    s = scaled if n_atoms is None else scaled.with_updates(n_atoms=float(n_atoms))
    n = int(s.n_atoms)
    if n > DENSE_QFI_N_MAX:
        raise ValueError(f"qfi_finite capacity: N = {n} > {DENSE_QFI_N_MAX}")
    if method == "auto":
        method = "resolvent"
    til = _tilt_directions(s, 0.0, build_collective_finite, ("delta",))
    if method == "charpoly":
        if n > CHARPOLY_N_MAX:
            raise ValueError("charpoly route limited to tiny sectors")
        _, _, lam2 = _charpoly_derivatives(til.matrix)
    else:
        _, _, lam2 = _eig_derivatives(til.matrix, til.dim)
    return float(np.real(-lam2[0, 0]))


def mf_qfi_rate(scaled: CollectiveScaledParams):
    """Thermodynamic-limit Fisher rate per the mean-field machinery,
    normalized per the same total-N convention as qfi_finite."""
    if scaled.h_z == 0.0:
        return closedform.qfi_collective(scaled) / scaled.tau
    rep = cumulants_meanfield(scaled, weights=(1.0, 1.0))
    return rep.qfi_rate


def convergence_sweep(scaled: CollectiveScaledParams, n_list,
                      h_z_grid=None, kappa_z_grid=None):
    """Tabulate finite-size vs mean-field benchmarks.

    Exactly one of h_z_grid / kappa_z_grid selects the swept axis; the
    other coordinate is taken from `scaled`.
    """
    if (h_z_grid is None) == (kappa_z_grid is None):
        raise ValueError("provide exactly one of h_z_grid or kappa_z_grid")
    axis = h_z_grid if h_z_grid is not None else kappa_z_grid
    rows = []
    for value in axis:
        if h_z_grid is not None:
            point = scaled.with_updates(h_z=float(value))
        else:
            point = scaled.with_updates(kappa_z=float(value))
        mf = mf_qfi_rate(point)
        for n in n_list:
            sx, _, sz = stationary_expectations(point, n)
            q = qfi_finite(point, n)
            rows.append(BenchmarkRow(
                n_atoms=int(n), h_z=point.h_z, kappa_z=point.kappa_z,
                expectation_sx=sx, expectation_sz=sz,
                qfi_rate=q, mf_qfi_rate=mf))
    return rows


def sx_crossover_point(scaled: CollectiveScaledParams, n_atoms,
                       kz_lo=None, kz_hi=None, tol=0.05):
    """kappa_z at which <S_x>/N crosses -0.25 (midpoint of the crossover
    between the pumped surface value -1/2 and the depolarized center 0)."""
    s = scaled.with_updates(n_atoms=float(n_atoms), h_z=0.0)
    lo = kz_lo if kz_lo is not None else 1e-3 * s.h_x
    hi = kz_hi if kz_hi is not None else 1e3 * s.h_x

    def sx_at(kz):
        return stationary_expectations(s.with_updates(kappa_z=float(kz)))[0]

    f_lo = sx_at(lo) + 0.25
    f_hi = sx_at(hi) + 0.25
    if f_lo * f_hi > 0:
        raise ValueError("crossover not bracketed")
    for _ in range(80):
        mid = np.sqrt(lo * hi)
        f_mid = sx_at(mid) + 0.25
        if f_lo * f_mid <= 0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if hi / lo < 1.0 + tol:
            break
    return float(np.sqrt(lo * hi))
