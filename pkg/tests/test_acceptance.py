"""Acceptance suite: one test per primary criterion, stated tolerances.

Each test prints its measured numbers; the conftest hook adds a PASS/FAIL
line per criterion.  Two criteria are implemented faithfully but are
analytically unattainable for this model family (the engines disagree
with the quoted literature constants, see the closed-form regressions);
they are expected to report FAIL with the measured values:

* criterion 3: the pre-absorption SNR/QFI plateau is (h_x/gamma_P)**2,
  the quoted h_x/gamma_P is its square root;
* criterion 2b: with kappa_z = N gamma_z Omega**2/(4 eps**2) the Fisher
  knee sits near N ~ 4e8, so the [1e7, 1e9] log-log slope is ~1.27.
"""

import time

import numpy as np
import pytest

from magnetofisher.params import reference_params, CollectiveScaledParams
from magnetofisher.fcs import (cumulants_charpoly, cumulants_resolvent,
                               cumulants_time_domain)
from magnetofisher.flow import snr_semiclassical
from magnetofisher.meanfield import collective_snr, cumulants_meanfield, solve_mean_field
from magnetofisher.finite import qfi_finite, mf_qfi_rate, stationary_expectations, sx_crossover_point
from magnetofisher import closedform
from magnetofisher.cli import main as cli_main


def loglog_slope(x, y):
    x, y = np.log10(np.asarray(x)), np.log10(np.asarray(y))
    return np.polyfit(x, y, 1)[0]


def test_criterion_1_crb_violation_crossing():
    """Fig. 1c: semiclassical SNR crosses above QFI within 3x of N = 1e8."""
    t0 = time.perf_counter()
    p0 = reference_params(h_z=0.0)
    n_grid = np.logspace(7, 9, 17)
    ratio = []
    for n in n_grid:
        _, _, snr, qfi = snr_semiclassical(p0.with_updates(n_atoms=n))
        ratio.append(snr / qfi)
    crossing = float(np.interp(1.0, ratio, n_grid))
    elapsed = time.perf_counter() - t0
    print(f"  crossing N* = {crossing:.3e} (target 1e8 within x3), "
          f"runtime {elapsed:.2f} s")
    assert elapsed < 10.0
    assert 1e8 / 3 <= crossing <= 3e8


def _collective_sweep(n_grid):
    rows = []
    for n in n_grid:
        p = reference_params(h_z=0.0, n_atoms=n)
        sc = CollectiveScaledParams.from_physical(p)
        _, _, snr, qfi = collective_snr(sc)
        rows.append((snr, qfi))
    return np.array(rows)


def test_criterion_2a_heisenberg_slope_two():
    """Fig. 1d: collective QFI slope over N in [1e11, 1e13] = 2.0 +- 0.05."""
    n_grid = np.logspace(11, 13, 9)
    qfi = _collective_sweep(n_grid)[:, 1]
    slope = loglog_slope(n_grid, qfi)
    print(f"  QFI log-log slope [1e11,1e13] = {slope:.4f} (target 2.0 +- 0.05)")
    assert abs(slope - 2.0) < 0.05


def test_criterion_2b_sql_slope_one():
    """Fig. 1d: collective QFI slope over N in [1e7, 1e9] = 1.0 +- 0.05.

    Faithful implementation; analytically unattainable with the verified
    kappa_z scaling (knee at N ~ 4e8): measured ~1.27.  See the ledger.
    """
    n_grid = np.logspace(7, 9, 9)
    qfi = _collective_sweep(n_grid)[:, 1]
    slope = loglog_slope(n_grid, qfi)
    print(f"  QFI log-log slope [1e7,1e9] = {slope:.4f} (target 1.0 +- 0.05)")
    assert abs(slope - 1.0) < 0.05


def test_criterion_2c_snr_asymptotically_constant():
    """Fig. 1d: collective SNR slope over the top decade = 0 +- 0.05."""
    n_grid = np.logspace(12, 13, 5)
    snr = _collective_sweep(n_grid)[:, 0]
    slope = loglog_slope(n_grid, snr)
    print(f"  SNR log-log slope [1e12,1e13] = {slope:.5f} (target 0 +- 0.05)")
    assert abs(slope) < 0.05


def test_criterion_3_ratio_limit():
    """Eq. (17): SNR/QFI at h_z = 0 approaches h_x/gamma_P within 10 percent
    at the pre-absorption plateau.

    Faithful implementation; the engines give the square of the quoted
    ratio (the violation threshold h_x > gamma_P is reading-invariant).
    """
    p0 = reference_params(h_z=0.0)
    target = closedform.crb_ratio_limit(p0)
    best = 0.0
    for n in np.logspace(9, 12.5, 22):
        _, _, snr, qfi = snr_semiclassical(p0.with_updates(n_atoms=n))
        best = max(best, snr / qfi)
    print(f"  plateau max SNR/QFI = {best:.2f}; quoted h_x/gamma_P = {target:.2f}; "
          f"(h_x/gamma_P)^2 = {target**2:.1f}")
    assert abs(best - target) / target < 0.10


def test_criterion_4_oracle_triangle():
    """Charpoly, resolvent and time-domain cumulants agree pairwise to
    1e-6 (kappa1) and 1e-4 (kappa2, QFI) on the two-level model, 21-point
    h_z grid, under 60 s."""
    t0 = time.perf_counter()
    worst = {"k1": 0.0, "k2": 0.0, "qfi": 0.0}

    def upd(key, a, b):
        scale = max(abs(a), abs(b), 1e-300)
        worst[key] = max(worst[key], abs(a - b) / scale)

    for hz in np.linspace(-2.5e6, 2.5e6, 21):
        p = reference_params(h_z=hz)
        rc = cumulants_charpoly(p)
        rr = cumulants_resolvent(p)
        rt = cumulants_time_domain(p)
        for a, b in ((rc, rr), (rc, rt), (rr, rt)):
            upd("k1", a.minus_mean_rate(True), b.minus_mean_rate(True))
            upd("k1", a.plus_mean_rate(True), b.plus_mean_rate(True))
            upd("k2", a.minus_variance_rate(True), b.minus_variance_rate(True))
            upd("qfi", a.qfi_rate, b.qfi_rate)
    elapsed = time.perf_counter() - t0
    print(f"  worst pairwise: kappa1 {worst['k1']:.2e} (<=1e-6), "
          f"kappa2 {worst['k2']:.2e} (<=1e-4), qfi {worst['qfi']:.2e} (<=1e-4); "
          f"runtime {elapsed:.1f} s")
    assert elapsed < 60.0
    assert worst["k1"] < 1e-6
    assert worst["k2"] < 1e-4
    assert worst["qfi"] < 1e-4


def test_criterion_5_closed_form_regression():
    """Closed forms match the engines at the stated per-example tolerances;
    two-level vs four-level within 1 percent at 10 GHz detuning."""
    worst_theta = worst_sig = worst_var = worst_qfi = 0.0
    for hz in np.linspace(-2.5e6, 2.5e6, 21):
        p = reference_params(h_z=hz).with_updates(gamma=0.0, gamma_z=0.0)
        rep = cumulants_charpoly(p)
        if hz:
            theta_engine = 0.5 * p.n_atoms * p.tau * rep.minus_mean_rate(True) / p.n_photons_in
            worst_theta = max(worst_theta, abs(closedform.theta_bar(p) / theta_engine - 1))
        sig_engine = p.tau * p.n_atoms * rep.signal_slope
        worst_sig = max(worst_sig, abs(closedform.signal_rotated(p) / sig_engine - 1))
        var_engine = p.n_photons_in + p.n_atoms * p.tau * rep.minus_variance_rate(True)
        worst_var = max(worst_var, abs(closedform.variance_rotated(p) / var_engine - 1))
        worst_qfi = max(worst_qfi, abs(closedform.qfi_semiclassical(p)
                                       / (p.tau * rep.qfi_rate) - 1))
    # collective closed form against the mean-field machinery
    worst_coll = 0.0
    for kz in (0.0, 1e4, 1e6):
        sc = CollectiveScaledParams(kappa_P=3e4, kappa_z=kz, h_x=5e5, h_z=0.0,
                                    tau=1.0, n_atoms=1e10)
        rep = cumulants_meanfield(sc, weights=(1.0, 1.0))
        worst_coll = max(worst_coll, abs(closedform.qfi_collective(sc)
                                         / (sc.tau * rep.qfi_rate) - 1))
    # adiabatic two-level vs four-level
    worst_adiabatic = 0.0
    for hz in (0.0, 1e5, 1e6, 2.5e6):
        p = reference_params(h_z=hz)
        r2 = cumulants_resolvent(p, model="semiclassical-2lvl")
        r4 = cumulants_resolvent(p, model="semiclassical-4lvl")
        worst_adiabatic = max(worst_adiabatic, abs(r4.qfi_rate / r2.qfi_rate - 1))
        if hz:
            worst_adiabatic = max(worst_adiabatic, abs(
                r4.minus_mean_rate(True) / r2.minus_mean_rate(True) - 1))
    print(f"  theta {worst_theta:.2e} (<=2e-2), signal {worst_sig:.2e} (<=1e-2), "
          f"variance {worst_var:.2e} (<=2e-2), qfi {worst_qfi:.2e} (<=1e-6),\n"
          f"  Eq.(19) {worst_coll:.2e} (<=1e-8), 2lvl-vs-4lvl {worst_adiabatic:.2e} (<=1e-2)")
    assert worst_theta < 2e-2
    assert worst_sig < 1e-2
    assert worst_var < 2e-2
    assert worst_qfi < 1e-6
    assert worst_coll < 1e-8
    assert worst_adiabatic < 1e-2


def test_criterion_6_crb_property_suite():
    """Collective QFI >= SNR on the full 21 x 5 x 5 (h_z, kappa_P, kappa_z)
    grid with zero exceptions."""
    t0 = time.perf_counter()
    p = reference_params()
    base = CollectiveScaledParams.from_physical(p)
    hz_grid = np.linspace(-2.5e6, 2.5e6, 21)
    kp_grid = np.logspace(3, 6, 5) * 3.0          # 3e3 ... 3e6
    kz_grid = np.logspace(4, 7, 5)
    exceptions = 0
    checked = 0
    for kp in kp_grid:
        for kz in kz_grid:
            state = None
            for hz in hz_grid:
                sc = base.with_updates(h_z=float(hz), kappa_P=float(kp),
                                       kappa_z=float(kz))
                if state is not None and state.converged:
                    state = solve_mean_field(sc, init=state.alpha)
                if state is None or not state.converged:
                    from magnetofisher.meanfield import solve_mean_field_homotopy
                    state = solve_mean_field_homotopy(sc)
                _, _, snr, qfi = collective_snr(sc, state=state)
                checked += 1
                if not qfi >= snr * (1 - 1e-9):
                    exceptions += 1
    elapsed = time.perf_counter() - t0
    print(f"  {checked} grid points, {exceptions} CRB exceptions, "
          f"runtime {elapsed:.1f} s")
    assert checked == 21 * 5 * 5
    assert exceptions == 0


def test_criterion_7_finite_size_benchmarks():
    """Figs. 5-6 structure: monotone <S_z> convergence at small h_z,
    <S_x> crossover shifting linearly with N, and the large-kappa_z ratio
    within 5 percent of sqrt(8); under 10 minutes."""
    t0 = time.perf_counter()
    hx = 5e5
    fig5 = CollectiveScaledParams(kappa_P=0.01 * hx, kappa_z=0.0, h_x=hx,
                                  h_z=0.0, tau=1.0, n_atoms=40)
    from magnetofisher.meanfield import solve_mean_field_homotopy
    monotone = True
    for hz in (0.05 * hx, 0.1 * hx, 0.2 * hx):
        point = fig5.with_updates(h_z=hz)
        st = solve_mean_field_homotopy(point)
        a_f, a_fs, _, _ = st.alpha
        sz_mf = 0.5 * ((a_fs + a_f) * np.sqrt(1 - a_fs * a_f)).real
        devs = [abs(stationary_expectations(point, n)[2] - sz_mf)
                for n in (10, 20, 40)]
        monotone &= devs[0] >= devs[1] >= devs[2]

    fig6 = CollectiveScaledParams(kappa_P=0.1 * hx, kappa_z=0.0, h_x=hx,
                                  h_z=0.0, tau=1.0, n_atoms=40)
    k10 = sx_crossover_point(fig6, 10)
    k20 = sx_crossover_point(fig6, 20)
    k40 = sx_crossover_point(fig6, 40)
    linear = (abs(k20 / k10 - 2.0) < 0.4) and (abs(k40 / k20 - 2.0) < 0.4)

    big = fig6.with_updates(kappa_z=10 * hx)
    ratio = qfi_finite(big, 40) / mf_qfi_rate(big)
    target = np.sqrt(8.0)
    sqrt8_dev = min(abs(ratio - target), abs(1 / ratio - target)) / target
    elapsed = time.perf_counter() - t0
    print(f"  monotone <S_z> convergence: {monotone}; crossover ratios "
          f"{k20/k10:.2f}, {k40/k20:.2f} (linear in N); sqrt8 deviation "
          f"{sqrt8_dev:.3f} (<=0.05); runtime {elapsed:.0f} s")
    assert elapsed < 600.0
    assert monotone
    assert linear
    assert sqrt8_dev < 0.05


def test_criterion_8_determinism(tmp_path):
    """Two runs of a golden sweep produce byte-identical CSV."""
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep-bz", "--grid=-2.5e6,2.5e6,21,lin"]
    assert cli_main([*args, "--out", str(a)]) == 0
    assert cli_main([*args, "--out", str(b)]) == 0
    identical = a.read_bytes() == b.read_bytes()
    print(f"  byte-identical: {identical}")
    assert identical
