"""Non-unitary Holstein-Primakoff mean field: roots, cumulants, Fisher."""

import numpy as np
import pytest

from magnetofisher.params import reference_params, CollectiveScaledParams
from magnetofisher.meanfield import (eval_cgf, solve_mean_field,
                                     solve_mean_field_homotopy,
                                     cumulants_meanfield, collective_snr,
                                     channel_rates, MeanFieldDomainError,
                                     _cgf_duals, _S, _D, _H)
from magnetofisher.fcs import cumulants_resolvent
from magnetofisher import closedform

SC = CollectiveScaledParams(kappa_P=3e4, kappa_z=1e4, h_x=5e5, h_z=0.0,
                            tau=1.0, n_atoms=1e10)


def test_cgf_vanishes_at_vacuum():
    k = eval_cgf(np.zeros(4, dtype=complex), SC)
    assert abs(k) < 1e-12 * max(SC.h_x, SC.kappa_P)


def test_gradient_vanishes_at_vacuum_hz_zero():
    k = _cgf_duals(np.zeros(4, dtype=complex), SC)
    assert np.max(np.abs(k.g[:4])) < 1e-12 * max(SC.h_x, SC.kappa_P)


def test_domain_guard():
    alpha = np.array([1.2, 1.2, 0.0, 0.0], dtype=complex)
    with pytest.raises(MeanFieldDomainError):
        eval_cgf(alpha, SC)


def test_root_at_zero_field_is_zero():
    st = solve_mean_field(SC)
    assert st.converged
    assert np.max(np.abs(st.alpha)) < 1e-12


def test_background_channel_derivative():
    # at the vacuum each channel counts half the Poisson flux plus the
    # collective emission kappa_z <P_a^2>/N -> kappa_z N/4 per channel
    p = reference_params(h_z=0.0)
    sc = CollectiveScaledParams.from_physical(p)
    st = solve_mean_field(sc)
    rates = channel_rates(sc, st)
    expected = 0.5 * p.photon_flux + 0.25 * sc.kappa_z * sc.n_atoms
    assert rates["x"] == pytest.approx(expected, rel=1e-6)
    assert rates["y"] == pytest.approx(expected, rel=1e-6)


def test_root_conjugation_pattern():
    p = reference_params(h_z=2e5)
    sc = CollectiveScaledParams.from_physical(p)
    st = solve_mean_field_homotopy(sc)
    assert st.converged
    assert st.conjugation_defect() < 1e-10


def test_root_implies_sx_minus_half():
    st = solve_mean_field(SC)
    a_f, a_fs, _, _ = st.alpha
    sx = (a_fs * a_f).real - 0.5
    assert sx == pytest.approx(-0.5, abs=1e-12)


def test_cgf_real_at_converged_root():
    p = reference_params(h_z=3e5)
    sc = CollectiveScaledParams.from_physical(p)
    st = solve_mean_field_homotopy(sc)
    k = eval_cgf(st.alpha, sc, include_background=False)
    # Kbar vanishes at the zero-tilt root (trace preservation); both parts
    # sit at the cancellation floor of the kappa-scale terms
    scale = max(sc.h_x, sc.kappa_P, sc.kappa_z)
    assert abs(k.imag) < 1e-9 * scale
    assert abs(k.real) < 1e-9 * scale


def test_implicit_derivative_matches_finite_difference():
    # d alpha/d h_z from the linear solve vs re-solving at shifted h_z
    p = reference_params(h_z=2e5)
    sc = CollectiveScaledParams.from_physical(p)
    st = solve_mean_field_homotopy(sc)
    k = _cgf_duals(st.alpha, sc)
    hess = k.h[:4, :4]
    dalpha = np.linalg.solve(hess, -k.h[:4, _H])
    dh = 1e-3 * sc.h_x
    up = solve_mean_field(sc, init=st.alpha, h_z=sc.h_z + dh)
    dn = solve_mean_field(sc, init=st.alpha, h_z=sc.h_z - dh)
    fd = (up.alpha - dn.alpha) / (2 * dh)
    assert np.max(np.abs(dalpha - fd)) < 1e-6 * max(1e-12, np.max(np.abs(fd)))


def test_small_hz_matches_finite_size():
    # <S_z>/N from the mean field against N = 80 finite size within 5%
    from magnetofisher.finite import stationary_expectations
    sc = CollectiveScaledParams(kappa_P=0.1 * 5e5, kappa_z=0.0, h_x=5e5,
                                h_z=0.1 * 5e5, tau=1.0, n_atoms=80)
    st = solve_mean_field_homotopy(sc)
    a_f, a_fs, _, _ = st.alpha
    sz_mf = 0.5 * ((a_fs + a_f) * np.sqrt(1 - a_fs * a_f)).real
    _, _, sz_80 = stationary_expectations(sc, 80)
    assert sz_mf == pytest.approx(sz_80, rel=5e-2)


def test_qfi_matches_closed_form():
    for kz in (0.0, 1e4, 1e6):
        sc = SC.with_updates(kappa_z=kz)
        rep = cumulants_meanfield(sc, weights=(1.0, 1.0))
        assert sc.tau * rep.qfi_rate == pytest.approx(
            closedform.qfi_collective(sc), rel=1e-8)


def test_kappa_z_zero_reduction_to_semiclassical():
    # kappa_z -> 0: per-atom mean-field rates track the two-level model;
    # exact at h_z = 0, few-percent at h_z != 0 (the pump stays collective)
    p0 = reference_params(h_z=0.0).with_updates(gamma=0.0, gamma_z=1e-9 * 26.0)
    sc0 = CollectiveScaledParams.from_physical(p0)
    rep0 = cumulants_meanfield(sc0, weights=(1.0, 1.0))
    r20 = cumulants_resolvent(p0)
    assert rep0.qfi_rate / sc0.n_atoms == pytest.approx(r20.qfi_rate, rel=1e-6)

    p = reference_params(h_z=1e5).with_updates(gamma=0.0, gamma_z=1e-9 * 26.0)
    sc = CollectiveScaledParams.from_physical(p)
    rep = cumulants_meanfield(sc, weights=(1.0, 1.0))
    r2 = cumulants_resolvent(p)
    n = sc.n_atoms
    assert rep.kappa1_dyn["minus"] / n == pytest.approx(
        r2.kappa1_dyn["minus"], rel=1e-3)
    assert rep.qfi_rate / n == pytest.approx(r2.qfi_rate, rel=6e-2)


def test_meanfield_is_thermodynamic_limit_of_finite():
    # per-atom finite-size Fisher rate extrapolates (1/N) onto the mean field
    from magnetofisher.finite import qfi_finite
    p = reference_params(h_z=1e5).with_updates(gamma=0.0, gamma_z=1e-9 * 26.0)
    sc = CollectiveScaledParams.from_physical(p)
    q32 = qfi_finite(sc.with_updates(n_atoms=32), 32) / 32
    q48 = qfi_finite(sc.with_updates(n_atoms=48), 48) / 48
    extrap = q48 + (q48 - q32) * 32 / (48 - 32)
    rep = cumulants_meanfield(sc, weights=(1.0, 1.0))
    assert rep.qfi_rate / sc.n_atoms == pytest.approx(extrap, rel=1e-4)


def test_scaled_mean_difference_matches_semiclassical_near_origin():
    # n_minus/(n_plus N) approaches theta-like semiclassical response
    p = reference_params(h_z=2e4)
    sc = CollectiveScaledParams.from_physical(p)
    rep = cumulants_meanfield(sc, weights=(1.0, 1.0))
    coll = rep.kappa1_dyn["minus"] / sc.n_atoms
    r2 = cumulants_resolvent(p)
    assert coll == pytest.approx(r2.kappa1_dyn["minus"], rel=5e-2)


def test_collective_snr_crb_and_noise_scale():
    p = reference_params(h_z=1e5)
    sc = CollectiveScaledParams.from_physical(p)
    signal, noise, snr, qfi = collective_snr(sc)
    assert qfi >= snr
    # collective noise orders of magnitude above the semiclassical one
    r2 = cumulants_resolvent(p)
    sc_noise = p.tau * r2.minus_variance_rate(True) * p.n_atoms + p.n_photons_in
    assert 5e2 < noise / sc_noise < 5e5


def test_snr_constant_at_large_n():
    vals = []
    for n in (1e12, 3e12, 1e13):
        p = reference_params(h_z=0.0, n_atoms=n)
        sc = CollectiveScaledParams.from_physical(p)
        vals.append(collective_snr(sc)[2])
    assert max(vals) / min(vals) < 1.01


def test_crb_property_grid():
    # QFI >= SNR over an (h_z, kappa_P, kappa_z) grid, no exceptions
    p = reference_params()
    base = CollectiveScaledParams.from_physical(p)
    for hz in np.linspace(-2.5e6, 2.5e6, 7):
        for kp in (3e3, 3e4, 3e5):
            for kz in (3e5, 3e6):
                sc = base.with_updates(h_z=hz, kappa_P=kp, kappa_z=kz)
                _, _, snr, qfi = collective_snr(sc)
                assert qfi >= snr * (1 - 1e-9)
