"""Cumulants of time-integrated photon counts from tilted Liouvillians.

Three independent extraction routes are provided and cross-validated:

* `cumulants_charpoly`  -- the characteristic-polynomial expansion of the
  dominant eigenvalue, with exact tilt derivatives threaded through the
  Faddeev-LeVerrier recursion by dual numbers;
* `cumulants_resolvent` -- stationary-state perturbation theory with a
  deflated (pseudoinverse) linear solve;
* `cumulants_time_domain` -- direct propagation of the generalized master
  equation at small finite counting fields, finite-differenced.

Counting conventions: the long-time cumulant generating function is
K(chi) = lambda0(chi) * t + background, with the incoming Poisson
statistics contributing (exp(-i chi_eta) - 1) * nu_eta.  Hence
kappa1_eta = i d(lambda0)/d(chi_eta) + nu_dot_eta  and
kappa2_ab   = -d2(lambda0)/d(chi_a)d(chi_b) + delta_ab nu_dot_a,
all expressed as rates (per second).  The Fisher information rate is
-d2(lambda0)/d(delta)**2 with delta in h_z units.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
import scipy.linalg as sla

from .dual import D2, DualMatrix, charpoly_coefficients
from .params import CollectiveScaledParams
from .superop import (CountingFields, TiltedLiouvillian, build_two_level,
                      build_four_level, build_collective_finite, vec, unvec)

CHANNELS = ("x", "y")


class DegenerateStationaryStateError(RuntimeError):
    pass


class BranchAmbiguityError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    pass


@dataclass
class CumulantReport:
    """First/second counting cumulant rates, Fisher information and SNR.

    kappa1 maps channels x, y, plus, minus to total count rates
    (dynamical + incoming background); kappa2 is the symmetric 2x2 rate
    matrix over (x, y) including shot noise.  The *_dyn fields carry the
    matter-induced (background-free) parts used by the propagation layer.
    qfi_rate is per h_z**2; snr refers to the integrated n_rot,- record
    of this system over the stated duration tau.
    """

    lambda0: complex
    kappa1: dict
    kappa2: np.ndarray
    kappa1_dyn: dict
    kappa2_dyn: np.ndarray
    background: dict
    qfi_rate: float
    signal_slope: float     # d(kappa1_minus)/dh_z at fixed rotation, per h_z
    tau: float
    snr: float = 0.0

    def __post_init__(self):
        if not self.snr:
            noise = self.tau * self.minus_variance_rate()
            if noise > 0:
                self.snr = (self.tau * self.signal_slope) ** 2 / noise

    def minus_mean_rate(self, dyn_only=False):
        k1 = self.kappa1_dyn if dyn_only else self.kappa1
        return k1["x"] - k1["y"]

    def plus_mean_rate(self, dyn_only=False):
        k1 = self.kappa1_dyn if dyn_only else self.kappa1
        return k1["x"] + k1["y"]

    def minus_variance_rate(self, dyn_only=False):
        k2 = self.kappa2_dyn if dyn_only else self.kappa2
        v = np.array([1.0, -1.0])
        return float(v @ k2 @ v)

    def plus_variance_rate(self, dyn_only=False):
        k2 = self.kappa2_dyn if dyn_only else self.kappa2
        v = np.array([1.0, 1.0])
        return float(v @ k2 @ v)


def _builder_for(model):
    if model in ("semiclassical-2lvl", "two-level", "TwoLevel"):
        return build_two_level
    if model in ("semiclassical-4lvl", "four-level", "FourLevel"):
        return build_four_level
    raise ValueError(f"unknown semiclassical model {model!r}")


def _background_rates(params, theta_rot):
    """Incoming Poisson rates per detector channel in the rotated basis."""
    beta = np.pi / 4.0 + theta_rot
    return {"x": params.photon_flux * np.cos(beta) ** 2,
            "y": params.photon_flux * np.sin(beta) ** 2}


def stationary_state(mat, dim):
    """Unique trace-one stationary state of a Liouvillian matrix.

    Solves L rho = 0 with the first row (a diagonal vec position, hence a
    member of the trace dependency) replaced by the trace condition.
    """
    n = mat.shape[0]
    tvec = np.eye(dim, dtype=complex).reshape(-1, order="F")
    scale = np.max(np.abs(mat)) or 1.0
    a = mat.copy()
    a[0, :] = tvec * scale
    b = np.zeros(n, dtype=complex)
    b[0] = scale
    try:
        x = np.linalg.solve(a, b)
        resid = np.linalg.norm(mat @ x) / scale
    except np.linalg.LinAlgError:
        resid = np.inf
    if resid > 1e-8 * max(1.0, np.linalg.norm(x) if np.ndim(x) else 1.0):
        w, v = np.linalg.eig(mat)
        order = np.argsort(np.abs(w))
        if len(w) > 1 and abs(w[order[1]]) < 1e-10 * scale:
            raise DegenerateStationaryStateError("stationary state is not unique")
        x = v[:, order[0]]
        x = x / (tvec @ x)
    return x


def _tilt_directions(params, theta_rot, builder, directions):
    """Build L as a DualMatrix over the requested seed directions.

    `directions` is a sequence of names from
    {"chi_x", "chi_y", "chi_minus", "chi_plus", "delta", "h_z"}.
    """
    k = len(directions)
    seeds = {name: D2.seed(0.0, i, k) for i, name in enumerate(directions)}
    chi_x = seeds.get("chi_x", D2.const(0.0, k))
    chi_y = seeds.get("chi_y", D2.const(0.0, k))
    if "chi_minus" in seeds:
        chi_x = chi_x + seeds["chi_minus"]
        chi_y = chi_y - seeds["chi_minus"]
    if "chi_plus" in seeds:
        chi_x = chi_x + seeds["chi_plus"]
        chi_y = chi_y + seeds["chi_plus"]
    delta = seeds.get("delta", D2.const(0.0, k))
    cf = CountingFields(chi_x=chi_x, chi_y=chi_y, delta=delta)
    hz = seeds["h_z"] + params.h_z if "h_z" in seeds else None
    if isinstance(params, CollectiveScaledParams):
        return builder(params, cf, h_z=hz)
    return builder(params, cf, theta_rot=theta_rot, h_z=hz)


def _eig_derivatives(dual_mat: DualMatrix, dim):
    """lambda0 value, gradient and Hessian over the seeded directions.

    Rayleigh-Schroedinger theory around the stationary eigenvalue of the
    zero-tilt generator: with left vector u = <<1| and right vector
    v = rho_ss,  lambda_a = u L_a v  and
    lambda_ab = u L_ab v + u L_a w_b + u L_b w_a,
    where w_a solves the deflated system L0 w_a = -(L_a - lambda_a) v
    with the gauge u.w_a = 0.
    """
    L0 = dual_mat.val
    k = dual_mat.k
    n = L0.shape[0]
    tvec = np.eye(dim, dtype=complex).reshape(-1, order="F")
    v = stationary_state(L0, dim)
    lam0 = complex(tvec @ (L0 @ v))

    lam1 = np.array([tvec @ (dual_mat.g[a] @ v) for a in range(k)])
    scale = np.max(np.abs(L0)) or 1.0
    A = L0.copy()
    A[0, :] = tvec * scale
    rhs = np.zeros((n, k), dtype=complex)
    for a in range(k):
        r = -(dual_mat.g[a] @ v - lam1[a] * v)
        r[0] = 0.0
        rhs[:, a] = r
    w = np.linalg.solve(A, rhs)
    lam2 = np.zeros((k, k), dtype=complex)
    for a in range(k):
        for b in range(a, k):
            val = tvec @ (dual_mat.h[a, b] @ v)
            val += tvec @ (dual_mat.g[a] @ w[:, b]) + tvec @ (dual_mat.g[b] @ w[:, a])
            lam2[a, b] = lam2[b, a] = val
    return lam0, lam1, lam2


def _charpoly_derivatives(dual_mat: DualMatrix):
    """lambda0 gradient/Hessian from characteristic-polynomial coefficients.

    The generator is rescaled to O(1) entries before the recursion to keep
    coefficient magnitudes balanced; eigenvalue derivatives scale back
    linearly.
    """
    scale = np.max(np.abs(dual_mat.val)) or 1.0
    scaled = DualMatrix(dual_mat.val / scale, dual_mat.g / scale, dual_mat.h / scale)
    coeffs = charpoly_coefficients(scaled)
    a0, a1, a2 = coeffs[0], coeffs[1], coeffs[2]
    if abs(a1.val) < 1e-14 * max(abs(a2.val), 1.0):
        raise DegenerateStationaryStateError("a1 vanishes: degenerate stationary state")
    k = a0.k
    lam1 = np.array([-a0.g[a] / a1.val for a in range(k)])
    lam2 = np.zeros((k, k), dtype=complex)
    for a in range(k):
        for b in range(a, k):
            val = -(a0.h[a, b] + a1.g[a] * lam1[b] + a1.g[b] * lam1[a]
                    + 2.0 * a2.val * lam1[a] * lam1[b]) / a1.val
            lam2[a, b] = lam2[b, a] = val
    return complex(a0.val), lam1 * scale, lam2 * scale


def _assemble_report(lam0, lam1, lam2, params, theta_rot, signal_slope=None):
    """CumulantReport from lambda0 derivatives over (chi_x, chi_y, delta, h_z)."""
    k1x = float(np.real(1j * lam1[0]))
    k1y = float(np.real(1j * lam1[1]))
    k2 = np.real(-lam2[:2, :2])
    k2 = 0.5 * (k2 + k2.T)
    qfi = float(np.real(-lam2[2, 2]))
    if signal_slope is None:
        # d kappa1_minus / dh_z = i (d2 lambda/dchi_x dh_z - d2 lambda/dchi_y dh_z)
        signal_slope = float(np.real(1j * (lam2[0, 3] - lam2[1, 3])))
    bg = _background_rates(params, theta_rot)
    kappa1_dyn = {"x": k1x, "y": k1y, "plus": k1x + k1y, "minus": k1x - k1y}
    kappa1 = {"x": k1x + bg["x"], "y": k1y + bg["y"],
              "plus": k1x + k1y + bg["x"] + bg["y"],
              "minus": k1x - k1y + bg["x"] - bg["y"]}
    kappa2 = k2 + np.diag([bg["x"], bg["y"]])
    return CumulantReport(
        lambda0=lam0, kappa1=kappa1, kappa2=kappa2,
        kappa1_dyn=kappa1_dyn, kappa2_dyn=k2, background=bg,
        qfi_rate=qfi, signal_slope=signal_slope, tau=params.tau)


_DIRECTIONS = ("chi_x", "chi_y", "delta", "h_z")


def _dual_build(params, model, theta_rot):
    builder = (build_collective_finite if isinstance(params, CollectiveScaledParams)
               else _builder_for(model))
    return _tilt_directions(params, theta_rot, builder, _DIRECTIONS)


def cumulants_charpoly(params, model="semiclassical-2lvl", theta_rot=0.0) -> CumulantReport:
    """Cumulant rates via the characteristic-polynomial expansion."""
    til = _dual_build(params, model, theta_rot)
    lam0, lam1, lam2 = _charpoly_derivatives(til.matrix)
    return _assemble_report(lam0, lam1, lam2, params, theta_rot)


def cumulants_resolvent(params, model="semiclassical-2lvl", theta_rot=0.0) -> CumulantReport:
    """Cumulant rates via stationary-state perturbation theory."""
    til = _dual_build(params, model, theta_rot)
    lam0, lam1, lam2 = _eig_derivatives(til.matrix, til.dim)
    return _assemble_report(lam0, lam1, lam2, params, theta_rot)


# ---------------------------------------------------------------------------
# dominant eigenvalue at finite tilt


def dominant_eigenvalue(til: TiltedLiouvillian, gap_rtol=1e-3):
    """Eigenvalue of maximal real part, i.e. the branch continuously
    connected to lambda0(0) = 0 for tilts well inside the spectral gap.

    Raises BranchAmbiguityError when the two largest real parts are closer
    than gap_rtol relative to the spectral scale.
    """
    if isinstance(til.matrix, DualMatrix):
        raise TypeError("dominant_eigenvalue expects a plain (non-dual) build")
    w = np.linalg.eigvals(til.nmat)
    order = np.argsort(-w.real)
    w = w[order]
    scale = max(np.max(np.abs(w)), 1e-300)
    if len(w) > 1 and abs(w[0].real - w[1].real) < gap_rtol * scale:
        raise BranchAmbiguityError(
            f"branch gap collapse: Re-gap {abs(w[0].real - w[1].real):.3e} "
            f"below {gap_rtol:.1e} x {scale:.3e}")
    return complex(w[0])


def dominant_eigenvalue_family(build, steps=8, gap_rtol=1e-3):
    """Track lambda0 along the homotopy s -> build(s), s in [0, 1].

    `build` maps a float s to a TiltedLiouvillian whose s = 0 member is
    trace preserving (lambda0 = 0); the branch is followed by nearest
    continuation through `steps` increments.
    """
    lam = 0.0 + 0.0j
    for s in np.linspace(0.0, 1.0, steps + 1)[1:]:
        w = np.linalg.eigvals(build(float(s)).nmat)
        dist = np.abs(w - lam)
        order = np.argsort(dist)
        if len(w) > 1:
            scale = max(np.max(np.abs(w)), 1e-300)
            if abs(w[order[0]].real - w[order[1]].real) < gap_rtol * scale \
                    and dist[order[1]] < 2.0 * dist[order[0]] + 1e-12 * scale:
                raise BranchAmbiguityError("eigenvalue branches collide during homotopy")
        lam = w[order[0]]
    return complex(lam)


# ---------------------------------------------------------------------------
# time-domain oracle


def _trapz(y, dx):
    return float(np.trapezoid(y, dx=dx)) if hasattr(np, "trapezoid") \
        else float(np.trapz(y, dx=dx))


def _log_trace_slope(mat, dim, t1, t2, rho0):
    """Slope of log tr rho_chi(t) between t1 and t2."""
    p1 = sla.expm(mat * t1)
    p21 = sla.expm(mat * (t2 - t1))
    tvec = np.eye(dim, dtype=complex).reshape(-1, order="F")
    v1 = p1 @ rho0
    v2 = p21 @ v1
    tr1 = tvec @ v1
    tr2 = tvec @ v2
    if not (np.isfinite(tr1) and np.isfinite(tr2)) or tr1 == 0 or tr2 == 0:
        raise ConvergenceError("trace under/overflow in time propagation")
    return (np.log(tr2) - np.log(tr1)) / (t2 - t1)


def _rate_scale(params):
    if isinstance(params, CollectiveScaledParams):
        return max(params.kappa_P, params.kappa_z, 1e-6)
    return max(params.gamma_P, 1e-6)


def _slope_for(params, model, theta_rot, chi_x=0.0, chi_y=0.0, delta=0.0,
               t_sim=None, h_z=None, window_check=True):
    builder = (build_collective_finite if isinstance(params, CollectiveScaledParams)
               else _builder_for(model))
    if t_sim is None:
        t_sim = 100.0 / _rate_scale(params)
    cf = CountingFields(chi_x=chi_x, chi_y=chi_y, delta=delta)
    if isinstance(params, CollectiveScaledParams):
        til = builder(params, cf, h_z=h_z)
        til0 = builder(params, CountingFields(), h_z=h_z)
    else:
        til = builder(params, cf, theta_rot=theta_rot, h_z=h_z)
        til0 = builder(params, CountingFields(), theta_rot=theta_rot, h_z=h_z)
    rho0 = stationary_state(til0.nmat, til0.dim)
    s_b = _log_trace_slope(til.nmat, til.dim, 0.5 * t_sim, t_sim, rho0)
    if window_check:
        s_a = _log_trace_slope(til.nmat, til.dim, 0.25 * t_sim, 0.5 * t_sim, rho0)
        scale = max(abs(s_a), abs(s_b))
        if scale > 0 and abs(s_a - s_b) > 1e-4 * scale + 1e-12 * _rate_scale(params):
            raise ConvergenceError(
                f"log-trace growth not linear: slopes {s_a:.6e} vs {s_b:.6e}")
    return s_b


def _delta_scale(params):
    if isinstance(params, CollectiveScaledParams):
        return 1e-3 * max(params.h_x, params.kappa_P)
    return 1e-3 * max(params.h_x, params.gamma_P)


def cumulants_time_domain(params, model="semiclassical-2lvl", theta_rot=0.0,
                          t_sim=None, step=0.02) -> CumulantReport:
    """Cumulant rates from propagation at small finite counting fields.

    Five-point central finite differences in the counting fields; the
    Fisher tilt uses the symmetric +-delta combination.  Slower and less
    exact than the analytic routes; serves as an independent oracle.
    """

    def lam(chi_x=0.0, chi_y=0.0, delta=0.0, h_z=None, check=False):
        return _slope_for(params, model, theta_rot, chi_x=chi_x, chi_y=chi_y,
                          delta=delta, t_sim=t_sim, h_z=h_z, window_check=check)

    # linearity-window check once, at a representative tilt
    lam(chi_x=step, chi_y=-step, check=True)

    def d1(f, h):
        return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h)

    def d2(f, h):
        return (-f(-2 * h) + 16 * f(-h) - 30 * f(0.0) + 16 * f(h) - f(2 * h)) / (12 * h * h)

    fx = lambda c: lam(chi_x=c)
    fy = lambda c: lam(chi_y=c)
    fm = lambda c: lam(chi_x=c, chi_y=-c)
    ds = _delta_scale(params)
    fd = lambda c: lam(delta=c * ds)

    k1x = float(np.real(1j * d1(fx, step)))
    k1y = float(np.real(1j * d1(fy, step)))
    k2xx = float(np.real(-d2(fx, step)))
    k2yy = float(np.real(-d2(fy, step)))
    k2mm = float(np.real(-d2(fm, step)))
    k2xy = 0.5 * (k2mm - k2xx - k2yy) * (-1.0)
    qfi = float(np.real(-d2(fd, 1.0))) / ds ** 2

    # signal slope via nested differences in h_z at fixed rotation
    hz0 = params.h_z
    hstep = 1e-3 * params.h_x if params.h_x else ds

    def k1m_at(hz):
        g = lambda c: lam(chi_x=c, chi_y=-c, h_z=hz)
        return float(np.real(1j * d1(g, step)))

    slope = (k1m_at(hz0 + hstep) - k1m_at(hz0 - hstep)) / (2 * hstep)

    lam1 = np.array([-1j * k1x, -1j * k1y, 0.0, 0.0])
    lam2 = np.zeros((4, 4), dtype=complex)
    lam2[0, 0], lam2[1, 1] = -k2xx, -k2yy
    lam2[0, 1] = lam2[1, 0] = -k2xy
    lam2[2, 2] = -qfi
    return _assemble_report(0.0, lam1, lam2, params, theta_rot, signal_slope=slope)


# ---------------------------------------------------------------------------
# integrated two-time-correlation oracle for the Fisher information


def qfi_integral_oracle(params, model="semiclassical-2lvl", t_sim=None,
                        n_steps=None):
    """Fisher information rate from the integrated generator noise.

    Evaluates 4/tau * int int <dF(t1) dF(t2)> dt1 dt2 (tau -> infinity) by
    quadrature of the symmetrized stationary two-time correlation
    G(s) = <F(s)F(0)> + <F(0)F(s)> - 2<F>**2 obtained from the quantum
    regression theorem, with F = sigma_z/2 per atom (semiclassical) or
    F = S_z (collective), in h_z units; the rate is 4 int_0^inf G(s) ds.
    Capacity-limited to small generators.
    """
    if isinstance(params, CollectiveScaledParams):
        til = build_collective_finite(params, CountingFields())
        if til.dim > 8:
            raise ValueError("qfi_integral_oracle capacity: collective N <= 6 only")
        from .superop import collective_spin_ops
        _, _, sz = collective_spin_ops(params.n_atoms)
        f_op = sz
        freq = max(params.h_x, abs(params.h_z), params.kappa_P, params.kappa_z)
    else:
        builder = _builder_for(model)
        til = builder(params, CountingFields())
        f_op = np.zeros((til.dim, til.dim), dtype=complex)
        f_op[0, 0], f_op[1, 1] = 0.5, -0.5
        freq = max(params.h_x, abs(params.h_z), params.gamma_P)
    if t_sim is None:
        t_sim = 100.0 / _rate_scale(params)
    if n_steps is None:
        # resolve the coherent oscillation; trapezoid error ~ (freq*dt)^2/12
        n_steps = int(min(2e5, max(4000, 40 * freq * t_sim)))
    mat = til.nmat
    dim = til.dim
    rho = unvec(stationary_state(mat, dim))
    mean_f = np.trace(f_op @ rho).real
    w = vec(f_op @ rho + rho @ f_op)
    fvec = vec(f_op).conj()      # tr[F M] = fvec . vec(M) for hermitian F
    dt = t_sim / n_steps
    prop = sla.expm(mat * dt)
    g = np.empty(n_steps + 1)
    for i in range(n_steps + 1):
        g[i] = np.real(fvec @ w) - 2.0 * mean_f ** 2
        w = prop @ w
    return 4.0 * _trapz(g, dt)
