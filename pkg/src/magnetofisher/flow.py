"""Stochastic-mean-field propagation of the probe through the vapor.

The beam statistics are carried by the mean rotation angle theta, the
total photon number n_plus and the 2x2 covariance of the stochastic mean
fields in the co-rotated measurement basis.  The propagation coordinate
is the dimensionless atom count N_z = rho_A * A * z.  Per-atom emitter
coefficients come either from the closed forms or from the counting
engines:

    I_eta  = tau * kappa1_eta_dyn / n_plus        (renormalized flux)
    Dmat   = tau * (kappa2_dyn - diag kappa1_dyn) (diffusion, counts^2)
    Dbreve = v_- . Dmat v_- / n_plus**2

The diffusion subtraction keeps the flow consistent with the evolving
shot-noise floor diag(nu): total counts variance = Sigma^2 + diag(nu).
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np
from scipy.integrate import solve_ivp

from .params import MagnetometerParams
from .fcs import cumulants_resolvent, CumulantReport
from . import closedform

V_MINUS = np.array([1.0, -1.0])
XI_ROT = np.array([[1.0, 1.0], [-1.0, -1.0]])   # sigma_z + i sigma_y


class FlowOverflowError(RuntimeError):
    pass


class StiffFlowError(RuntimeError):
    pass


@dataclass
class EmitterCoefficients:
    """Per-atom renormalized emitter response in the rotated basis."""

    i_x: float            # fractional x-channel transfer per atom
    i_y: float
    d_matrix: np.ndarray  # 2x2 diffusion matrix / n_plus**2 (dimensionless)
    provenance: str       # "closedform" | "fcs"

    @property
    def i_plus(self):
        return self.i_x + self.i_y

    @property
    def i_minus(self):
        return self.i_x - self.i_y

    @property
    def d_minus(self):
        return float(V_MINUS @ self.d_matrix @ V_MINUS)

    @classmethod
    def from_report(cls, rep: CumulantReport, n_plus, provenance="fcs"):
        i_x = rep.tau * rep.kappa1_dyn["x"] / n_plus
        i_y = rep.tau * rep.kappa1_dyn["y"] / n_plus
        dmat = rep.tau * (rep.kappa2_dyn
                          - np.diag([rep.kappa1_dyn["x"], rep.kappa1_dyn["y"]])) / n_plus ** 2
        return cls(i_x=i_x, i_y=i_y, d_matrix=dmat, provenance=provenance)

    @classmethod
    def from_fcs(cls, params: MagnetometerParams, model="semiclassical-2lvl"):
        rep = cumulants_resolvent(params, model=model)
        return cls.from_report(rep, params.n_photons_in, provenance="fcs")

    @classmethod
    def from_closedform(cls, params: MagnetometerParams):
        """Dissipation-free closed forms (gamma = gamma_z = 0 limit)."""
        k1m, k2m, _, _ = closedform.emitter_rates_closed(params)
        n_plus = params.n_photons_in
        i_x = params.tau * 0.5 * k1m / n_plus
        i_y = -i_x
        dmat = np.zeros((2, 2))
        # only the minus combination is constrained by the closed forms;
        # distribute it symmetrically (plus-channel diffusion vanishes at
        # gamma = gamma_z = 0)
        dmat[0, 0] = dmat[1, 1] = 0.25 * params.tau * k2m / n_plus ** 2
        dmat[0, 1] = dmat[1, 0] = -dmat[0, 0]
        return cls(i_x=i_x, i_y=i_y, d_matrix=dmat, provenance="closedform")


@dataclass
class FlowState:
    """Beam statistics after traversing N_z atoms (rotated basis)."""

    theta: float
    n_plus: float
    sigma2: np.ndarray    # 2x2 stochastic-mean-field covariance (counts^2)
    z: float              # propagation coordinate N_z = rho_A A z

    def __post_init__(self):
        if self.n_plus <= 0:
            raise ValueError("n_plus must stay positive")
        sym = np.max(np.abs(self.sigma2 - self.sigma2.T))
        if sym > 1e-8 * (1.0 + np.max(np.abs(self.sigma2))):
            raise ValueError("sigma2 must be symmetric")
        if abs(self.theta) > np.pi / 2:
            import warnings
            warnings.warn("rotation angle left the principal branch (-pi/2, pi/2)")

    @property
    def total_minus_variance(self):
        """Counts variance of n_rot,-: mean-field part plus shot noise."""
        return float(V_MINUS @ self.sigma2 @ V_MINUS) + self.n_plus

    @property
    def mean_minus(self):
        """<n_-(tau)> in the unrotated basis, n_plus * sin(2 theta)."""
        return self.n_plus * np.sin(2.0 * self.theta)


def propagate_closed(params: MagnetometerParams, coeffs: EmitterCoefficients,
                     n_z=None) -> FlowState:
    """Constant-coefficient analytic propagation.

    theta = N (I_x - I_y)/2,  n_plus = n_in exp((I_x + I_y) N),
    Sigma2 = N * Dmat * n_in**2  (stochastic-mean-field part; the total
    variance adds the final shot noise).
    """
    n = params.n_atoms if n_z is None else n_z
    expo = coeffs.i_plus * n
    if abs(expo) > 700.0:
        raise FlowOverflowError(f"attenuation exponent {expo:.3g} out of range")
    n_in = params.n_photons_in
    return FlowState(
        theta=0.5 * n * coeffs.i_minus,
        n_plus=n_in * np.exp(expo),
        sigma2=n * coeffs.d_matrix * n_in ** 2,
        z=n,
    )


def phase_space_matrix(params: MagnetometerParams, rel_step=1e-4):
    """Numerical phase-space matrix C[eta, zeta] = d I_eta / d nu_zeta.

    Perturbs the per-channel intensities through the microscopic
    consistency map Omega_eta = 2 sqrt(gamma_z nu_dot_eta) and measures
    the response of the per-atom transfer rates (in units of the local
    photons, i.e. dimensionless per atom).
    """
    from .superop import build_two_level, CountingFields
    from .fcs import _tilt_directions, _eig_derivatives

    n_in = params.n_photons_in
    base = np.array([0.5 * n_in, 0.5 * n_in])

    def rates(nu):
        om = tuple(2.0 * np.sqrt(params.gamma_z * nu_i / params.tau) for nu_i in nu)
        k = 2
        from .dual import D2
        cf = CountingFields(chi_x=D2.seed(0.0, 0, k), chi_y=D2.seed(0.0, 1, k))
        til = build_two_level(params, cf, omega_xy=om)
        _, lam1, _ = _eig_derivatives(til.matrix, til.dim)
        return params.tau * np.real(1j * lam1[:2])

    c = np.zeros((2, 2))
    for z in range(2):
        dn = rel_step * base[z]
        up = base.copy()
        dn_v = base.copy()
        up[z] += dn
        dn_v[z] -= dn
        c[:, z] = (rates(up) - rates(dn_v)) / (2.0 * dn)
    return c


def propagate_ode(params: MagnetometerParams, coeffs: EmitterCoefficients,
                  n_z=None, c_matrix=None, rtol=1e-10, atol=None,
                  n_eval=None) -> FlowState:
    """Numerical integration of the mean/covariance flow equations.

    d theta/dN  = (I_x - I_y)/2
    d n_plus/dN = (I_x + I_y) n_plus
    d Sigma2/dN = Dmat * n_plus(0)**2 + Ct Sigma2 + Sigma2 Ct^T,
    with Ct = C - (d theta/dN) Xi the rotation-corrected phase-space
    matrix (C defaults to zero, matching the closed form, whose diffusion
    source is normalized to the initial intensity).
    """
    n = params.n_atoms if n_z is None else n_z
    n_in = params.n_photons_in
    ct = (np.zeros((2, 2)) if c_matrix is None
          else c_matrix - 0.5 * coeffs.i_minus * XI_ROT)

    scale_sig = max(np.max(np.abs(coeffs.d_matrix)) * n_in ** 2, 1.0)

    def rhs(_, y):
        theta, logn, s = y[0], y[1], y[2:].reshape(2, 2)
        dtheta = 0.5 * coeffs.i_minus
        dlogn = coeffs.i_plus
        dsig = coeffs.d_matrix * n_in ** 2 + ct @ s + s @ ct.T
        return np.concatenate(([dtheta, dlogn], dsig.reshape(-1)))

    y0 = np.concatenate(([0.0, np.log(n_in)], np.zeros(4)))
    sol = solve_ivp(rhs, (0.0, n), y0, method="RK45", rtol=rtol,
                    atol=atol if atol is not None else scale_sig * 1e-12)
    if not sol.success:
        raise StiffFlowError(sol.message)
    yf = sol.y[:, -1]
    sigma = yf[2:].reshape(2, 2)
    sigma = 0.5 * (sigma + sigma.T)
    return FlowState(theta=yf[0], n_plus=np.exp(yf[1]), sigma2=sigma, z=n)


def snr_semiclassical(params: MagnetometerParams, engine="fcs",
                      model="semiclassical-2lvl"):
    """(signal, noise, snr, qfi_total) for N independent atoms.

    signal: fixed-rotation derivative of <n_rot,-> per h_z including the
    attenuation of the transmitted beam; noise: total variance of
    n_rot,-; snr = signal**2/noise; qfi_total = N-fold single-atom
    Fisher information over tau (per h_z**2).
    """
    if engine == "closedform":
        k1m, k2m, qfi_rate, slope = closedform.emitter_rates_closed(params)
        coeffs = EmitterCoefficients.from_closedform(params)
    else:
        rep = cumulants_resolvent(params, model=model)
        qfi_rate = rep.qfi_rate
        slope = rep.signal_slope
        coeffs = EmitterCoefficients.from_report(rep, params.n_photons_in)
    state = propagate_closed(params, coeffs)
    attenuation = state.n_plus / params.n_photons_in
    signal = params.tau * params.n_atoms * slope * attenuation
    noise = state.total_minus_variance
    snr = signal ** 2 / noise
    qfi_total = params.tau * params.n_atoms * qfi_rate
    return signal, noise, snr, qfi_total


def crb_witness_semiclassical(params: MagnetometerParams, engine="fcs"):
    """Experimental consistency inequality in the semiclassical model.

    Evaluates (mu**2 eps_delta**2 / Omega**4) <dn_-^2> > <d_Bz n_->**2
    per h_z-unit bookkeeping (mu = 1 default).  Returns (satisfied, lhs,
    rhs): satisfied=False flags a Cramer-Rao-bound violation.
    """
    signal, noise, _, _ = snr_semiclassical(params, engine=engine)
    lhs = (params.mu ** 2 * params.eps_delta ** 2 / params.omega ** 4) * noise
    rhs = (params.mu * signal) ** 2
    return lhs > rhs, lhs, rhs
