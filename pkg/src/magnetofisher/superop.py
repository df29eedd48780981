"""Counting-field-tilted Liouvillian builders.

Three dense builders share one convention set:

* basis rotation: the probe is linearly polarized; in the measurement
  basis its Rabi components are (Omega_x, Omega_y) =
  Omega*(cos(pi/4 + theta_rot), sin(pi/4 + theta_rot)), equal at
  theta_rot = 0 so that both detector channels see the same mean flux;
* counting fields chi_x, chi_y tag photon emission into the two detector
  polarization channels with exp(-i*chi) phases (front and back factors
  both carry the -chi convention required by the coherent-state counting
  kernel);
* a Fisher tilt delta shifts the longitudinal Zeeman coupling to
  h_z + delta on the front and h_z - delta on the back of the density
  matrix (delta is expressed in h_z units);
* the pump dissipator lowers the spin toward <sigma_x> = -1
  (collectively <S_x>/N = -1/2, the Holstein-Primakoff vacuum).

Vectorization is column-stacking: vec(A rho B) = kron(B.T, A) vec(rho).

All scalar coefficients may be `D2` dual numbers; the returned matrix is
then a `DualMatrix` carrying exact first/second tilt derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np

from .dual import D2, DualMatrix, dexp
from .params import MagnetometerParams, CollectiveScaledParams

# Pauli matrices in the ordered basis (|g_+>, |g_->); sigma_z |g_a> = a |g_a>.
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENT2 = np.eye(2, dtype=complex)

N_MAX_DEFAULT = 80


@dataclass(frozen=True)
class CountingFields:
    """Counting fields of the two polarization channels plus Fisher tilt.

    Components may be floats or D2 duals; delta is in h_z units.
    """

    chi_x: object = 0.0
    chi_y: object = 0.0
    delta: object = 0.0

    @classmethod
    def from_pm(cls, chi_plus, chi_minus, delta=0.0):
        """chi_x = chi_+ + chi_-, chi_y = chi_+ - chi_-."""
        return cls(chi_x=chi_plus + chi_minus, chi_y=chi_plus - chi_minus, delta=delta)

    @property
    def is_dual(self):
        return any(isinstance(v, D2) for v in (self.chi_x, self.chi_y, self.delta))


@dataclass
class TiltedLiouvillian:
    """Dense tilted Liouvillian acting on column-stacked density matrices."""

    dim: int            # Hilbert-space dimension d
    matrix: object      # (d*d, d*d) complex ndarray, or DualMatrix
    model: str          # "FourLevel" | "TwoLevel" | "CollectiveFinite"

    @property
    def nmat(self):
        """Plain ndarray view of the zeroth-order matrix."""
        return self.matrix.val if isinstance(self.matrix, DualMatrix) else self.matrix

    def trace_vector(self):
        """Left trace functional <<1| as a flat vector."""
        return np.eye(self.dim, dtype=complex).reshape(-1, order="F")


# ---------------------------------------------------------------------------
# vectorization helpers


def _kron(left, right):
    """np.kron via one fused broadcast pass (faster on large blocks)."""
    n1, m1 = left.shape
    n2, m2 = right.shape
    out = left[:, None, :, None] * right[None, :, None, :]
    return np.ascontiguousarray(out.reshape(n1 * n2, m1 * m2))


def spre(a):
    return _kron(np.eye(a.shape[0], dtype=complex), np.asarray(a, dtype=complex))


def spost(b):
    b = np.asarray(b, dtype=complex)
    return _kron(b.T, np.eye(b.shape[0], dtype=complex))


def sandwich(a, b):
    """Superoperator rho -> a rho b."""
    return _kron(np.asarray(b, dtype=complex).T, np.asarray(a, dtype=complex))


def dissipator(op):
    """Standard Lindblad dissipator D[op] as a dense superoperator."""
    opd = op.conj().T
    anti = opd @ op
    return sandwich(op, opd) - 0.5 * (spre(anti) + spost(anti))


def vec(rho):
    return np.asarray(rho, dtype=complex).reshape(-1, order="F")


def unvec(v):
    d = int(round(np.sqrt(v.size)))
    return v.reshape((d, d), order="F")


class _Accumulator:
    """Collects left/right/sandwich operator terms with scalar or dual
    coefficients, expanding to the full superoperator only once.

    Left and right factors are accumulated at the d x d level (one kron
    per derivative block at the end); sandwich pairs are expanded
    individually but are few per builder.
    """

    def __init__(self, dim, k):
        self.dim = dim
        self.k = k
        shape = (dim, dim)
        self.pre = self._blocks(shape)
        self.post = self._blocks(shape)
        self.sandwiches = []     # (coeff, a, b) -> a rho b

    def _blocks(self, shape):
        blocks = {"val": np.zeros(shape, dtype=complex)}
        if self.k:
            blocks["g"] = np.zeros((self.k, *shape), dtype=complex)
            blocks["h"] = np.zeros((self.k, self.k, *shape), dtype=complex)
        return blocks

    def _accumulate(self, blocks, coeff, op):
        if isinstance(coeff, D2):
            if not self.k:
                raise ValueError("dual coefficient in a scalar build")
            blocks["val"] += coeff.val * op
            blocks["g"] += coeff.g[:, None, None] * op[None, :, :]
            blocks["h"] += coeff.h[:, :, None, None] * op[None, None, :, :]
        elif coeff != 0:
            blocks["val"] += coeff * op

    def add_pre(self, coeff, op):
        self._accumulate(self.pre, coeff, op)

    def add_post(self, coeff, op):
        self._accumulate(self.post, coeff, op)

    def add_sandwich(self, coeff, a, b):
        if isinstance(coeff, D2) or coeff != 0:
            self.sandwiches.append((coeff, a, b))

    def add_dissipator(self, coeff, op):
        opd = op.conj().T
        anti = opd @ op
        self.add_sandwich(coeff, op, opd)
        self.add_pre(-0.5 * coeff if not isinstance(coeff, D2) else coeff * (-0.5), anti)
        self.add_post(-0.5 * coeff if not isinstance(coeff, D2) else coeff * (-0.5), anti)

    def result(self):
        d = self.dim
        eye = np.eye(d, dtype=complex)
        val = _kron(eye, self.pre["val"]) + _kron(self.post["val"].T, eye)
        plain_sand = [(c, a, b) for (c, a, b) in self.sandwiches
                      if not isinstance(c, D2)]
        dual_sand = [(c, a, b) for (c, a, b) in self.sandwiches
                     if isinstance(c, D2)]
        for c, a, b in plain_sand:
            val += c * _kron(b.T, a)
        if not self.k:
            return val
        g = np.empty((self.k, d * d, d * d), dtype=complex)
        for i in range(self.k):
            g[i] = _kron(eye, self.pre["g"][i]) + _kron(self.post["g"][i].T, eye)
        h = np.empty((self.k, self.k, d * d, d * d), dtype=complex)
        for i in range(self.k):
            for j in range(self.k):
                h[i, j] = _kron(eye, self.pre["h"][i, j]) \
                    + _kron(self.post["h"][i, j].T, eye)
        for c, a, b in dual_sand:
            term = _kron(b.T, a)
            val += c.val * term
            g += c.g[:, None, None] * term[None, :, :]
            h += c.h[:, :, None, None] * term[None, None, :, :]
        return DualMatrix(val, g, h)


def _ndirections(*scalars):
    for v in scalars:
        if isinstance(v, D2):
            return v.k
    return 0


def omega_components(omega, theta_rot):
    """Rabi components in the measurement basis (equal at theta_rot = 0)."""
    beta = np.pi / 4.0 + theta_rot
    return omega * np.cos(beta), omega * np.sin(beta)


# ---------------------------------------------------------------------------
# two-level model (adiabatically eliminated ground manifold)


def build_two_level(params: MagnetometerParams, cf: CountingFields,
                    theta_rot=0.0, h_z=None, omega_xy=None) -> TiltedLiouvillian:
    """Ground-manifold generalized master equation of a single atom.

    Obtained from the four-level model by adiabatic elimination of the
    excited states at large detuning.  The drive-coherence cross terms
    carry coefficients (+-i*eps_delta - Gamma/2)/(4*(eps_delta**2 +
    Gamma**2/4)): the imaginary part is the differential light shift
    responsible for Faraday rotation, the real part the photon-exchange
    damping.  Emission feeds back through two polarization-resolved jump
    channels tagged with exp(-i*chi_eta).  `h_z` optionally overrides the
    parameter value (and may be a dual for sensitivity derivatives);
    `omega_xy` overrides the Rabi components directly (used by the flow
    layer to probe intensity derivatives channel by channel).
    """
    hz = params.h_z if h_z is None else h_z
    k = _ndirections(cf.chi_x, cf.chi_y, cf.delta, hz)
    delta = cf.delta
    gamma_D = params.gamma / 3.0
    Gamma = params.Gamma
    absK2 = params.eps_delta ** 2 + Gamma ** 2 / 4.0
    cL = (1j * params.eps_delta - 0.5 * Gamma) / (4.0 * absK2)
    cR = (-1j * params.eps_delta - 0.5 * Gamma) / (4.0 * absK2)

    if omega_xy is None:
        om_x, om_y = omega_components(params.omega, theta_rot)
    else:
        om_x, om_y = omega_xy
    ex = dexp(-1j * cf.chi_x)
    ey = dexp(-1j * cf.chi_y)
    # Omega_{a,0} and the chi-tagged combinations entering front/back factors
    omega_a0 = {+1: om_x + 1j * om_y, -1: om_x - 1j * om_y}
    pi_op = {+1: (IDENT2 + SIGMA_Z) / 2.0, -1: (IDENT2 - SIGMA_Z) / 2.0}

    acc = _Accumulator(2, k)

    # coherent ground-manifold part with the Fisher tilt
    acc.add_pre(0.5j * params.h_x, SIGMA_X)
    acc.add_pre(0.5j * (hz + delta), SIGMA_Z)
    acc.add_post(-0.5j * params.h_x, SIGMA_X)
    acc.add_post(-0.5j * (hz - delta), SIGMA_Z)

    # pump toward <sigma_x> = -1
    acc.add_dissipator(params.gamma_P, 0.5 * (SIGMA_Z + 1j * SIGMA_Y))

    # drive-coherence cross terms (light shift + stimulated damping)
    for a in (+1, -1):
        front = omega_a0[a] * (om_x * ex - 1j * a * om_y * ey)
        back = np.conj(omega_a0[a]) * (om_x * ex + 1j * a * om_y * ey)
        acc.add_pre(cL * front, pi_op[a])
        acc.add_post(cR * back, pi_op[a])

    # probe-direction emission, polarization resolved (rates gamma_z/2 each)
    d_op = omega_a0[+1] * pi_op[+1] + omega_a0[-1] * pi_op[-1]
    dt_op = omega_a0[+1] * pi_op[+1] - omega_a0[-1] * pi_op[-1]
    acc.add_sandwich(params.gamma_z / (8.0 * absK2) * ex, d_op, d_op.conj().T)
    acc.add_sandwich(params.gamma_z / (8.0 * absK2) * ey, dt_op, dt_op.conj().T)

    # spontaneous feeding (uncounted): spin preserving and spin flipping
    acc.add_sandwich(2.0 * gamma_D / (4.0 * absK2), d_op, d_op.conj().T)
    flip = SIGMA_X @ d_op
    acc.add_sandwich(gamma_D / (4.0 * absK2), flip, flip.conj().T)

    return TiltedLiouvillian(2, acc.result(), "TwoLevel")


# ---------------------------------------------------------------------------
# four-level microscopic model (rotating frame at the probe frequency)


def build_four_level(params: MagnetometerParams, cf: CountingFields,
                     theta_rot=0.0, h_z=None) -> TiltedLiouvillian:
    """Single-atom four-level generalized master equation.

    Basis order (|g_+>, |g_->, |e_+>, |e_->).  The frame rotates at the
    probe frequency, so the excited manifold sits at eps_delta and the
    generator is time independent.
    """
    hz = params.h_z if h_z is None else h_z
    k = _ndirections(cf.chi_x, cf.chi_y, cf.delta, hz)
    om_x, om_y = omega_components(params.omega, theta_rot)
    gamma_D = params.gamma / 3.0

    def ket_bra(i, j):
        m = np.zeros((4, 4), dtype=complex)
        m[i, j] = 1.0
        return m

    G = {+1: 0, -1: 1}
    E = {+1: 2, -1: 3}
    proj_e = ket_bra(2, 2) + ket_bra(3, 3)
    sx_g = ket_bra(0, 1) + ket_bra(1, 0)
    sy_g = -1j * ket_bra(0, 1) + 1j * ket_bra(1, 0)
    sz_g = ket_bra(0, 0) - ket_bra(1, 1)

    omega_a0 = {+1: om_x + 1j * om_y, -1: om_x - 1j * om_y}
    raise_op = {a: ket_bra(E[-a], G[a]) for a in (+1, -1)}
    lower_op = {a: ket_bra(G[a], E[-a]) for a in (+1, -1)}
    ex = dexp(-1j * cf.chi_x)
    ey = dexp(-1j * cf.chi_y)

    acc = _Accumulator(4, k)

    # static front/back Hamiltonian parts (chi-untagged)
    h_static = params.eps_delta * proj_e - 0.5 * params.h_x * sx_g
    front_static = h_static + sum(0.5 * omega_a0[a] * raise_op[a] for a in (+1, -1))
    back_static = h_static + sum(0.5 * np.conj(omega_a0[a]) * lower_op[a] for a in (+1, -1))
    acc.add_pre(-1j, front_static)
    acc.add_post(1j, back_static)

    # longitudinal Zeeman coupling with the Fisher tilt
    acc.add_pre(0.5j * (hz + cf.delta), sz_g)
    acc.add_post(-0.5j * (hz - cf.delta), sz_g)

    # chi-tagged drive halves: front lowering conj(Omega_{a,chi})/2, back
    # raising Omega_{a,-chi}/2
    for a in (+1, -1):
        front_lower = om_x * ex - 1j * a * om_y * ey
        back_raise = om_x * ex + 1j * a * om_y * ey
        acc.add_pre(-0.5j * front_lower, lower_op[a])
        acc.add_post(0.5j * back_raise, raise_op[a])

    # counted probe-direction emission channels at rate gamma_z/2 each
    a_x = lower_op[+1] + lower_op[-1]
    a_y = -1j * lower_op[+1] + 1j * lower_op[-1]
    for op, phase in ((a_x, ex), (a_y, ey)):
        anti = op.conj().T @ op
        acc.add_sandwich(0.5 * params.gamma_z * phase, op, op.conj().T)
        acc.add_pre(-0.25 * params.gamma_z, anti)
        acc.add_post(-0.25 * params.gamma_z, anti)

    # spontaneous decay: cross channels at 2 gamma_D, parallel at gamma_D
    for a in (+1, -1):
        acc.add_dissipator(2.0 * gamma_D, lower_op[a])
        acc.add_dissipator(gamma_D, ket_bra(G[a], E[a]))

    # pump within the ground manifold, mirroring the two-level convention
    acc.add_dissipator(params.gamma_P, 0.5 * (sz_g + 1j * sy_g))

    return TiltedLiouvillian(4, acc.result(), "FourLevel")


# ---------------------------------------------------------------------------
# collective finite-size model (symmetric Dicke sector)


def collective_spin_ops(n_atoms):
    """Spin-N/2 matrices S_x, S_y, S_z in the Dicke basis (dimension N+1)."""
    n = int(n_atoms)
    j = n / 2.0
    m = j - np.arange(n + 1)             # m = j, j-1, ..., -j
    sz = np.diag(m).astype(complex)
    amp = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    sp = np.zeros((n + 1, n + 1), dtype=complex)
    sp[np.arange(n), np.arange(1, n + 1)] = amp
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return sx, sy, sz


def build_collective_finite(scaled: CollectiveScaledParams, cf: CountingFields,
                            n_max=N_MAX_DEFAULT, h_z=None) -> TiltedLiouvillian:
    """Collective generalized master equation in the symmetric Dicke sector.

    Pump (kappa_P/N) D[S_z + i S_y] plus the probe-direction dissipators.
    At zero counting fields the probe part reduces exactly to
    (kappa_z/N) sum_a D[P_a]; with counting fields it resolves into the
    two polarization channels including interchannel cross terms (they
    cancel at chi = 0).  When the scaled parameters carry probe data
    (omega, eps_delta) the dispersive light-shift cross terms of the
    eliminated excited manifold are included too, so N = 1 reproduces the
    two-level builder with gamma = 0.
    """
    n = int(scaled.n_atoms)
    if n > n_max:
        raise ValueError(f"collective builder capacity exceeded: N={n} > {n_max}")
    if n < 1:
        raise ValueError("need at least one atom")
    hz = scaled.h_z if h_z is None else h_z
    k = _ndirections(cf.chi_x, cf.chi_y, cf.delta, hz)
    d = n + 1
    sx, sy, sz = collective_spin_ops(n)
    ident = np.eye(d, dtype=complex)
    p_op = {a: 0.5 * n * ident + a * sz for a in (+1, -1)}

    ex = dexp(-1j * cf.chi_x)
    ey = dexp(-1j * cf.chi_y)

    acc = _Accumulator(d, k)

    # coherent part with tilt: H_front = -h_x S_x - (h_z + delta) S_z
    acc.add_pre(1j * scaled.h_x, sx)
    acc.add_post(-1j * scaled.h_x, sx)
    acc.add_pre(1j * (hz + cf.delta), sz)
    acc.add_post(-1j * (hz - cf.delta), sz)

    # collective pump toward the Holstein-Primakoff vacuum <S_x>/N = -1/2
    acc.add_dissipator(scaled.kappa_P / n, sz + 1j * sy)

    if scaled.has_probe:
        om_x, om_y = omega_components(scaled.omega, 0.0)
        om2 = om_x ** 2 + om_y ** 2
        absK2 = scaled.eps_delta ** 2 + scaled.Gamma ** 2 / 4.0
        cL = (1j * scaled.eps_delta - 0.5 * scaled.Gamma) / (4.0 * absK2)
        cR = (-1j * scaled.eps_delta - 0.5 * scaled.Gamma) / (4.0 * absK2)
        omega_a0 = {+1: om_x + 1j * om_y, -1: om_x - 1j * om_y}
        # dispersive cross terms, linear in P_a (one-body elimination);
        # only the counting-field difference survives, so the zero-tilt
        # generator stays exactly trace preserving
        for a in (+1, -1):
            front = omega_a0[a] * (om_x * ex - 1j * a * om_y * ey)
            back = np.conj(omega_a0[a]) * (om_x * ex + 1j * a * om_y * ey)
            f0 = omega_a0[a] * (om_x - 1j * a * om_y)
            b0 = np.conj(omega_a0[a]) * (om_x + 1j * a * om_y)
            acc.add_pre(cL * (front - f0), p_op[a])
            acc.add_post(cR * (back - b0), p_op[a])
        # polarization-resolved collective emission with the exp(-i chi)
        # jump tags; anticommutators complete the Lindblad form so the
        # zero-tilt part equals (kappa_z/N) sum_a D[P_a]
        d_op = omega_a0[+1] * p_op[+1] + omega_a0[-1] * p_op[-1]
        dt_op = omega_a0[+1] * p_op[+1] - omega_a0[-1] * p_op[-1]
        jump_rate = scaled.kappa_z / (2.0 * n * om2)
        acc.add_sandwich(jump_rate * ex, d_op, d_op.conj().T)
        acc.add_sandwich(jump_rate * ey, dt_op, dt_op.conj().T)
        anti = 0.5 * (d_op.conj().T @ d_op + dt_op.conj().T @ dt_op)
        acc.add_pre(-jump_rate, anti)
        acc.add_post(-jump_rate, anti)
    else:
        # relaxation-only parameterization: (kappa_z/N) sum_a D_chi[P_a]
        # split evenly over the two counting channels
        for a in (+1, -1):
            p2 = p_op[a] @ p_op[a]
            acc.add_sandwich(0.5 * scaled.kappa_z / n * ex, p_op[a], p_op[a])
            acc.add_sandwich(0.5 * scaled.kappa_z / n * ey, p_op[a], p_op[a])
            acc.add_pre(-0.5 * scaled.kappa_z / n, p2)
            acc.add_post(-0.5 * scaled.kappa_z / n, p2)

    return TiltedLiouvillian(d, acc.result(), "CollectiveFinite")
