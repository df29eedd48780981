"""Physical parameters and unit conventions.

All frequencies and rates are plain s^-1, read directly off the quoted
kHz/MHz/GHz values (no 2*pi insertion); only ratios enter the reported
results, so the convention is self-consistent.  The magnetic moment mu
defaults to 1 so that Fisher informations are reported per h_z = mu*B_z;
multiply by mu**2 to convert to a Fisher information per B_z.
"""

from __future__ import annotations

from dataclasses import dataclass, replace, fields
import math


def derived_gamma_z(omega, photon_flux):
    """Probe-direction decay rate fixed by microscopic consistency.

    gamma_z = Omega**2 / (4 * nu_dot), equivalent to
    Omega = 2*sqrt(gamma_z * n_photons / tau).
    """
    if photon_flux <= 0:
        raise ValueError("undefined consistency rate: photon flux must be positive")
    return omega ** 2 / (4.0 * photon_flux)


@dataclass(frozen=True)
class MagnetometerParams:
    """All physical inputs of the magnetometer models (rates in s^-1)."""

    h_x: float          # Zeeman coupling mu*B_x
    h_z: float          # Zeeman coupling mu*B_z (sweep variable)
    gamma: float        # spontaneous decay into all directions, gamma = 3*gamma_D
    gamma_z: float      # decay along the probe direction
    gamma_P: float      # phenomenological pump
    omega: float        # Rabi frequency of the probe (total, linear polarization)
    eps_delta: float    # detuning epsilon - omega_p
    tau: float          # measurement duration (s)
    n_atoms: float      # atom number N
    n_photons_in: float  # total input photons over tau
    mu: float = 1.0     # magnetic moment (s^-1 T^-1); 1 keeps results per h_z
    column: float = 1.0  # rho_A * A, atoms per unit propagation length

    def __post_init__(self):
        for name in ("h_x", "gamma", "gamma_z", "gamma_P", "omega", "tau",
                     "n_atoms", "n_photons_in"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.eps_delta == 0:
            raise ValueError("eps_delta must be nonzero")

    @property
    def Gamma(self):
        """Effective excited-state decay rate gamma + gamma_z."""
        return self.gamma + self.gamma_z

    @property
    def photon_flux(self):
        """Mean input photon flux nu_dot = n_photons_in / tau."""
        return self.n_photons_in / self.tau

    @property
    def c_atom(self):
        """Single-atom dispersive coupling C_A = Omega**2 / eps_delta."""
        return self.omega ** 2 / self.eps_delta

    def consistency_residual(self):
        """Relative mismatch of gamma_z against Omega**2/(4*nu_dot)."""
        target = derived_gamma_z(self.omega, self.photon_flux)
        if target == 0.0:
            return abs(self.gamma_z)
        return abs(self.gamma_z - target) / target

    def enforce_consistency(self, tol=1e-9):
        if self.consistency_residual() > tol:
            raise ValueError(
                "gamma_z violates the microscopic consistency relation "
                f"Omega = 2*sqrt(gamma_z*n/tau) (residual {self.consistency_residual():.3e})")
        return self

    def with_updates(self, **kw):
        return replace(self, **kw)


def reference_params(h_z=0.0, n_atoms=8e10):
    """Default D2-line rubidium-vapor parameter set used throughout.

    eps_delta = 10 GHz, gamma = 6 MHz, h_x = 500 kHz, Omega = 25 MHz,
    gamma_P = 30 kHz, tau = 1 s, n_photons_in = 6e12; gamma_z follows from
    the consistency relation.
    """
    omega = 25e6
    tau = 1.0
    n_in = 6e12
    return MagnetometerParams(
        h_x=5e5,
        h_z=h_z,
        gamma=6e6,
        gamma_z=derived_gamma_z(omega, n_in / tau),
        gamma_P=3e4,
        omega=omega,
        eps_delta=1e10,
        tau=tau,
        n_atoms=n_atoms,
        n_photons_in=n_in,
    )


@dataclass(frozen=True)
class CollectiveScaledParams:
    """Collective-model parameters with a well-defined thermodynamic limit.

    kappa_P = N*gamma_P and kappa_z = N*gamma_z*Omega**2/(4*(eps_delta**2
    + Gamma**2/4)) parameterize the collective pump and probe-direction
    dissipators directly.  The factor 4 in kappa_z comes from the adiabatic
    elimination (excited amplitudes Omega/2K); see the two-level reduction
    tests.  The optional fields carry what is needed to reconstruct the
    dispersive (counting-field) couplings and the incoming photon shot
    noise; leave them at zero for pure relaxation benchmarks.
    """

    kappa_P: float
    kappa_z: float
    h_x: float
    h_z: float
    tau: float
    n_atoms: float
    omega: float = 0.0       # total probe Rabi frequency (0: no dispersive terms)
    eps_delta: float = 0.0   # probe detuning
    Gamma: float = 0.0       # excited-state relaxation entering the denominators
    photon_flux: float = 0.0  # incoming photons per second (Poisson background)

    def __post_init__(self):
        for name in ("kappa_P", "kappa_z", "h_x", "tau", "n_atoms"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def has_probe(self):
        return self.omega > 0.0 and self.eps_delta != 0.0

    @classmethod
    def from_physical(cls, p: MagnetometerParams):
        """Scale a physical parameter set into collective form.

        The pump is interpreted as collective-scaled (gamma_P = kappa_P/N,
        so kappa_P keeps the quoted 30 kHz value); the probe-direction rate
        gamma_z is not rescaled and contributes kappa_z growing with N.
        The collective model drops transverse spontaneous emission (it acts
        locally, not collectively), so the effective excited-state width is
        gamma_z alone; with any other choice the collective generator would
        not preserve the trace.
        """
        denom = p.eps_delta ** 2 + p.gamma_z ** 2 / 4.0
        return cls(
            kappa_P=p.gamma_P,
            kappa_z=p.n_atoms * p.gamma_z * p.omega ** 2 / (4.0 * denom),
            h_x=p.h_x,
            h_z=p.h_z,
            tau=p.tau,
            n_atoms=p.n_atoms,
            omega=p.omega,
            eps_delta=p.eps_delta,
            Gamma=p.gamma_z,
            photon_flux=p.photon_flux,
        )

    def with_updates(self, **kw):
        return replace(self, **kw)


_SUFFIXES = {"k": 1e3, "M": 1e6, "G": 1e9}


def _parse_number(text):
    text = text.strip()
    if text and text[-1] in _SUFFIXES:
        return float(text[:-1]) * _SUFFIXES[text[-1]]
    return float(text)


def load_config(path):
    """Read a flat key=value config file into a MagnetometerParams.

    Keys match the MagnetometerParams field names; values are SI numbers
    with an optional k/M/G suffix.  A missing gamma_z is derived from the
    consistency relation.  Lines starting with '#' are ignored.
    """
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip()
            try:
                values[key] = _parse_number(val)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad numeric literal {val!r}") from exc

    known = {f.name for f in fields(MagnetometerParams)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "gamma_z" not in values:
        if not {"omega", "n_photons_in", "tau"} <= set(values):
            raise ValueError("config must provide gamma_z or (omega, n_photons_in, tau)")
        values["gamma_z"] = derived_gamma_z(values["omega"], values["n_photons_in"] / values["tau"])
    try:
        return MagnetometerParams(**values)
    except TypeError as exc:
        raise ValueError(f"incomplete config {path}: {exc}") from exc


def params_isclose(a: MagnetometerParams, b: MagnetometerParams, rtol=1e-12):
    return all(math.isclose(getattr(a, f.name), getattr(b, f.name), rel_tol=rtol, abs_tol=0.0)
               for f in fields(MagnetometerParams))
