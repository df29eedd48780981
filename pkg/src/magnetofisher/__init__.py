"""Faraday-magnetometer counting statistics, SNR and quantum Fisher information.

Two atomic models are implemented: a semiclassical single-atom model
(four-level microscopic and its adiabatic two-level reduction) and a
collective-spin model (exact finite-size Dicke sector and a non-unitary
Holstein-Primakoff mean field for the thermodynamic limit).  Photon
statistics are extracted from counting-field-tilted Liouvillians.
"""

__version__ = "0.1.0"

from .params import MagnetometerParams, CollectiveScaledParams, derived_gamma_z, reference_params

__all__ = [
    "MagnetometerParams",
    "CollectiveScaledParams",
    "derived_gamma_z",
    "reference_params",
    "__version__",
]
