"""Trapped-ion / diffractive-mirror photon collection toolkit.

Simulates the photon path of a single ion above an integrated Fresnel mirror:
dipole emission capture (:mod:`~ionmirror.radiometry`), relief synthesis and
scalar imaging (:mod:`~ionmirror.diffractive`), single-mode fiber coupling
(:mod:`~ionmirror.fibercoupling`), the triggered single-photon protocol
(:mod:`~ionmirror.protocol`) with two-detector correlations
(:mod:`~ionmirror.correlation`), and the efficiency budget
(:mod:`~ionmirror.budget`).
"""

__version__ = "0.1.0"

from .radiometry import (  # noqa: F401
    ApertureGeometry,
    EmissionPattern,
    PolarizerSetting,
    TransitionKind,
    collection_fraction,
    emission_intensity,
    equivalent_circular_na,
    polarizer_transmission,
    solid_angle_fraction,
)
