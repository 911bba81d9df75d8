"""Convolution algebras on tangent groupoids, evaluated numerically in DNC coordinates."""

from __future__ import annotations

from .convolution import (
    LazyField, TwoVariableField, bundle_convolve, convolve, evaluate_e0, evaluate_et, fiber_integrate,
    groupoid_convolve, haar_integrate, haar_invariance_defect, kernel_composition_oracle, m_rc, separated,
)
from .dnc_atlas import (
    PairMorphism, SlicePair, compose, identity_morphism, psi, psi_forward, psi_inverse,
    smoothness_probe, transition_map,
)
from .errors import (
    CompositionError, ConfigError, DeformError, DomainError, NonInvertibleError, QuadratureToleranceError,
    ResolutionError, SeriesError, StencilError, UncoveredRegionError,
)
from .families import FamilySpec, gaussian, hermite_gaussian, windowed_polynomial
from .groupoids import GROUPOID_KEYS, groupoid_from_key, tangent_groupoid
from .quadrature import QuadratureSpec
from .scenarios import ReportRow, Scenario, emit_series, run_scenario
from .schwartz_fields import (
    BundleSchwartzField, FiberLattice, SchwartzDncField, conic_support_check, fourier_fiber_transform,
    partition_decompose, pullback, seminorm_estimate, two_chart_partition,
)
from .supports import ConicBox, ConicCompactSet

__all__ = [name for name in dir() if not name.startswith("_") and name != "annotations"]
__version__ = "0.1.0"
