"""Numerical toolkit for hypersurfaces carrying codimension-one totally
geodesic foliations: jets, curves, pointwise geometry, constructions and
classification predicates."""

__version__ = "0.1.0"

from .numjet import SmoothMap, eval_jet, directional_derivative
from .geometry import (DistributionField, ImmersionField, Subspace, geometry_jet,
                       relative_nullity, principal_curvatures)
from .curves import (curve_from_curvatures, frenet_apparatus, omega_margin,
                     parallel_normal_frame)
from .classify import (Case, adapted_frame, classify_point, is_curvature_invariant,
                       is_line_of_curvature_trajectory, is_totally_geodesic,
                       residual_suite)
from .constructions import (build_flat_envelope, build_partial_tube,
                            build_rotation_hypersurface, build_ruled_example,
                            build_surface_like)
