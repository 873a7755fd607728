"""Distances of conformal metrics ``f^2 g0`` on flat tori and the round sphere.

The building blocks are grids and background distances (:mod:`.manifold`),
conformal factors and sampled fields (:mod:`.fields`), a stencil-graph
shortest path solver (:mod:`.geodesic`), potentials of the Riesz kernel
(:mod:`.potential`), symmetric curve families (:mod:`.curves`) and the
degenerating example families (:mod:`.families`). :mod:`.experiments`
runs the numerical studies and writes reports.
"""
from .families import (ExampleFamily, bubbles_32, cinched_sphere_33, constant_family, make_family, singular_set_31,
                       spike_34)
from .fields import ScalarField, lp_norm, sample_factor, tensor_norm_field, tensor_norm_factor
from .geodesic import SolverConfig, metrication_bound, pair_distance, pair_distances, single_source
from .manifold import FlatTorus, RoundSphere2, build_grid, g0_distance, make_manifold
from .potential import PotentialConfig, potential_at, potential_field, sobolev_gate

__version__ = "0.1.0"

__all__ = [
    "ExampleFamily", "FlatTorus", "PotentialConfig", "RoundSphere2", "ScalarField", "SolverConfig",
    "build_grid", "bubbles_32", "cinched_sphere_33", "constant_family", "g0_distance", "lp_norm",
    "make_family", "make_manifold", "metrication_bound", "pair_distance", "pair_distances",
    "potential_at", "potential_field", "sample_factor", "single_source", "singular_set_31",
    "sobolev_gate", "spike_34", "tensor_norm_factor", "tensor_norm_field",
]
