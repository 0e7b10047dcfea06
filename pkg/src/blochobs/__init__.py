"""Numerics for Bloch-shifted Schrodinger operators on tori and their observability.

Submodules: fields, spectral, propagator, floquet, observability, inequalities,
semiclassical, normal_form, potentials, harness.
"""

from .fields import ModeSet, TorusField, lp_norm, multiply
from .potentials import from_tag
from .propagator import evolve, evolve_many
from .spectral import (
    BlochOperator,
    EigenSystem,
    assemble_operator,
    eigendecompose,
    functional_calculus,
    resolvent_apply,
    sobolev_norm,
)

__version__ = "0.1.0"
