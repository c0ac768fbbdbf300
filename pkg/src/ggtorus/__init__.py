"""Computational generalized geometry on flat tori.

Executable, property-tested realizations of twisted Dorfman brackets on
exact and odd exact Courant algebroids, their symmetry groups and
derivation algebras, generalized metrics with group actions and averaging,
Hodge theory, slice-theorem operator decompositions and the stratification
of desk-scale moduli samples.
"""

from .grid import (
    TorusGrid, ScalarField, VectorField, KForm, SymTensor2,
    FourierModeSpec, Mode, make_grid, sample, field_to_csv,
)
from .calculus import (
    AffineDiffeo, ext_deriv, wedge, interior, contract2,
    lie_form, lie_sym, lie_bracket, grad, pullback, pushforward,
)
from .courant import (
    ExactSection, OddSection, TwistData, pairing, dorfman,
    dorfman_exact, dorfman_odd, axiom_residuals, shift_splitting,
    three_form_of_splitting,
)
from .hodge import HodgeContext, flat_context
from .symmetry import GroupElement, Derivation
from .genmetric import GenMetric, GMTangent

__version__ = "0.1.0"
