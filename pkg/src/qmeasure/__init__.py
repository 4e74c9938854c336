"""Simulation toolkit for quantum measurement theory on discretized spaces.

Observables (POVMs), instruments and measurement schemes, weak values and
their zero-coupling limits, and two state-reconstruction pipelines.
"""

__version__ = "0.1.0"

from .hilbert import (  # noqa: E402
    DensityOperator,
    GridSpec,
    StateVector,
    coherent_state,
    density,
    gaussian_state,
    make_grid,
    mixture,
    qubit_ops,
    qubit_state,
    wavefunction,
)
from .observables import BinnedObservable, OutcomeBin, PostselectionError, ProbabilityMeasure  # noqa: E402
from .instruments import Instrument, MeasurementScheme, boost_scheme, standard_model  # noqa: E402
from .weak_values import WeakValueQuery, conditional_average, weak_value  # noqa: E402

__all__ = [
    "BinnedObservable",
    "DensityOperator",
    "GridSpec",
    "Instrument",
    "MeasurementScheme",
    "OutcomeBin",
    "PostselectionError",
    "ProbabilityMeasure",
    "StateVector",
    "WeakValueQuery",
    "boost_scheme",
    "coherent_state",
    "conditional_average",
    "density",
    "gaussian_state",
    "make_grid",
    "mixture",
    "qubit_ops",
    "qubit_state",
    "standard_model",
    "wavefunction",
    "weak_value",
]
