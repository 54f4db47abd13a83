"""Correlated sensors over a non-coherent Gaussian MAC with feedback.

Submodules
----------
source
    Observation model, quantizer and estimator.
bounds
    Information-theoretic distortion lower bounds.
protocol
    Closed-form analysis of the two-round retransmission protocol.
simulator
    Event-level Monte Carlo of the protocol.
sweep, cli
    Parameter sweeps and the ``corrmac`` command.
"""
from .bounds import (BoundReport, ChannelBudget, lower_bound_u_asymptotic, lower_bound_u_finite_n,
                     mmse_observation, per_source_bound, product_bound)
from .errors import (ConfigError, CorrMacError, EstimatorUndefined, InfeasibleConfiguration,
                     InvalidInput, InvalidParameter, SchemaError)
from .protocol import (EnergyBudget, average_energy, energy_relations, one_shot_baseline,
                       upper_bound_distortion)
from .simulator import monte_carlo, run_trial
from .source import Family, SourceConfig, build_quantizer, estimate_u, quantize, sample_sources

__version__ = "0.1.0"
