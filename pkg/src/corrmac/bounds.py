"""
Information-theoretic distortion lower bounds.

All bounds share the cut-set structure: a subset ``S`` of sensors is handed
to the receiver as side information and the remaining ``M - |S|`` sensors
contribute channel energy. Every subset size gives a valid bound, so the
reported value is the maximum over ``|S|``, found by enumerating the
``M + 1`` candidates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .source import Family, SourceConfig

__all__ = [
    "ChannelBudget",
    "BoundReport",
    "c_d_for_u",
    "observation_factor",
    "lower_bound_u_terms",
    "lower_bound_u_finite_n",
    "lower_bound_u_asymptotic",
    "piecewise_lower_bound_u",
    "mmse_observation",
    "c_d_for_vj",
    "lower_bound_vj",
    "product_constant",
    "product_bound",
    "per_source_bound",
]

_SIX_OVER_PI_E = 6.0 / (math.pi * math.e)
_TWO_PI_E = 2.0 * math.pi * math.e


@dataclass(frozen=True)
class ChannelBudget:
    """Per-sensor energy, noise level and channel dimension.

    ``n_channel=math.inf`` selects the wideband limit in which
    ``(1 + K x / N)^(-2N/K)`` becomes ``exp(-2x)``.
    """

    energy_per_sensor: float
    n0: float = 1.0
    n_channel: float = math.inf

    def __post_init__(self):
        if not self.energy_per_sensor >= 0:
            raise InvalidParameter("energy_per_sensor must be >= 0")
        if not self.n0 > 0:
            raise InvalidParameter("n0 must be > 0")
        if not self.n_channel >= 1:
            raise InvalidParameter("n_channel must be >= 1 or inf")

    @property
    def snr(self) -> float:
        return self.energy_per_sensor / self.n0


@dataclass(frozen=True)
class BoundReport:
    value: float
    argmax_subset_size: int
    constant_used: float
    regime_index: int

    @property
    def clipped(self) -> float:
        """Value capped at the unit source variance (the trivial bound)."""
        return min(self.value, 1.0)


def c_d_for_u(family, subset_size: int) -> float:
    if subset_size < 0:
        raise InvalidParameter("subset size must be >= 0")
    if Family(family) is Family.GAUSSIAN:
        return 1.0
    return _SIX_OVER_PI_E ** (subset_size + 1)


def observation_factor(subset_size: int, rho: float) -> float:
    """(1 - rho^2) / (1 + (|S|-1) rho^2), equal to 1 for the empty subset."""
    if subset_size == 0:
        return 1.0
    return (1.0 - rho * rho) / (1.0 + (subset_size - 1) * rho * rho)


def _channel_factor(active: int, snr: float, K: int, n_channel: float) -> float:
    """(1 + K * active * snr / N)^(-2N/K), or exp(-2 * active * snr) for N = inf."""
    if active == 0 or snr == 0.0:
        return 1.0
    if math.isinf(snr):
        return 0.0
    if math.isinf(n_channel):
        return math.exp(-2.0 * active * snr)
    return math.exp(-(2.0 * n_channel / K) * math.log1p(K * active * snr / n_channel))


def lower_bound_u_terms(cfg: SourceConfig, bud: ChannelBudget) -> np.ndarray:
    """Bound on D for each subset size 0..M (equal per-sensor energies)."""
    snr = bud.snr
    return np.array([
        c_d_for_u(cfg.family, s)
        * observation_factor(s, cfg.rho)
        * _channel_factor(cfg.M - s, snr, cfg.K, bud.n_channel)
        for s in range(cfg.M + 1)
    ])


def _best(terms: np.ndarray, constants) -> BoundReport:
    s = int(np.argmax(terms))
    return BoundReport(value=float(terms[s]), argmax_subset_size=s,
                       constant_used=float(constants[s]), regime_index=s)


def lower_bound_u_finite_n(cfg: SourceConfig, bud: ChannelBudget) -> BoundReport:
    """Lower bound on the MSE of ``u`` for any scheme using N channel uses."""
    terms = lower_bound_u_terms(cfg, bud)
    return _best(terms, [c_d_for_u(cfg.family, s) for s in range(cfg.M + 1)])


def lower_bound_u_asymptotic(cfg: SourceConfig, e_over_n0: float) -> BoundReport:
    """Wideband (N -> inf) lower bound; ``e_over_n0`` is the per-sensor SNR."""
    if not e_over_n0 >= 0:
        raise InvalidParameter("e_over_n0 must be >= 0")
    return lower_bound_u_finite_n(cfg, ChannelBudget(e_over_n0, 1.0, math.inf))


def piecewise_lower_bound_u(cfg: SourceConfig, e_over_n0: float) -> tuple[float, int]:
    """Closed-form regime selection for the wideband bound.

    Consecutive subset sizes differ by the factor
    ``c * (1+(s-2)rho^2)/(1+(s-1)rho^2) * exp(2E/N0)`` with ``c`` constant in
    ``s``. That factor increases with ``s``, so the sequence is log-convex and
    the maximum sits at an endpoint: either the channel-limited regime
    (``|S| = 0``, value ``C_D(0) exp(-2ME/N0)``) or the observation-limited
    regime (``|S| = M``, value ``C_D(M)`` times the MMSE of ``u`` given all
    observations). Returns ``(value, regime)``; ties go to ``|S| = 0``.
    """
    M = cfg.M
    channel_limited = c_d_for_u(cfg.family, 0) * _channel_factor(M, e_over_n0, 1, math.inf)
    observation_limited = c_d_for_u(cfg.family, M) * observation_factor(M, cfg.rho)
    if observation_limited > channel_limited:
        return observation_limited, M
    return channel_limited, 0


def mmse_observation(M: int, rho: float) -> float:
    """MMSE of ``u`` from ``M`` noiseless observations (Gaussian model)."""
    if M < 1:
        raise InvalidParameter("M must be >= 1")
    return (1.0 - rho * rho) / (1.0 + (M - 1) * rho * rho)


def c_d_for_vj(family, subset_size: int, rho: float) -> float:
    """Constant of the bound on estimating one observation ``v_j``."""
    s = subset_size
    g = observation_factor(s, rho)
    if Family(family) is Family.GAUSSIAN:
        return g * (2.0 - rho * rho + s)
    r2 = rho * rho
    if s == 0:
        # (1-rho^2)^2 / (1 - rho^2) reduced by hand so rho = 1 stays finite
        ramp = (1.0 - r2)
    else:
        base = 1.0 - r2
        if base == 0.0 and s > 2:
            ramp = math.inf
        else:
            ramp = base ** (2 - s) / (1.0 + (s - 1) * r2)
    if r2 == 0.0:
        first = 0.0
    else:
        first = 12.0**3 * r2 * ramp / _TWO_PI_E ** (s + 2)
    return first + _SIX_OVER_PI_E ** (s + 1) * g


def lower_bound_vj(cfg: SourceConfig, bud: ChannelBudget, subset_size: int) -> BoundReport:
    """Lower bound on the MSE of a single observation ``v_j``.

    ``subset_size`` counts the other sensors given as side information, so it
    ranges over ``0..M-1``.
    """
    if not (0 <= subset_size <= cfg.M - 1):
        raise InvalidParameter(f"subset_size must lie in [0, {cfg.M - 1}] (j is never in S)")
    const = c_d_for_vj(cfg.family, subset_size, cfg.rho)
    value = const * _channel_factor(cfg.M - subset_size, bud.snr, cfg.K, bud.n_channel)
    return BoundReport(value=value, argmax_subset_size=subset_size,
                       constant_used=const, regime_index=subset_size)


def product_constant(family, M: int, rho: float) -> float:
    r2 = rho * rho
    if Family(family) is Family.GAUSSIAN:
        # (1-r2)^M (1 + M r2/(1-r2)) written without the 1/(1-r2) pole
        return (1.0 - r2) ** (M - 1) * (1.0 + (M - 1) * r2)
    return (((12.0 * r2) ** (1.0 / M) + 12.0 * (1.0 - r2)) / _TWO_PI_E) ** M


def product_bound(cfg: SourceConfig, bud: ChannelBudget) -> BoundReport:
    """Lower bound on the product of the ``M`` per-observation distortions."""
    const = product_constant(cfg.family, cfg.M, cfg.rho)
    value = const * _channel_factor(cfg.M, bud.snr, cfg.K, bud.n_channel)
    return BoundReport(value=value, argmax_subset_size=cfg.M,
                       constant_used=const, regime_index=cfg.M)


def per_source_bound(cfg: SourceConfig, bud: ChannelBudget) -> float:
    """Bound on each distortion when all ``M`` are equal: the M-th root of the product.

    In the wideband limit this is ``C_p^(1/M) exp(-2E/N0)``, the point-to-point
    exponent regardless of ``M``.
    """
    const = product_constant(cfg.family, cfg.M, cfg.rho)
    snr, M = bud.snr, cfg.M
    if math.isinf(bud.n_channel):
        log_channel = -2.0 * snr
    else:
        log_channel = -(2.0 * bud.n_channel / (cfg.K * M)) * math.log1p(cfg.K * M * snr / bud.n_channel)
    return const ** (1.0 / M) * math.exp(log_channel)
