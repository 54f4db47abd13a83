"""
Correlated source model, sensor quantizer and the common-sample estimator.

Every sensor observes the common unit-variance sample ``u`` through

    v_j = rho * u + sqrt(1 - rho**2) * u'_j

where the ``u'_j`` are i.i.d. observation noises from the same family as
``u``. For the uniform family the observation density is the convolution of
two uniforms: flat in the middle with two linear ramps. The quantizer uses
one bin per ramp and splits the flat region uniformly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import EstimatorUndefined, InvalidInput, InvalidParameter

SQRT3 = math.sqrt(3.0)
_DEGENERATE = 1e-12

__all__ = [
    "Family",
    "SourceConfig",
    "SampleSet",
    "QuantizerSpec",
    "sample_sources",
    "build_quantizer",
    "quantize",
    "dequantize",
    "estimate_u",
    "high_correlation",
]


class Family(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class SourceConfig:
    """Network size, correlation and source statistics.

    Parameters
    ----------
    M : int
        Number of sensors.
    rho : float
        Correlation coefficient in [0, 1].
    family : Family or str
        ``"uniform"`` (support ``(-sqrt 3, sqrt 3)``) or ``"gaussian"``.
    K : int
        Source dimension. The retransmission protocol needs ``K == 1``.
    """

    M: int
    rho: float
    family: Family = Family.UNIFORM
    K: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.M) != self.M or self.M < 1:
            raise InvalidParameter(f"M must be a positive integer, got {self.M!r}")
        if int(self.K) != self.K or self.K < 1:
            raise InvalidParameter(f"K must be a positive integer, got {self.K!r}")
        if not (0.0 <= self.rho <= 1.0):
            raise InvalidParameter(f"rho must lie in [0, 1], got {self.rho!r}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def noise_weight(self) -> float:
        return math.sqrt(1.0 - self.rho**2)

    def require_protocol(self) -> None:
        """Raise unless the config is one the two-round protocol supports."""
        if self.family is not Family.UNIFORM:
            raise InvalidParameter("the protocol is defined for uniform sources only")
        if self.K != 1:
            raise InvalidParameter("the protocol is defined for scalar sources (K=1) only")


@dataclass(frozen=True)
class SampleSet:
    u: np.ndarray
    v: np.ndarray
    u_prime: np.ndarray


def _draw(family: Family, rng: np.random.Generator, shape) -> np.ndarray:
    if family is Family.UNIFORM:
        return rng.uniform(-SQRT3, SQRT3, size=shape)
    return rng.standard_normal(size=shape)


def sample_sources(cfg: SourceConfig, rng: np.random.Generator, size=None) -> SampleSet:
    """Draw the common sample, observation noises and observations.

    With ``size=None`` a single realisation is drawn: ``u`` is a 0-d array
    (shape ``(K,)`` if ``K > 1``) and ``v``/``u_prime`` carry a trailing axis
    of length ``M``. Passing ``size`` prepends batch axes.
    """
    batch = () if size is None else tuple(np.atleast_1d(size).astype(int))
    base = batch + ((cfg.K,) if cfg.K > 1 else ())
    u = np.asarray(_draw(cfg.family, rng, base))
    u_prime = np.asarray(_draw(cfg.family, rng, base + (cfg.M,)))
    v = cfg.rho * u[..., None] + cfg.noise_weight * u_prime
    return SampleSet(u=u, v=v, u_prime=u_prime)


@dataclass(frozen=True)
class QuantizerSpec:
    B: int
    rho: float
    edges: np.ndarray
    centroids: np.ndarray

    @property
    def n_bins(self) -> int:
        return 1 << self.B

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)


def build_quantizer(B: int, rho: float) -> QuantizerSpec:
    """Quantizer for the contaminated-uniform observation density.

    The two outer bins cover the density ramps
    ``[sqrt3*(rho+s), sqrt3*|rho-s|]`` (``s = sqrt(1-rho^2)``, mirrored) and
    ``2**B - 2`` equal bins cover the flat part. When a ramp has zero width
    (``rho`` equal to 0 or 1) the density is rectangular and all ``2**B``
    bins are equal over ``[-sqrt3, sqrt3]``; tails below ``1e-12`` of the
    support are treated the same way. Reconstruction points are bin
    midpoints.
    """
    if int(B) != B or B < 2:
        raise InvalidParameter(f"B must be an integer >= 2, got {B!r}")
    if not (0.0 <= rho <= 1.0):
        raise InvalidParameter(f"rho must lie in [0, 1], got {rho!r}")
    B = int(B)
    n_bins = 1 << B
    s = math.sqrt(1.0 - rho * rho)
    outer = SQRT3 * (rho + s)
    flat = SQRT3 * abs(rho - s)
    tail = SQRT3 * min(rho, s)
    # a tail narrower than float resolution of the support counts as absent
    if tail <= _DEGENERATE * outer:
        edges = np.linspace(-SQRT3, SQRT3, n_bins + 1)
    else:
        if flat <= _DEGENERATE * outer:
            raise InvalidParameter("flat region vanishes at rho = 1/sqrt(2); no interior bins")
        inner = np.linspace(-flat, flat, n_bins - 1)
        edges = np.concatenate(([-outer], inner, [outer]))
    centroids = 0.5 * (edges[:-1] + edges[1:])
    return QuantizerSpec(B=B, rho=float(rho), edges=edges, centroids=centroids)


def quantize(q: QuantizerSpec, v):
    """Message index of each observation.

    Bin ``i`` is ``[edges[i], edges[i+1])``; values on or beyond the outer
    edges are clamped into the outer bins.
    """
    arr = np.asarray(v, dtype=float)
    if np.isnan(arr).any():
        raise InvalidInput("cannot quantize NaN")
    idx = np.searchsorted(q.edges, arr, side="right") - 1
    idx = np.clip(idx, 0, q.n_bins - 1)
    if idx.ndim == 0:
        return int(idx)
    return idx


def dequantize(q: QuantizerSpec, m):
    return q.centroids[np.asarray(m)]


def estimate_u(cfg: SourceConfig, decoded_centroids) -> np.ndarray | float:
    """Reconstruct ``u`` as the mean decoded observation divided by ``rho``.

    ``decoded_centroids`` has a trailing axis of length ``M``.
    """
    if cfg.rho == 0.0:
        raise EstimatorUndefined("estimator divides by rho; rho = 0")
    vh = np.asarray(decoded_centroids, dtype=float)
    if vh.shape[-1] != cfg.M:
        raise InvalidParameter(f"expected {cfg.M} decoded values, got {vh.shape[-1]}")
    out = vh.sum(axis=-1) / (cfg.rho * cfg.M)
    if np.ndim(out) == 0:
        return float(out)
    return out


def high_correlation(B: int, rho: float, theta: float = 1.0) -> bool:
    """True when ``2^(B+1) sqrt(1-rho^2) < theta``.

    In this regime the observation spread is below a few quantizer bins,
    so the window of plausible ``m_j`` around ``m_1`` stays small.
    ``theta`` is an order-one constant.
    """
    if not theta > 0:
        raise InvalidParameter("theta must be > 0")
    return (2 ** (B + 1)) * math.sqrt(max(0.0, 1.0 - rho * rho)) < theta
