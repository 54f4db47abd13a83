"""
Closed-form analysis of the two-round feedback protocol.

Round 1: every sensor sends its quantized message with orthogonal signalling
(per-sensor energy ``e_d1 / M``), the receiver decides jointly and feeds the
decisions back. Sensors whose message was decoded wrongly answer with an
energy burst of ``e_c1 / M`` (NACK); correct sensors stay silent (ACK). If
at least ``L`` NACKs are detected a second data phase with ``e_d2`` follows
and the receiver chase-combines both rounds for the sensors it believes to
be wrong.

SNR convention for the pairwise error term ``P2(k)``: a hypothesis differing
from the truth in ``k`` sensors is an orthogonal binary test with ``k``
square-law combined branches, so ``gamma`` is the total energy of those
branches over ``2 N0``: ``k e_d1 / (2 M N0)`` after round 1 and
``k (e_d1 + e_d2) / (2 M N0)`` after combining (``2k`` branches).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EstimatorUndefined, InvalidParameter
from .marcum import marcum_q1_cdf

__all__ = [
    "EnergyBudget",
    "ErrorProfile",
    "DistortionBreakdown",
    "EnergyReport",
    "ControlErrors",
    "energy_relations",
    "detection_window",
    "pairwise_p2",
    "control_error_probs",
    "undetected_probability",
    "union_bound_round1",
    "round1_union_terms",
    "distortion_terms",
    "two_round_error_probs",
    "upper_bound_distortion",
    "average_energy",
    "one_shot_baseline",
]

CONTROL_MODES = ("bound", "exact", "none")


@dataclass(frozen=True)
class EnergyBudget:
    """Aggregate energies of the three protocol phases plus detector settings.

    Each quantity is summed over sensors; a single sensor uses ``1/M`` of it.
    """

    e_d1: float
    e_c1: float
    e_d2: float
    n0: float = 1.0
    lam: float = 0.25
    mu: float = 1.0
    L: int = 1

    def __post_init__(self):
        for name in ("e_d1", "e_c1", "e_d2"):
            if not getattr(self, name) >= 0:
                raise InvalidParameter(f"{name} must be >= 0")
        if not self.n0 > 0:
            raise InvalidParameter("n0 must be > 0")
        if not (0.0 <= self.lam < 1.0):
            raise InvalidParameter(f"lambda must lie in [0, 1), got {self.lam!r}")
        if not (0.0 < self.mu < 2.0):
            raise InvalidParameter(f"mu must lie in (0, 2), got {self.mu!r}")
        if int(self.L) != self.L or self.L < 1:
            raise InvalidParameter(f"L must be a positive integer, got {self.L!r}")
        object.__setattr__(self, "L", int(self.L))

    def check_network(self, M: int) -> None:
        if self.L > M:
            raise InvalidParameter(f"L={self.L} exceeds the number of sensors M={M}")


def energy_relations(e_d1: float, lam: float, mu: float, n0: float = 1.0, L: int = 1) -> EnergyBudget:
    """Budget with ``e_d2 = (2 - mu) e_d1`` and ``e_c1 = e_d2 / (2 (1 - sqrt(lam))^2)``.

    This choice makes the NACK-miss exponent of the control phase equal to the
    combining gain of the second round.
    """
    if not (0.0 <= lam < 1.0):
        raise InvalidParameter(f"lambda must lie in [0, 1), got {lam!r}")
    if not (0.0 < mu < 2.0):
        raise InvalidParameter(f"mu must lie in (0, 2), got {mu!r}")
    e_d2 = (2.0 - mu) * e_d1
    e_c1 = e_d2 / (2.0 * (1.0 - math.sqrt(lam)) ** 2)
    return EnergyBudget(e_d1=e_d1, e_c1=e_c1, e_d2=e_d2, n0=n0, lam=lam, mu=mu, L=L)


def detection_window(B: int, rho: float) -> int:
    """Number of candidate bins for ``m_j`` (j > 1) around the decision for ``m_1``.

    ``ceil(2^(B+1) sqrt(1-rho^2) / (rho + sqrt(1-rho^2)))``; zero at ``rho = 1``.
    """
    if B < 1:
        raise InvalidParameter("B must be >= 1")
    s = math.sqrt(1.0 - rho * rho)
    x = (2 ** (B + 1)) * s / (rho + s)
    # absorb rounding noise when x is an exact integer (rho = 0, rho = 1/sqrt 2)
    return int(math.ceil(x - 1e-9 * max(1.0, x)))


def _p2_coefficients(k: int) -> list[Fraction]:
    """c_n / 2^(2k-1) as exact fractions."""
    scale = 1 << (2 * k - 1)
    return [Fraction(sum(math.comb(2 * k - 1, l) for l in range(k - n)), math.factorial(n) * scale)
            for n in range(k)]


_DIRECT_LIMIT = 708.0  # exp(-gamma) is still a normal float below this


def pairwise_p2(k: int, gamma):
    """Binary orthogonal error probability with ``k``-fold square-law combining.

    ``P2(k) = 2^(1-2k) e^(-gamma) sum_n c_n gamma^n``. Large ``gamma`` is
    summed in log space so ``exp(-gamma)`` never underflows on its own.
    Vectorised over ``gamma``; ``P2(k, 0) = 1/2`` exactly.
    """
    if int(k) != k or k < 1:
        raise InvalidParameter("k must be a positive integer")
    k = int(k)
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise InvalidParameter("gamma must be >= 0")
    coeffs = [float(c) for c in _p2_coefficients(k)]
    out = np.full(g.shape, 0.5)
    direct = (g > 0.0) & (g < _DIRECT_LIMIT)
    gd = g[direct]
    if gd.size:
        poly = np.zeros_like(gd)
        for c in reversed(coeffs):
            poly = poly * gd + c
        out[direct] = np.minimum(np.exp(-gd) * poly, 0.5)
    far = g >= _DIRECT_LIMIT
    gf = g[far]
    if gf.size:
        lg = np.log(gf)
        acc = np.zeros_like(gf)
        for n, c in enumerate(coeffs):
            acc += np.exp(math.log(c) + n * lg - gf)
        out[far] = acc
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ControlErrors:
    exact: float
    bound: float
    false_alarm: float


def _per_sensor_control(bud: EnergyBudget, M: int) -> tuple[float, float, float]:
    """(exact miss, bounded miss, false alarm) for one sensor."""
    snr = bud.e_c1 / (M * bud.n0)
    a = math.sqrt(2.0 * snr)
    b = math.sqrt(2.0 * bud.lam * snr)
    exact = marcum_q1_cdf(a, b)
    bound = 0.5 * math.exp(-((math.sqrt(bud.lam) - 1.0) ** 2) * snr)
    false_alarm = math.exp(-bud.lam * snr)
    return exact, bound, false_alarm


def control_error_probs(bud: EnergyBudget, M: int, k: int) -> ControlErrors:
    """NACK-miss probabilities when ``k`` sensors are in error.

    ``exact`` and ``bound`` are the probabilities that all ``k`` NACKs are
    missed, using the Marcum expression and its exponential bound.
    ``false_alarm`` is the per-sensor probability that a silent (ACK) sensor
    is read as a NACK.
    """
    if not (1 <= k <= M):
        raise InvalidParameter(f"k must lie in [1, {M}]")
    exact, bound, fa = _per_sensor_control(bud, M)
    return ControlErrors(exact=exact**k, bound=bound**k, false_alarm=fa)


def undetected_probability(p_miss: float, k: int, L: int) -> float:
    """P(fewer than ``L`` of ``k`` NACKs are detected), each missed w.p. ``p_miss``.

    False alarms from correct sensors can only add detections, so ignoring
    them gives an upper bound on the probability of skipping round 2.
    """
    if k < L:
        return 1.0
    return sum(math.comb(k, i) * (1.0 - p_miss) ** i * p_miss ** (k - i) for i in range(L))


def _multiplicities(B: int, M: int, W: int) -> np.ndarray:
    """Competitor counts of the union bound for k = 1..M sensors in error."""
    mult = [math.comb(M, k) * W**k for k in range(1, M)]
    mult.append((1 << B) * W ** (M - 1))
    return np.array(mult, dtype=float)


def _gammas(M: int, energy: float, n0: float) -> np.ndarray:
    ks = np.arange(1, M + 1)
    return ks * energy / (2.0 * M * n0)


def round1_union_terms(B: int, rho: float, M: int, bud: EnergyBudget) -> np.ndarray:
    """Union-bound terms for exactly k = 1..M sensors in error after round 1."""
    W = detection_window(B, rho)
    g = _gammas(M, bud.e_d1, bud.n0)
    p2 = np.array([pairwise_p2(k, g[k - 1]) for k in range(1, M + 1)])
    return _multiplicities(B, M, W) * p2


def union_bound_round1(B: int, rho: float, M: int, bud: EnergyBudget) -> float:
    """Union bound on the probability that round 1 decodes any message wrongly (raw, unclipped)."""
    return float(round1_union_terms(B, rho, M, bud).sum())


@dataclass(frozen=True)
class ErrorProfile:
    """Error-probability terms of the distortion bound.

    Arrays ``p2``, ``p2_combined`` and ``undetected`` are indexed by
    ``k - 1`` for ``k = 1..M``; ``p_ek`` covers ``k = 1..M-1``.
    """

    p2: np.ndarray
    p2_combined: np.ndarray
    undetected: np.ndarray
    p_union: float
    p_union_raw: float
    p_ek: np.ndarray
    p_ek_raw: np.ndarray
    p_eM: float
    p_eM_raw: float
    window_bins: int


def _miss_for(control: str, bud: EnergyBudget, M: int) -> float | None:
    if control not in CONTROL_MODES:
        raise InvalidParameter(f"control must be one of {CONTROL_MODES}")
    if control == "none":
        return None
    exact, bound, _ = _per_sensor_control(bud, M)
    return bound if control == "bound" else exact


def two_round_error_probs(B: int, rho: float, M: int, bud: EnergyBudget,
                          control: str = "bound", second_round: bool = True) -> ErrorProfile:
    """Union bounds on ending the protocol with ``k`` sensors in error.

    Each ``k``-error pattern survives either because round 1 made it and
    fewer than ``L`` NACKs got through, or because the combined statistics
    of both rounds still favour it. ``control`` picks the NACK-miss model:
    ``"bound"`` (exponential bound), ``"exact"`` (Marcum) or ``"none"``
    (no control phase, errors never detected).
    """
    bud.check_network(M)
    W = detection_window(B, rho)
    mult = _multiplicities(B, M, W)
    g1 = _gammas(M, bud.e_d1, bud.n0)
    g2 = _gammas(M, bud.e_d1 + bud.e_d2, bud.n0)
    p2 = np.array([pairwise_p2(k, g1[k - 1]) for k in range(1, M + 1)])
    p2c = np.array([pairwise_p2(2 * k, g2[k - 1]) for k in range(1, M + 1)])
    miss = _miss_for(control, bud, M)
    if miss is None:
        und = np.ones(M)
    else:
        und = np.array([undetected_probability(miss, k, bud.L) for k in range(1, M + 1)])
    raw = mult * (und * p2 + (p2c if second_round else 0.0))
    union_raw = float((mult * p2).sum())
    return ErrorProfile(
        p2=p2, p2_combined=p2c, undetected=und,
        p_union=min(union_raw, 1.0), p_union_raw=union_raw,
        p_ek=np.minimum(raw[:-1], 1.0), p_ek_raw=raw[:-1],
        p_eM=min(float(raw[-1]), 1.0), p_eM_raw=float(raw[-1]),
        window_bins=W,
    )


@dataclass(frozen=True)
class DistortionBreakdown:
    d_q: float
    d_ek: np.ndarray
    d_eM: float
    total_upper: float | None = None
    errors: ErrorProfile | None = field(default=None, compare=False, repr=False)


def distortion_terms(B: int, rho: float, M: int) -> DistortionBreakdown:
    """Conditional distortion bounds: all correct, ``k`` wrong (1 <= k < M), all wrong."""
    if rho <= 0.0:
        raise EstimatorUndefined("distortion terms divide by rho; rho must be > 0")
    r2 = rho * rho
    s2 = 1.0 - r2
    s = math.sqrt(s2)
    root3 = math.sqrt(3.0)
    d_q = (s2 / (r2 * M)
           + (root3 / (r2 * M)) * (2.0 ** (-2 * B + 1) + root3 * s2 / 2.0)
           + 2.0 ** (-B + 2) * 3.0 * s / (M * r2))
    ks = np.arange(1, M, dtype=float)
    d_ek = (((M + 8 * ks) * s2 + 2.0 ** (-B + 2) * ((M + 2 * ks) * s + M * 2.0 ** (-B)))
            / (M * M * r2 / 3.0))
    d_eM = 1.0 + 12.0 / M + 12.0 * s / (rho * M) + 3.0 * s2 / (r2 * M)
    return DistortionBreakdown(d_q=d_q, d_ek=d_ek, d_eM=d_eM)


def _assemble(terms: DistortionBreakdown, prof: ErrorProfile) -> DistortionBreakdown:
    total = terms.d_q + float(np.dot(terms.d_ek, prof.p_ek)) + terms.d_eM * prof.p_eM
    return DistortionBreakdown(d_q=terms.d_q, d_ek=terms.d_ek, d_eM=terms.d_eM,
                               total_upper=total, errors=prof)


def upper_bound_distortion(B: int, rho: float, M: int, bud: EnergyBudget,
                           control: str = "bound", second_round: bool = True) -> DistortionBreakdown:
    """Upper bound on the reconstruction MSE of the protocol.

    ``D_q + sum_k D_ek P_ek + D_eM P_eM`` with probabilities clipped to 1.
    With ``L > 1`` the error patterns with fewer than ``L`` wrong sensors
    never get the control-phase protection but still benefit from round 2
    when it is triggered by other sensors.
    """
    terms = distortion_terms(B, rho, M)
    prof = two_round_error_probs(B, rho, M, bud, control=control, second_round=second_round)
    return _assemble(terms, prof)


def one_shot_baseline(B: int, rho: float, M: int, e_total: float, n0: float = 1.0) -> float:
    """Distortion bound without feedback: everything spent in a single data phase."""
    if not e_total >= 0:
        raise InvalidParameter("e_total must be >= 0")
    terms = distortion_terms(B, rho, M)
    W = detection_window(B, rho)
    g = _gammas(M, e_total, n0)
    p2 = np.array([pairwise_p2(k, g[k - 1]) for k in range(1, M + 1)])
    p = np.minimum(_multiplicities(B, M, W) * p2, 1.0)
    return terms.d_q + float(np.dot(terms.d_ek, p[:-1])) + terms.d_eM * float(p[-1])


@dataclass(frozen=True)
class EnergyReport:
    exact_form: float
    bound: float
    round1_probs: np.ndarray


def _binom_pmf(n: int, p: float) -> np.ndarray:
    return np.array([math.comb(n, i) * p**i * (1.0 - p) ** (n - i) for i in range(n + 1)])


def _detection_pmf(k: int, M: int, p_miss: float, p_fa: float) -> np.ndarray:
    """Distribution of the NACK count with ``k`` wrong and ``M - k`` correct sensors."""
    return np.convolve(_binom_pmf(k, 1.0 - p_miss), _binom_pmf(M - k, p_fa))


def _round1_distribution(B: int, rho: float, M: int, bud: EnergyBudget) -> np.ndarray:
    """Error-count distribution after round 1 built from clipped union terms.

    When the clipped terms add up to more than one they are rescaled so the
    result is still a distribution; index ``k`` holds ``P(k in error)``.
    """
    t = np.minimum(round1_union_terms(B, rho, M, bud), 1.0)
    total = t.sum()
    if total > 1.0:
        t = t / total
    return np.concatenate(([max(0.0, 1.0 - t.sum())], t))


def average_energy(B: int, rho: float, M: int, bud: EnergyBudget,
                   round1_probs=None, round2_senders: str = "all") -> EnergyReport:
    """Average energy spent by the protocol.

    ``exact_form`` is the expectation given the round-1 error-count
    distribution ``round1_probs`` (index ``k = 0..M``; defaults to the union
    bound terms): control energy ``k e_c1 / M`` plus ``e_d2`` whenever at
    least ``L`` NACKs are detected, counting both missed NACKs and false
    alarms. ``bound`` is the coarser form that charges the full control
    energy on any round-1 error. NACK-miss probabilities are the exact
    Marcum values here: an upper bound on a miss would understate the
    retransmission energy.

    ``round2_senders="nacked"`` charges round 2 only for the sensors whose
    NACK was detected (``e_d2 / M`` each) instead of all sensors.
    """
    bud.check_network(M)
    if round2_senders not in ("all", "nacked"):
        raise InvalidParameter("round2_senders must be 'all' or 'nacked'")
    p_miss, _, p_fa = _per_sensor_control(bud, M)
    if round1_probs is None:
        probs = _round1_distribution(B, rho, M, bud)
    else:
        probs = np.asarray(round1_probs, dtype=float)
        if probs.shape != (M + 1,):
            raise InvalidParameter(f"round1_probs must have length M+1={M + 1}")
    L = bud.L
    exact = bud.e_d1
    for k in range(M + 1):
        pmf = _detection_pmf(k, M, p_miss, p_fa)
        if round2_senders == "all":
            r2 = bud.e_d2 * pmf[L:].sum()
        else:
            r2 = bud.e_d2 / M * float(np.dot(np.arange(L, M + 1), pmf[L:]))
        exact += probs[k] * (k * bud.e_c1 / M + r2)

    p_e = min(union_bound_round1(B, rho, M, bud), 1.0)
    caught_all_wrong = 1.0 - undetected_probability(p_miss, M, L)
    false_trigger = _binom_pmf(M, p_fa)[L:].sum()
    bound = bud.e_d1 + bud.e_c1 * p_e + bud.e_d2 * (p_e * caught_all_wrong + (1.0 - p_e) * false_trigger)
    return EnergyReport(exact_form=float(exact), bound=float(bound), round1_probs=probs)
