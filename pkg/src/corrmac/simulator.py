"""
Event-level Monte Carlo of the two-round protocol over a non-coherent MAC.

Signals are orthogonal across sensors and messages, so the receiver's
matched-filter outputs are drawn directly: the branch of the transmitted
message is ``sqrt(E) e^{i phi} + CN(0, N0)``, every other branch is
``CN(0, N0)``. The detector only sees squared magnitudes.

Joint detection maximises ``sum_j stat_j(m_j)`` with ``m_j`` (j > 1)
restricted to a window of bins around the decision for ``m_1``. The
constraints only couple each ``m_j`` to ``m_1``, so for a fixed ``m_1`` the
other coordinates are maximised independently. That gives the exact joint
argmax without enumerating the ``2^B W^(M-1)`` hypotheses.

Seeding: ``monte_carlo`` spawns one ``SeedSequence`` child per batch of
``batch_size`` trials, in batch order. Results depend on ``seed`` and
``batch_size`` and not on ``workers``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from statistics import NormalDist

import numpy as np

from .errors import EstimatorUndefined, InfeasibleConfiguration, InvalidParameter
from .protocol import EnergyBudget, detection_window
from .source import SQRT3, QuantizerSpec, SourceConfig, quantize, sample_sources

__all__ = [
    "DEFAULT_COMPUTE_CAP",
    "default_compute_cap",
    "ChannelRealization",
    "CandidateWindows",
    "TrialTrace",
    "MonteCarloSummary",
    "draw_channel",
    "transmit_data_phase",
    "candidate_windows",
    "joint_detect",
    "control_phase",
    "simulate_batch",
    "run_trial",
    "monte_carlo",
]

DEFAULT_COMPUTE_CAP = 1 << 24
CAP_ENV = "CORRMAC_COMPUTE_CAP"


def default_compute_cap() -> int:
    raw = os.environ.get(CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_COMPUTE_CAP
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidParameter(f"{CAP_ENV} must be an integer, got {raw!r}") from None
    if cap < 1:
        raise InvalidParameter(f"{CAP_ENV} must be >= 1")
    return cap


@dataclass(frozen=True)
class ChannelRealization:
    """Phases ``(..., M)`` and complex matched-filter noise ``(..., M, 2^B)``."""

    phases: np.ndarray
    noise: np.ndarray


def draw_channel(shape, n_bins: int, n0: float, rng: np.random.Generator) -> ChannelRealization:
    shape = tuple(np.atleast_1d(shape).astype(int))
    phases = rng.uniform(0.0, 2.0 * np.pi, size=shape)
    z = rng.standard_normal(size=shape + (n_bins, 2)) * math.sqrt(n0 / 2.0)
    return ChannelRealization(phases=phases, noise=z[..., 0] + 1j * z[..., 1])


def transmit_data_phase(messages, n_bins: int, energy_per_sensor, rng: np.random.Generator,
                        n0: float = 1.0, channel: ChannelRealization | None = None) -> np.ndarray:
    """Matched-filter energies ``|<Y_j, S_m>|^2`` for every sensor and message.

    ``energy_per_sensor`` broadcasts against ``messages`` (shape ``(..., M)``).
    Returns an array of shape ``messages.shape + (n_bins,)``.
    """
    msgs = np.asarray(messages)
    if channel is None:
        channel = draw_channel(msgs.shape, n_bins, n0, rng)
    amp = np.sqrt(np.broadcast_to(np.asarray(energy_per_sensor, float), msgs.shape))
    y = channel.noise.copy()
    signal = amp * np.exp(1j * channel.phases)
    np.put_along_axis(y, msgs[..., None],
                      np.take_along_axis(y, msgs[..., None], -1) + signal[..., None], -1)
    return y.real**2 + y.imag**2


@dataclass(frozen=True)
class CandidateWindows:
    """Allowed bins ``lo[m1]..hi[m1]`` for sensors j > 1 given ``m_1``."""

    rule: str
    lo: np.ndarray
    hi: np.ndarray

    @property
    def width(self) -> int:
        return int((self.hi - self.lo).max()) + 1

    @property
    def unconstrained(self) -> bool:
        return bool((self.lo == 0).all() and (self.hi == len(self.lo) - 1).all())

    def work(self, M: int) -> int:
        """Statistic evaluations per detection if windows were scanned directly."""
        return len(self.lo) * (1 + (M - 1) * self.width)


def candidate_windows(q: QuantizerSpec, rule: str = "geometric", width: int | None = None) -> CandidateWindows:
    """Build the detection windows.

    ``"geometric"``: every bin intersecting ``bin(m1) +/- 2 sqrt3 sqrt(1-rho^2)``,
    the set ``v_j`` can reach given ``v_1`` in bin ``m1``.
    ``"centered"``: ``width`` bins (default ``max(W, 1)``) centred on ``m1``;
    near the support edges the window is shifted inwards so it keeps ``width`` bins.
    """
    nb = q.n_bins
    m1 = np.arange(nb)
    if rule == "geometric":
        spread = 2.0 * SQRT3 * math.sqrt(max(0.0, 1.0 - q.rho * q.rho))
        e = q.edges
        lo = np.searchsorted(e[1:], e[:-1] - spread, side="right")
        hi = np.searchsorted(e[:-1], e[1:] + spread, side="left") - 1
        lo = np.minimum(lo, m1)
        hi = np.maximum(hi, m1)
    elif rule == "centered":
        w = max(detection_window(q.B, q.rho), 1) if width is None else int(width)
        if w < 1:
            raise InvalidParameter("window width must be >= 1")
        w = min(w, nb)
        lo = np.clip(m1 - (w - 1) // 2, 0, nb - w)
        hi = lo + w - 1
    else:
        raise InvalidParameter(f"unknown window rule {rule!r}")
    return CandidateWindows(rule=rule, lo=lo.astype(np.int64), hi=hi.astype(np.int64))


def _check_cap(windows: CandidateWindows, M: int, cap: int | None) -> None:
    cap = default_compute_cap() if cap is None else cap
    work = windows.work(M)
    if work > cap:
        raise InfeasibleConfiguration(
            f"joint detection needs {work} statistic evaluations per trial, cap is {cap}")


def _range_max(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Max and lowest argmax of ``x[:, lo[i]:hi[i]+1]`` for every ``i`` (sparse table)."""
    n, nb = x.shape
    length = hi - lo + 1
    level = np.floor(np.log2(length)).astype(int)
    vals = np.empty((n, len(lo)))
    args = np.empty((n, len(lo)), dtype=np.int64)
    v, a = x, np.broadcast_to(np.arange(nb), x.shape)
    span = 1
    for k in range(int(level.max()) + 1):
        if k > 0:
            size = nb - 2 * span + 1
            right = v[:, span:span + size]
            take_right = right > v[:, :size]
            a = np.where(take_right, a[:, span:span + size], a[:, :size])
            v = np.where(take_right, right, v[:, :size])
            span *= 2
        sel = np.flatnonzero(level == k)
        if sel.size == 0:
            continue
        left, right = lo[sel], hi[sel] - span + 1
        vl, vr = v[:, left], v[:, right]
        use_right = vr > vl
        vals[:, sel] = np.where(use_right, vr, vl)
        args[:, sel] = np.where(use_right, a[:, right], a[:, left])
    return vals, args


def joint_detect(stats, windows: CandidateWindows, frozen=None, fixed=None, compute_cap: int | None = None):
    """Exact windowed joint argmax; ties go to the lowest message vector.

    ``stats`` has shape ``(..., M, 2^B)``. Sensors flagged in ``frozen`` are
    held at ``fixed`` (their round-1 decision).
    """
    st = np.asarray(stats, dtype=float)
    lead = st.shape[:-2]
    M, nb = st.shape[-2:]
    _check_cap(windows, M, compute_cap)
    st = st.reshape((-1, M, nb))
    if frozen is not None:
        fr = np.broadcast_to(np.asarray(frozen, bool), lead + (M,)).reshape(-1, M)
        fx = np.broadcast_to(np.asarray(fixed), lead + (M,)).reshape(-1, M)
        mask = fr[..., None] & (np.arange(nb) != fx[..., None])
        st = np.where(mask, -np.inf, st)
    n = st.shape[0]
    if windows.unconstrained:
        # separable: every coordinate is a free per-sensor argmax
        return st.argmax(axis=2).reshape(lead + (M,))
    total = st[:, 0, :].copy()
    picks = np.empty((n, M - 1, nb), dtype=np.int64)
    for j in range(1, M):
        vals, args = _range_max(st[:, j, :], windows.lo, windows.hi)
        picks[:, j - 1] = args
        total += vals
    out = np.empty((n, M), dtype=np.int64)
    m1 = total.argmax(axis=1)
    out[:, 0] = m1
    if M > 1:
        out[:, 1:] = np.take_along_axis(picks, m1[:, None, None], 2)[..., 0]
    return out.reshape(lead + (M,))


def control_phase(wrong, bud: EnergyBudget, rng: np.random.Generator) -> np.ndarray:
    """Receiver's NACK detections ``|y_c,j|^2 > lambda E_c,j``.

    ``wrong`` (shape ``(..., M)``) marks the sensors whose fed-back decision
    was wrong; only those send ``E_c,1 / M``.
    """
    w = np.asarray(wrong, bool)
    M = w.shape[-1]
    e_c = bud.e_c1 / M
    phases = rng.uniform(0.0, 2.0 * np.pi, size=w.shape)
    z = rng.standard_normal(size=w.shape + (2,)) * math.sqrt(bud.n0 / 2.0)
    amp = np.where(w, math.sqrt(e_c), 0.0)
    re = amp * np.cos(phases) + z[..., 0]
    im = amp * np.sin(phases) + z[..., 1]
    return re**2 + im**2 > bud.lam * e_c


@dataclass(frozen=True)
class TrialTrace:
    true_messages: np.ndarray
    decoded_round1: np.ndarray
    ack_decisions: np.ndarray
    went_round2: bool
    decoded_final: np.ndarray
    u: float
    u_hat: float
    squared_error: float
    energy_spent: float


@dataclass(frozen=True)
class _Batch:
    u: np.ndarray
    true_messages: np.ndarray
    decoded_round1: np.ndarray
    detected: np.ndarray
    went_round2: np.ndarray
    decoded_final: np.ndarray
    u_hat: np.ndarray
    squared_error: np.ndarray
    energy: np.ndarray


def _validate(cfg: SourceConfig, q: QuantizerSpec, bud: EnergyBudget, round2_senders: str):
    cfg.require_protocol()
    bud.check_network(cfg.M)
    if cfg.rho == 0.0:
        raise EstimatorUndefined("estimator divides by rho; rho = 0")
    if q.rho != cfg.rho:
        raise InvalidParameter("quantizer was built for a different rho")
    if round2_senders not in ("all", "nacked"):
        raise InvalidParameter("round2_senders must be 'all' or 'nacked'")


def simulate_batch(cfg: SourceConfig, q: QuantizerSpec, bud: EnergyBudget, n: int,
                   rng: np.random.Generator, windows: CandidateWindows | None = None,
                   round2_senders: str = "all", compute_cap: int | None = None) -> _Batch:
    """Run ``n`` independent protocol trials with one generator.

    Draw order: sources, round-1 channel, control channel, round-2 channel.
    The round-2 channel is drawn for every trial so the stream layout does
    not depend on which trials retransmit.
    """
    _validate(cfg, q, bud, round2_senders)
    M, nb = cfg.M, q.n_bins
    if windows is None:
        windows = candidate_windows(q)
    _check_cap(windows, M, compute_cap)

    smp = sample_sources(cfg, rng, size=n)
    m = quantize(q, smp.v)
    stats1 = transmit_data_phase(m, nb, bud.e_d1 / M, rng, bud.n0)
    dec1 = joint_detect(stats1, windows, compute_cap=compute_cap)
    wrong = dec1 != m
    detected = control_phase(wrong, bud, rng)
    trig = detected.sum(axis=1) >= bud.L

    e2 = np.full(m.shape, bud.e_d2 / M)
    if round2_senders == "nacked":
        e2 = np.where(detected, e2, 0.0)
    stats2 = transmit_data_phase(m, nb, e2, rng, bud.n0)

    final = dec1.copy()
    if trig.any():
        sel = np.flatnonzero(trig)
        final[sel] = joint_detect(stats1[sel] + stats2[sel], windows,
                                  frozen=~detected[sel], fixed=dec1[sel], compute_cap=compute_cap)
    u_hat = q.centroids[final].sum(axis=1) / (cfg.rho * M)
    err = (u_hat - smp.u) ** 2
    if round2_senders == "all":
        r2 = np.where(trig, bud.e_d2, 0.0)
    else:
        r2 = np.where(trig, detected.sum(axis=1) * bud.e_d2 / M, 0.0)
    energy = bud.e_d1 + wrong.sum(axis=1) * bud.e_c1 / M + r2
    return _Batch(u=smp.u, true_messages=m, decoded_round1=dec1, detected=detected,
                  went_round2=trig, decoded_final=final, u_hat=u_hat,
                  squared_error=err, energy=energy)


def run_trial(cfg: SourceConfig, q: QuantizerSpec, bud: EnergyBudget, rng: np.random.Generator,
              window_rule: str = "geometric", round2_senders: str = "all",
              compute_cap: int | None = None) -> TrialTrace:
    """One full protocol run."""
    b = simulate_batch(cfg, q, bud, 1, rng, candidate_windows(q, window_rule),
                       round2_senders, compute_cap)
    return TrialTrace(
        true_messages=b.true_messages[0], decoded_round1=b.decoded_round1[0],
        ack_decisions=b.detected[0], went_round2=bool(b.went_round2[0]),
        decoded_final=b.decoded_final[0], u=float(b.u[0]), u_hat=float(b.u_hat[0]),
        squared_error=float(b.squared_error[0]), energy_spent=float(b.energy[0]),
    )


@dataclass(frozen=True)
class MonteCarloSummary:
    """Aggregates of ``n_trials`` protocol runs.

    Confidence intervals are normal approximations on the trial mean.
    Histograms count trials by the number of sensors in error (index 0..M).
    """

    n_trials: int
    confidence: float
    mean_mse: float
    mse_std_err: float
    mse_ci_low: float
    mse_ci_high: float
    mean_energy: float
    energy_std_err: float
    energy_ci_low: float
    energy_ci_high: float
    round2_rate: float
    round1_error_hist: np.ndarray
    final_error_hist: np.ndarray

    @property
    def round1_error_probs(self) -> np.ndarray:
        return self.round1_error_hist / self.n_trials

    @property
    def sensor_error_rate_round1(self) -> float:
        M = len(self.round1_error_hist) - 1
        return float(np.dot(np.arange(M + 1), self.round1_error_hist)) / (M * self.n_trials)

    @property
    def sensor_error_rate_final(self) -> float:
        M = len(self.final_error_hist) - 1
        return float(np.dot(np.arange(M + 1), self.final_error_hist)) / (M * self.n_trials)


def _mean_ci(x: np.ndarray, z: float) -> tuple[float, float, float, float]:
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return mean, se, mean - z * se, mean + z * se


def monte_carlo(cfg: SourceConfig, q: QuantizerSpec, bud: EnergyBudget, n_trials: int, seed: int,
                batch_size: int = 4096, workers: int = 1, window_rule: str = "geometric",
                round2_senders: str = "all", confidence: float = 0.99,
                compute_cap: int | None = None) -> MonteCarloSummary:
    """Run ``n_trials`` trials and summarise distortion, energy and error counts."""
    if int(n_trials) != n_trials or n_trials < 1:
        raise InvalidParameter("n_trials must be a positive integer")
    if batch_size < 1 or workers < 1:
        raise InvalidParameter("batch_size and workers must be >= 1")
    if not (0.0 < confidence < 1.0):
        raise InvalidParameter("confidence must lie in (0, 1)")
    _validate(cfg, q, bud, round2_senders)
    windows = candidate_windows(q, window_rule)
    _check_cap(windows, cfg.M, compute_cap)

    n_trials = int(n_trials)
    sizes = [batch_size] * (n_trials // batch_size)
    if n_trials % batch_size:
        sizes.append(n_trials % batch_size)
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def job(i):
        return simulate_batch(cfg, q, bud, sizes[i], np.random.default_rng(children[i]),
                              windows, round2_senders, compute_cap)

    if workers == 1:
        batches = [job(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(job, range(len(sizes))))

    err = np.concatenate([b.squared_error for b in batches])
    energy = np.concatenate([b.energy for b in batches])
    r1 = np.concatenate([(b.decoded_round1 != b.true_messages).sum(axis=1) for b in batches])
    fin = np.concatenate([(b.decoded_final != b.true_messages).sum(axis=1) for b in batches])
    trig = np.concatenate([b.went_round2 for b in batches])

    z = NormalDist().inv_cdf(0.5 + confidence / 2.0)
    mse, mse_se, mse_lo, mse_hi = _mean_ci(err, z)
    en, en_se, en_lo, en_hi = _mean_ci(energy, z)
    M = cfg.M
    return MonteCarloSummary(
        n_trials=n_trials, confidence=confidence,
        mean_mse=mse, mse_std_err=mse_se, mse_ci_low=mse_lo, mse_ci_high=mse_hi,
        mean_energy=en, energy_std_err=en_se, energy_ci_low=en_lo, energy_ci_high=en_hi,
        round2_rate=float(trig.mean()),
        round1_error_hist=np.bincount(r1, minlength=M + 1),
        final_error_hist=np.bincount(fin, minlength=M + 1),
    )
