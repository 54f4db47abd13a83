"""
Parameter sweeps: config parsing, grid evaluation, CSV output and consistency checks.

Config files are flat ``key = value`` lines. Values are comma lists or
``start:stop:step`` ranges (stop included when it lies on the grid);
repeating an axis key appends to it. ``#`` starts a comment.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from .bounds import lower_bound_u_asymptotic, mmse_observation
from .errors import ConfigError, EstimatorUndefined, InfeasibleConfiguration, InvalidParameter, SchemaError
from .protocol import average_energy, energy_relations, one_shot_baseline, upper_bound_distortion
from .simulator import monte_carlo
from .source import SourceConfig, build_quantizer

__all__ = [
    "SweepConfig",
    "GridPoint",
    "SweepResult",
    "Violation",
    "GapSummary",
    "ConsistencyReport",
    "MODES",
    "columns_for",
    "parse_config",
    "load_config",
    "grid_points",
    "evaluate_point",
    "run_sweep",
    "format_csv",
    "read_csv",
    "db_gap",
    "consistency_report",
]

MODES = ("bounds", "analysis", "simulate")
AXES = ("M", "B", "rho", "lam", "mu", "L", "ed1_db")
_INT_AXES = {"M", "B", "L"}
_ALIASES = {"lambda": "lam", "ed1": "ed1_db", "ebn0_db": "ed1_db"}
_SCALARS = {"mode": str, "trials": int, "seed": int, "n0": float, "workers": int,
            "window_rule": str, "round2_senders": str, "batch_size": int}

PARAM_COLUMNS = ["M", "B", "rho", "lam", "mu", "L", "ed1_db", "e_d1", "e_c1", "e_d2"]
BOUND_COLUMNS = ["lower_bound_u", "regime_index", "mmse_floor", "upper_bound_total", "d_q", "one_shot_bound"]
ENERGY_COLUMNS = ["avg_energy_exact", "avg_energy_bound"]
SIM_COLUMNS = ["empirical_mse", "mse_ci_low", "mse_ci_high", "empirical_energy", "round2_rate"]


def columns_for(mode: str) -> list[str]:
    """Fixed column order of the CSV for ``mode``."""
    if mode not in MODES:
        raise InvalidParameter(f"mode must be one of {MODES}")
    cols = PARAM_COLUMNS + BOUND_COLUMNS
    if mode in ("analysis", "simulate"):
        cols = cols + ENERGY_COLUMNS
    if mode == "simulate":
        cols = cols + SIM_COLUMNS
    return cols + ["status"]


@dataclass(frozen=True)
class SweepConfig:
    M: tuple = (2,)
    B: tuple = (7,)
    rho: tuple = (0.999,)
    lam: tuple = (0.25,)
    mu: tuple = (1.0,)
    L: tuple = (1,)
    ed1_db: tuple = ()
    mode: str = "bounds"
    trials: int = 1000
    seed: int = 0
    n0: float = 1.0
    workers: int = 1
    window_rule: str = "geometric"
    round2_senders: str = "all"
    batch_size: int = 4096
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        for ax in AXES:
            if len(getattr(self, ax)) == 0:
                raise ConfigError(f"axis {ax!r} is empty", self.source)
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}", self.source)
        if self.mode == "simulate" and self.trials < 1:
            raise ConfigError("trials must be >= 1 when simulating", self.source)
        if self.workers < 1 or self.batch_size < 1:
            raise ConfigError("workers and batch_size must be >= 1", self.source)
        if not self.n0 > 0:
            raise ConfigError("n0 must be > 0", self.source)
        if self.window_rule not in ("geometric", "centered"):
            raise ConfigError(f"window_rule must be 'geometric' or 'centered', got {self.window_rule!r}",
                              self.source)
        if self.round2_senders not in ("all", "nacked"):
            raise ConfigError(f"round2_senders must be 'all' or 'nacked', got {self.round2_senders!r}",
                              self.source)


def _parse_range(text: str) -> list[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"range needs start:stop:step, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    if not step > 0:
        raise ValueError("range step must be > 0")
    if stop < start:
        raise ValueError("range stop is below start")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _parse_values(text: str) -> list[float]:
    out: list[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            raise ValueError("empty list item")
        if ":" in item:
            out.extend(_parse_range(item))
        else:
            out.append(float(item))
    return out


def _check_axis(key: str, vals: list[float]) -> tuple:
    out = []
    for v in vals:
        if not math.isfinite(v):
            raise ValueError(f"{key} values must be finite")
        if key in _INT_AXES:
            if v != int(v):
                raise ValueError(f"{key} must be an integer, got {v!r}")
            v = int(v)
            lo = 2 if key == "B" else 1
            if v < lo:
                raise ValueError(f"{key} must be >= {lo}")
        elif key == "rho" and not (0.0 <= v <= 1.0):
            raise ValueError("rho must lie in [0, 1]")
        elif key == "lam" and not (0.0 <= v < 1.0):
            raise ValueError("lam must lie in [0, 1)")
        elif key == "mu" and not (0.0 < v < 2.0):
            raise ValueError("mu must lie in (0, 2)")
        out.append(v)
    return tuple(out)


def parse_config(text: str, source: str = "<config>") -> SweepConfig:
    """Parse config text; errors carry ``source:line``."""
    axes: dict[str, list] = {}
    scalars: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if not value:
            raise ConfigError(f"no value for {key!r}", source, lineno)
        try:
            if key in AXES:
                axes.setdefault(key, []).extend(_check_axis(key, _parse_values(value)))
            elif key in _SCALARS:
                if key in scalars:
                    raise ValueError(f"{key!r} given twice")
                scalars[key] = _SCALARS[key](value)
            else:
                raise ValueError(f"unknown key {key!r}")
        except ValueError as exc:
            raise ConfigError(str(exc), source, lineno) from None
    if "ed1_db" not in axes:
        raise ConfigError("missing energy axis 'ed1_db'", source)
    kwargs = {k: tuple(v) for k, v in axes.items()}
    kwargs.update(scalars)
    return SweepConfig(source=source, **kwargs)


def load_config(path: str) -> SweepConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path) from None
    return parse_config(text, source=path)


@dataclass(frozen=True)
class GridPoint:
    index: int
    M: int
    B: int
    rho: float
    lam: float
    mu: float
    L: int
    ed1_db: float


def grid_points(cfg: SweepConfig) -> list[GridPoint]:
    """Points in grid order (M, B, rho, lam, mu, L, ed1_db; last varies fastest).

    Combinations with ``L > M`` are skipped.
    """
    pts = []
    for M, B, rho, lam, mu, L, db in product(*(getattr(cfg, ax) for ax in AXES)):
        if L > M:
            continue
        pts.append(GridPoint(len(pts), M, B, rho, lam, mu, L, db))
    return pts


def evaluate_point(pt: GridPoint, cfg: SweepConfig) -> dict:
    """All columns for one grid point; missing values are ``None``."""
    row: dict = dict.fromkeys(columns_for("simulate"))
    row.update(M=pt.M, B=pt.B, rho=pt.rho, lam=pt.lam, mu=pt.mu, L=pt.L, ed1_db=pt.ed1_db)
    bud = energy_relations(cfg.n0 * 10.0 ** (pt.ed1_db / 10.0), pt.lam, pt.mu, n0=cfg.n0, L=pt.L)
    row.update(e_d1=bud.e_d1, e_c1=bud.e_c1, e_d2=bud.e_d2)
    row["mmse_floor"] = mmse_observation(pt.M, pt.rho)
    status = "ok"
    try:
        ub = upper_bound_distortion(pt.B, pt.rho, pt.M, bud)
        energy = average_energy(pt.B, pt.rho, pt.M, bud, round2_senders=cfg.round2_senders)
        row.update(upper_bound_total=ub.total_upper, d_q=ub.d_q,
                   one_shot_bound=one_shot_baseline(pt.B, pt.rho, pt.M, bud.e_d1, cfg.n0))
        spend = energy.bound
        if cfg.mode != "bounds":
            row.update(avg_energy_exact=energy.exact_form, avg_energy_bound=energy.bound)
    except EstimatorUndefined:
        status = "undefined"
        spend = bud.e_d1 + bud.e_c1 + bud.e_d2
    # the bound holds for any scheme with this average energy, shared equally
    lb = lower_bound_u_asymptotic(SourceConfig(pt.M, pt.rho), spend / (pt.M * cfg.n0))
    row.update(lower_bound_u=lb.value, regime_index=lb.regime_index)

    if cfg.mode == "simulate" and status == "ok":
        try:
            src = SourceConfig(pt.M, pt.rho)
            summary = monte_carlo(src, build_quantizer(pt.B, pt.rho), bud, cfg.trials,
                                  seed=(cfg.seed, pt.index), batch_size=cfg.batch_size,
                                  window_rule=cfg.window_rule, round2_senders=cfg.round2_senders)
            row.update(empirical_mse=summary.mean_mse, mse_ci_low=summary.mse_ci_low,
                       mse_ci_high=summary.mse_ci_high, empirical_energy=summary.mean_energy,
                       round2_rate=summary.round2_rate)
        except InfeasibleConfiguration:
            status = "infeasible"
        except InvalidParameter:
            status = "invalid"
    row["status"] = status
    return row


@dataclass(frozen=True)
class SweepResult:
    mode: str
    columns: list
    rows: list

    @property
    def n_infeasible(self) -> int:
        return sum(r["status"] == "infeasible" for r in self.rows)


def run_sweep(cfg: SweepConfig, mode: str | None = None, trials: int | None = None,
              seed: int | None = None, workers: int | None = None) -> SweepResult:
    """Evaluate every grid point; rows come back in grid order regardless of ``workers``."""
    over = {k: v for k, v in dict(mode=mode, trials=trials, seed=seed, workers=workers).items() if v is not None}
    if over:
        cfg = replace(cfg, **over)
    pts = grid_points(cfg)
    if cfg.workers == 1:
        rows = [evaluate_point(p, cfg) for p in pts]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda p: evaluate_point(p, cfg), pts))
    return SweepResult(mode=cfg.mode, columns=columns_for(cfg.mode), rows=rows)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def format_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for r in result.rows:
        w.writerow([_fmt(r.get(c)) for c in result.columns])
    return buf.getvalue()


def read_csv(path: str) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


@dataclass(frozen=True)
class Violation:
    row: int
    kind: str
    detail: str


@dataclass(frozen=True)
class GapSummary:
    """dB gap between the two-round and one-shot bound curves of one parameter group."""

    group: dict
    targets_db: list
    gaps_db: list

    @property
    def min_gap(self) -> float:
        return min(self.gaps_db) if self.gaps_db else math.nan

    @property
    def max_gap(self) -> float:
        return max(self.gaps_db) if self.gaps_db else math.nan


@dataclass(frozen=True)
class ConsistencyReport:
    n_rows: int
    checked_rows: int
    violations: list
    gaps: list

    def format(self) -> str:
        lines = [f"rows: {self.n_rows}, checked: {self.checked_rows}, violations: {len(self.violations)}"]
        for v in self.violations:
            lines.append(f"  row {v.row}: {v.kind}: {v.detail}")
        for g in self.gaps:
            key = " ".join(f"{k}={g.group[k]}" for k in g.group)
            if g.gaps_db:
                lines.append(f"gap [{key}]: {len(g.gaps_db)} targets, "
                             f"{g.min_gap:.3f} .. {g.max_gap:.3f} dB")
            else:
                lines.append(f"gap [{key}]: no common target distortion")
        return "\n".join(lines)


def _crossing(x: np.ndarray, y_db: np.ndarray, target: float) -> float | None:
    """First ``x`` where the curve falls to ``target``, linear in dB between samples."""
    below = np.flatnonzero(y_db <= target)
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(x[0]) if y_db[0] == target else None
    x0, x1, y0, y1 = x[i - 1], x[i], y_db[i - 1], y_db[i]
    return float(x0 + (x1 - x0) * (y0 - target) / (y0 - y1))


def db_gap(x_db, two_round, one_shot, targets_db) -> list:
    """Energy gap ``x_one_shot - x_two_round`` (dB) at each target distortion (dB).

    Targets that one of the curves never reaches from above are skipped.
    """
    x = np.asarray(x_db, float)
    order = np.argsort(x, kind="stable")
    x = x[order]
    a = 10.0 * np.log10(np.asarray(two_round, float)[order])
    b = 10.0 * np.log10(np.asarray(one_shot, float)[order])
    out = []
    for t in targets_db:
        xa, xb = _crossing(x, a, t), _crossing(x, b, t)
        if xa is not None and xb is not None:
            out.append((float(t), xb - xa))
    return out


_GROUP = ("M", "B", "rho", "lam", "mu", "L")
_REQUIRED = ["ed1_db", "lower_bound_u", "upper_bound_total", "one_shot_bound", "d_q", "status"] + list(_GROUP)
_EMPIRICAL = ["mse_ci_low", "mse_ci_high"]


def _num(s: str) -> float | None:
    return float(s) if s not in ("", None) else None


def consistency_report(source, require_empirical: bool = True, floor_margin_db: float = 3.0,
                       target_step_db: float = 1.0) -> ConsistencyReport:
    """Check empirical rows against the bounds and summarise the feedback gain.

    ``source`` is a CSV path or a ``(columns, rows)`` pair of strings as
    returned by ``read_csv``. A row violates when its CI lies entirely
    below ``lower_bound_u`` or entirely above ``upper_bound_total``.

    Gap targets run in ``target_step_db`` steps from 0 dB down to
    ``floor_margin_db`` above the quantization floor ``d_q``; near the
    floor both curves flatten and the gap is not meaningful.
    """
    cols, rows = read_csv(source) if isinstance(source, str) else source
    need = _REQUIRED + (_EMPIRICAL if require_empirical else [])
    missing = [c for c in need if c not in cols]
    if missing:
        raise SchemaError(f"missing columns: {', '.join(missing)}")
    has_emp = all(c in cols for c in _EMPIRICAL)
    violations, checked = [], 0
    for i, r in enumerate(rows):
        if not has_emp or r["status"] != "ok":
            continue
        lo, hi = _num(r["mse_ci_low"]), _num(r["mse_ci_high"])
        if lo is None or hi is None:
            continue
        checked += 1
        lb, ub = _num(r["lower_bound_u"]), _num(r["upper_bound_total"])
        if lb is not None and hi < lb:
            violations.append(Violation(i, "below_lower_bound", f"ci_high={hi!r} < lower={lb!r}"))
        if ub is not None and lo > ub:
            violations.append(Violation(i, "above_upper_bound", f"ci_low={lo!r} > upper={ub!r}"))

    groups: dict[tuple, list] = {}
    for r in rows:
        if r["status"] == "undefined" or r["upper_bound_total"] == "":
            continue
        groups.setdefault(tuple(r[k] for k in _GROUP), []).append(r)
    gaps = []
    for key, grp in groups.items():
        x = [float(r["ed1_db"]) for r in grp]
        two = [float(r["upper_bound_total"]) for r in grp]
        one = [float(r["one_shot_bound"]) for r in grp]
        floor_db = 10.0 * math.log10(max(float(grp[0]["d_q"]), 1e-300))
        lowest = floor_db + floor_margin_db
        n = int(math.floor(-lowest / target_step_db)) + 1 if lowest <= 0 else 0
        targets = [-i * target_step_db for i in range(n)]
        pairs = db_gap(x, two, one, targets)
        gaps.append(GapSummary(group=dict(zip(_GROUP, key)), targets_db=[t for t, _ in pairs],
                               gaps_db=[g for _, g in pairs]))
    return ConsistencyReport(n_rows=len(rows), checked_rows=checked, violations=violations, gaps=gaps)
