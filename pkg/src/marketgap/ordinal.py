"""Cross-sectional ordinal patterns and entropy of 3-day return triples.

Each stock's last three daily returns map to one of the 3! = 6 permutations
that sort them ascending (ties broken by earlier time index). The Shannon
entropy of the pattern distribution across stocks, in nats, measures the
diversity of short-term directional behavior: ln 6 when every pattern is
equally common, 0 when all stocks share one pattern.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import DegenerateWindowError, NumericError, UsageError
from .panel import ReturnPanel, rolling_windows
from .regimes import PhaseWindows

# The 6 permutations of (0, 1, 2) in lexicographic order; index = pattern id.
PATTERNS = ((0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0))
N_PATTERNS = len(PATTERNS)
MAX_ENTROPY = math.log(N_PATTERNS)

# Permutation (a, b, c) encoded as 9a + 3b + c -> pattern id; -1 marks non-permutations.
_CODE_TO_INDEX = np.full(27, -1, dtype=np.int64)
for _i, _p in enumerate(PATTERNS):
    _CODE_TO_INDEX[9 * _p[0] + 3 * _p[1] + _p[2]] = _i


@dataclass(eq=False)
class OrdinalDistribution:
    """Pattern counts and frequencies across the eligible stocks on one date."""

    date: date
    counts: np.ndarray  # shape (6,), ints
    probabilities: np.ndarray  # shape (6,), sums to 1
    n_stocks: int


@dataclass(eq=False)
class EntropySeries:
    """Dated ordinal entropy with the underlying pattern distributions."""

    dates: list[date]
    values: np.ndarray  # entropy in nats, one per date
    n_stocks: np.ndarray
    probabilities: np.ndarray  # shape (n_dates, 6)
    window_length: int
    step: int


@dataclass(frozen=True)
class PhaseStat:
    mean: float
    std: float | None  # sample std (ddof=1); None when fewer than 2 points
    count: int


@dataclass(frozen=True)
class OrdinalPhaseStats:
    """Per-phase entropy statistics plus the false-recovery 95th percentile."""

    pre_shock: PhaseStat | None
    shock: PhaseStat | None
    false_recovery: PhaseStat | None
    stabilized: PhaseStat | None
    false_recovery_p95: float | None
    percentile_method: str = "linear interpolation between closest ranks"


# ---------- Pattern extraction ----------

def ordinal_pattern(x0: float, x1: float, x2: float) -> int:
    """Pattern id of the permutation sorting (x0, x1, x2) ascending, stable on ties."""
    for v in (x0, x1, x2):
        if not math.isfinite(v):
            raise NumericError(f"ordinal pattern needs finite inputs, got {v!r}")
    perm = sorted(range(3), key=lambda i: ((x0, x1, x2)[i], i))
    return int(_CODE_TO_INDEX[9 * perm[0] + 3 * perm[1] + perm[2]])


def pattern_indices(triples: np.ndarray) -> np.ndarray:
    """Vectorized pattern ids for a (3, n_stocks) block of return triples."""
    if triples.shape[0] != 3:
        raise UsageError(f"expected a (3, n) block, got shape {triples.shape}")
    order = np.argsort(triples, axis=0, kind="stable")
    codes = 9 * order[0] + 3 * order[1] + order[2]
    return _CODE_TO_INDEX[codes]


# ---------- Distributions and entropy ----------

def cross_section_distribution(returns: ReturnPanel, when: date | int) -> OrdinalDistribution:
    """Pattern distribution over stocks with complete returns at t-2, t-1, t."""
    t = returns.date_index(when) if isinstance(when, date) else int(when)
    if t < 2 or t >= returns.n_dates:
        raise UsageError(f"date index {t} leaves no room for a 3-day triple")
    triples = returns.values[t - 2:t + 1]  # (3, N)
    eligible = np.isfinite(triples).all(axis=0)
    n = int(np.count_nonzero(eligible))
    if n == 0:
        raise DegenerateWindowError(
            f"no stock has complete returns for the triple ending {returns.dates[t].isoformat()}"
        )
    idx = pattern_indices(triples[:, eligible])
    counts = np.bincount(idx, minlength=N_PATTERNS).astype(np.int64)
    return OrdinalDistribution(
        date=returns.dates[t],
        counts=counts,
        probabilities=counts / n,
        n_stocks=n,
    )


def ordinal_entropy(dist) -> float:
    """Shannon entropy in nats; zero-probability patterns contribute nothing."""
    p = np.asarray(dist.probabilities if isinstance(dist, OrdinalDistribution) else dist, dtype=float)
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum() + 0.0)  # +0.0 normalizes -0.0


def entropy_series(
    returns: ReturnPanel,
    length: int = 60,
    step: int = 1,
    embedding_dimension: int = 3,
    delay: int = 1,
) -> EntropySeries:
    """Ordinal entropy at each rolling window end date.

    Only the final three returns of each window feed the patterns; the window
    length just positions the series so it shares a date axis with the
    spectral gap series. A stock contributes on a date iff its t-2..t returns
    are all present. Embedding dimensions other than 3 or delays other than 1
    are rejected.
    """
    if embedding_dimension != 3:
        raise UsageError(
            f"only embedding dimension 3 is supported, got {embedding_dimension}"
        )
    if delay != 1:
        raise UsageError(f"only delay 1 is supported, got {delay}")
    windows = rolling_windows(returns, length, step)
    dates: list[date] = []
    values: list[float] = []
    counts: list[int] = []
    probs: list[np.ndarray] = []
    for w in windows:
        dist = cross_section_distribution(returns, w.end - 1)
        dates.append(dist.date)
        values.append(ordinal_entropy(dist))
        counts.append(dist.n_stocks)
        probs.append(dist.probabilities)
    return EntropySeries(
        dates=dates,
        values=np.array(values),
        n_stocks=np.array(counts, dtype=np.int64),
        probabilities=np.vstack(probs) if probs else np.zeros((0, N_PATTERNS)),
        window_length=length,
        step=step,
    )


# ---------- Phase statistics ----------

def _phase_values(dates: list[date], values: np.ndarray, interval) -> np.ndarray:
    if interval is None:
        return np.array([])
    start, end = interval
    mask = np.array([start <= d <= end for d in dates])
    return values[mask]


def _stat(vals: np.ndarray) -> PhaseStat | None:
    if vals.size == 0:
        return None
    std = float(np.std(vals, ddof=1)) if vals.size >= 2 else None
    return PhaseStat(mean=float(np.mean(vals)), std=std, count=int(vals.size))


def phase_statistics(series: EntropySeries, phases: PhaseWindows) -> OrdinalPhaseStats:
    """Mean and sample std of entropy per phase; 95th percentile over false recovery."""
    per_phase = {}
    for name in ("pre_shock", "shock", "false_recovery", "stabilized"):
        per_phase[name] = _phase_values(series.dates, series.values, getattr(phases, name))
    fr = per_phase["false_recovery"]
    p95 = float(np.percentile(fr, 95, method="linear")) if fr.size else None
    return OrdinalPhaseStats(
        pre_shock=_stat(per_phase["pre_shock"]),
        shock=_stat(per_phase["shock"]),
        false_recovery=_stat(per_phase["false_recovery"]),
        stabilized=_stat(per_phase["stabilized"]),
        false_recovery_p95=p95,
    )
