"""Rolling formation/test portfolio study: MVP vs equal weights, gap vs realized risk.

Implements the Monte Carlo design: for each rolling step, sample fixed-size
stock subsets, estimate minimum-variance and equal weights in the formation
window, apply them out-of-sample to the test window, and relate the
formation-window structure gap to realized annualized volatility through
Spearman ranks, quintile sorts, and incremental R-squared.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import date
from typing import NamedTuple

import numpy as np
from scipy import stats as sstats

from .errors import (
    DataError,
    DegeneratePortfolioError,
    UndefinedCorrelationError,
    UsageError,
)
from .panel import ReturnPanel


# ---------- Domain types ----------

@dataclass(eq=False)
class CovarianceMatrix:
    """Sample covariance of raw formation returns (population 1/T denominator)."""

    assets: list[str]
    values: np.ndarray


class SpearmanResult(NamedTuple):
    rho: float
    p_value: float


@dataclass(frozen=True)
class StudyConfig:
    """Rolling study parameters; step defaults to the test length (non-overlap)."""

    formation: int = 60
    test: int = 20
    n_stocks: int = 10
    portfolios: int = 500
    annualization: float = 252.0
    step: int | None = None

    def __post_init__(self):
        if self.formation < 3:
            raise UsageError(f"formation window must be >= 3 days, got {self.formation}")
        if self.test < 2:
            raise UsageError(f"test window must be >= 2 days, got {self.test}")
        if self.n_stocks < 2:
            raise UsageError(f"portfolio size must be >= 2 stocks, got {self.n_stocks}")
        if self.portfolios < 1:
            raise UsageError(f"portfolio count must be >= 1, got {self.portfolios}")
        if self.annualization <= 0:
            raise UsageError("annualization factor must be positive")
        if self.step is not None and self.step < 1:
            raise UsageError(f"study step must be >= 1, got {self.step}")

    @property
    def effective_step(self) -> int:
        return self.test if self.step is None else self.step


@dataclass(frozen=True)
class PortfolioObservation:
    """One (window, sampled subset) outcome of the rolling study."""

    market: str
    window_index: int
    window_end: date  # formation-window end date
    tickers: tuple[str, ...]
    delta: float
    rho_bar: float
    sigma_hist: float  # formation-window EW volatility, % annualized
    sigma_mvp: float  # test-window MVP volatility, % annualized
    sigma_ew: float  # test-window EW volatility, % annualized
    seed_key: tuple[int, ...]


@dataclass(eq=False)
class StudyResult:
    observations: list[PortfolioObservation]
    skipped_windows: list[tuple[int, str]]
    skipped_portfolios: int
    config: StudyConfig
    seed: int
    stream: int
    market: str
    resampling: str = "per_window"


@dataclass(frozen=True)
class QuintileReport:
    """Gap-vs-risk statistics for one market's observations."""

    market: str
    n_observations: int
    event_date: date | None
    spearman_delta_mvp: SpearmanResult
    spearman_delta_ew: SpearmanResult
    quintile_mean_sigma_mvp: tuple[float, ...]  # Q0 (lowest delta) .. Q4
    ls_spread: float  # mean(Q4) - mean(Q0), % annualized
    benchmark_spearman_rho_bar: SpearmanResult | None
    benchmark_spearman_sigma_hist: SpearmanResult | None
    incr_r2_over_rho_bar: float
    incr_r2_over_sigma_hist: float
    pre_shock: tuple[float, float, int] | None  # (rho, p, n)
    post_shock: tuple[float, float, int] | None


# ---------- Weight construction ----------

def covariance_matrix(values: np.ndarray, assets: list[str] | None = None) -> CovarianceMatrix:
    """Covariance of raw returns, assets as rows, population (1/T) denominator."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise UsageError(f"covariance needs a (n_assets >= 2, n_obs) block, got {x.shape}")
    if np.isnan(x).any():
        raise DataError("covariance input contains missing returns; filter assets first")
    centered = x - x.mean(axis=1, keepdims=True)
    v = centered @ centered.T / x.shape[1]
    v = (v + v.T) / 2.0
    names = assets if assets is not None else [f"A{i}" for i in range(x.shape[0])]
    return CovarianceMatrix(assets=list(names), values=v)


def mvp_weights(cov: CovarianceMatrix | np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Fully invested minimum-variance weights q = V+ 1 / (1' V+ 1).

    Uses the Moore-Penrose pseudo-inverse (singular values below rtol * s_max
    are treated as zero), so rank-deficient covariances still yield weights;
    shorting is allowed. Raises DegeneratePortfolioError when 1'V+1 vanishes.
    """
    v = cov.values if isinstance(cov, CovarianceMatrix) else np.asarray(cov, dtype=float)
    pinv = np.linalg.pinv(v, rcond=rtol)
    ones = np.ones(v.shape[0])
    numer = pinv @ ones
    denom = float(ones @ numer)
    if not math.isfinite(denom) or abs(denom) < 1e-12:
        raise DegeneratePortfolioError(f"1'V+1 = {denom!r}; minimum-variance weights undefined")
    return numer / denom


def ew_weights(n: int) -> np.ndarray:
    """Equal weights 1/N."""
    if n < 1:
        raise UsageError(f"equal weights need n >= 1, got {n}")
    return np.full(n, 1.0 / n)


def realized_volatility(weights: np.ndarray, test_returns: np.ndarray, annualization: float = 252.0) -> float:
    """Annualized percent volatility of q'r over the test window (ddof=1 variance)."""
    r = np.asarray(test_returns, dtype=float)
    if r.ndim != 2 or r.shape[0] != len(weights):
        raise UsageError(f"test block shape {r.shape} does not match {len(weights)} weights")
    if r.shape[1] < 2:
        raise UsageError(f"test window needs >= 2 observations, got {r.shape[1]}")
    if np.isnan(r).any():
        raise DataError("test window contains missing returns")
    port = weights @ r
    return float(np.std(port, ddof=1) * math.sqrt(annualization) * 100.0)


# ---------- The rolling study ----------

def _window_observations(
    returns: ReturnPanel,
    config: StudyConfig,
    seed: int,
    stream: int,
    market: str,
    w_idx: int,
    start: int,
) -> tuple[list[PortfolioObservation], int, str | None]:
    t, h, n = config.formation, config.test, config.n_stocks
    form = returns.values[start:start + t]
    test = returns.values[start + t:start + t + h]
    complete = ~(np.isnan(form).any(axis=0) | np.isnan(test).any(axis=0))
    form_std = form.std(axis=0)  # population; only the > 0 check matters here
    eligible = np.flatnonzero(complete & (form_std > 0.0))
    if eligible.size < n:
        return [], 0, f"{eligible.size} eligible stocks (need {n})"

    end_date = returns.dates[start + t - 1]
    observations: list[PortfolioObservation] = []
    skipped = 0
    for p_idx in range(config.portfolios):
        rng = np.random.default_rng([seed, stream, w_idx, p_idx])
        pick = np.sort(rng.choice(eligible, size=n, replace=False))
        x = form[:, pick].T  # (n, t) raw formation returns
        y = test[:, pick].T

        # Shared population-1/T moments give both the covariance for the
        # weights and the correlation for the gap of the same subset.
        cov = covariance_matrix(x)
        d = np.sqrt(np.diag(cov.values))
        corr = cov.values / np.outer(d, d)
        corr = (corr + corr.T) / 2.0
        np.clip(corr, -1.0, 1.0, out=corr)
        np.fill_diagonal(corr, 1.0)
        lam = float(np.linalg.eigvalsh(corr)[-1])
        rho_bar = float((corr.sum() - n) / (n * (n - 1)))
        delta = (lam - 1.0) / (n - 1.0) - rho_bar

        try:
            q_mvp = mvp_weights(cov)
        except DegeneratePortfolioError:
            skipped += 1
            continue
        q_ew = ew_weights(n)
        # Formation moments stay on the population (1/T) convention.
        hist = q_ew @ x
        sigma_hist = float(
            np.sqrt(np.mean((hist - hist.mean()) ** 2))
            * math.sqrt(config.annualization) * 100.0
        )
        observations.append(PortfolioObservation(
            market=market,
            window_index=w_idx,
            window_end=end_date,
            tickers=tuple(returns.tickers[j] for j in pick),
            delta=delta,
            rho_bar=rho_bar,
            sigma_hist=sigma_hist,
            sigma_mvp=realized_volatility(q_mvp, y, config.annualization),
            sigma_ew=realized_volatility(q_ew, y, config.annualization),
            seed_key=(seed, stream, w_idx, p_idx),
        ))
    return observations, skipped, None


def run_portfolio_study(
    returns: ReturnPanel,
    config: StudyConfig = StudyConfig(),
    seed: int = 0,
    market: str = "ALL",
    stream: int = 0,
    threads: int = 1,
) -> StudyResult:
    """Run the rolling formation/test Monte Carlo study over one market's returns.

    Stock subsets are redrawn each window from an RNG substream keyed by
    (seed, stream, window, portfolio), so results are bit-identical for any
    thread count or execution order. Windows advance by config.step
    (default: the test length, giving non-overlapping test windows).
    """
    t, h = config.formation, config.test
    step = config.effective_step
    starts = list(range(0, returns.n_dates - t - h + 1, step))
    if not starts:
        raise DataError(
            f"panel has {returns.n_dates} return rows; need >= {t + h} "
            "for one formation/test pair"
        )

    def one(args):
        w_idx, start = args
        return _window_observations(returns, config, seed, stream, market, w_idx, start)

    jobs = list(enumerate(starts))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    observations: list[PortfolioObservation] = []
    skipped_windows: list[tuple[int, str]] = []
    skipped_portfolios = 0
    for (w_idx, _), (obs, skipped, reason) in zip(jobs, results):
        if reason is not None:
            skipped_windows.append((w_idx, reason))
        observations.extend(obs)
        skipped_portfolios += skipped
    return StudyResult(
        observations=observations,
        skipped_windows=skipped_windows,
        skipped_portfolios=skipped_portfolios,
        config=config,
        seed=seed,
        stream=stream,
        market=market,
    )


# ---------- Statistics ----------

def spearman(x, y) -> SpearmanResult:
    """Spearman rank correlation with average ranks for ties.

    The p-value uses the two-sided t approximation with n-2 degrees of
    freedom; |rho| = 1 maps to p = 0. Raises UndefinedCorrelationError when
    either input has zero rank variance.
    """
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.ndim != 1 or xv.shape != yv.shape:
        raise UsageError(f"spearman needs two equal-length vectors, got {xv.shape} / {yv.shape}")
    n = xv.size
    if n < 3:
        raise UsageError(f"spearman needs n >= 3, got {n}")
    if np.isnan(xv).any() or np.isnan(yv).any():
        raise DataError("spearman inputs contain NaN")
    if np.all(xv == xv[0]) or np.all(yv == yv[0]):
        raise UndefinedCorrelationError("zero rank variance: correlation undefined")
    rx = sstats.rankdata(xv, method="average")
    ry = sstats.rankdata(yv, method="average")
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) >= 1.0:
        return SpearmanResult(rho=rho, p_value=0.0)
    tstat = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = 2.0 * float(sstats.t.sf(abs(tstat), df=n - 2))
    return SpearmanResult(rho=rho, p_value=min(1.0, p))


def quintile_partition(n: int) -> list[int]:
    """Sizes of the 5 groups: as equal as possible, remainder to the lowest indices."""
    q, r = divmod(n, 5)
    return [q + 1 if i < r else q for i in range(5)]


def _ols_r2(design: np.ndarray, y: np.ndarray) -> float:
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - float(np.sum(resid ** 2)) / ss_tot


def incremental_r2(y: np.ndarray, benchmark: np.ndarray, extra: np.ndarray) -> float:
    """R2 gain from adding `extra` to an intercept + benchmark OLS of y."""
    ones = np.ones_like(y)
    base = _ols_r2(np.column_stack([ones, benchmark]), y)
    full = _ols_r2(np.column_stack([ones, benchmark, extra]), y)
    return full - base


def quintile_report(
    observations: list[PortfolioObservation],
    event_date: date | None = None,
) -> QuintileReport:
    """Spearman, quintile, and incremental-R2 statistics for one observation set.

    Observations are sorted ascending by delta (ties broken by input order)
    and split into 5 contiguous near-equal groups Q0..Q4; the long-short
    spread is mean(Q4) - mean(Q0) of test-window MVP volatility. Subperiod
    Spearmans split on the formation end date: pre strictly before the event,
    post on/after it.
    """
    n = len(observations)
    if n < 5:
        raise DataError(f"quintile report needs >= 5 observations, got {n}")
    markets = sorted({o.market for o in observations})
    market = markets[0] if len(markets) == 1 else "ALL"

    delta = np.array([o.delta for o in observations])
    sigma_mvp = np.array([o.sigma_mvp for o in observations])
    sigma_ew = np.array([o.sigma_ew for o in observations])
    rho_bar = np.array([o.rho_bar for o in observations])
    sigma_hist = np.array([o.sigma_hist for o in observations])

    order = np.argsort(delta, kind="stable")
    sizes = quintile_partition(n)
    means: list[float] = []
    lo = 0
    for size in sizes:
        means.append(float(sigma_mvp[order[lo:lo + size]].mean()))
        lo += size

    def maybe_spearman(a: np.ndarray, b: np.ndarray) -> SpearmanResult | None:
        try:
            return spearman(a, b)
        except UndefinedCorrelationError:
            return None

    def sub(mask: np.ndarray):
        if np.count_nonzero(mask) < 3:
            return None
        res = maybe_spearman(delta[mask], sigma_mvp[mask])
        if res is None:
            return None
        return (res.rho, res.p_value, int(np.count_nonzero(mask)))

    pre = post = None
    if event_date is not None:
        ends = np.array([o.window_end for o in observations])
        pre = sub(ends < event_date)
        post = sub(ends >= event_date)

    return QuintileReport(
        market=market,
        n_observations=n,
        event_date=event_date,
        spearman_delta_mvp=spearman(delta, sigma_mvp),
        spearman_delta_ew=spearman(delta, sigma_ew),
        quintile_mean_sigma_mvp=tuple(means),
        ls_spread=means[4] - means[0],
        benchmark_spearman_rho_bar=maybe_spearman(rho_bar, sigma_mvp),
        benchmark_spearman_sigma_hist=maybe_spearman(sigma_hist, sigma_mvp),
        incr_r2_over_rho_bar=incremental_r2(sigma_mvp, rho_bar, delta),
        incr_r2_over_sigma_hist=incremental_r2(sigma_mvp, sigma_hist, delta),
        pre_shock=pre,
        post_shock=post,
    )


# ---------- Serialization ----------

def _fmt(x: float) -> str:
    return format(float(x), ".9g")


OBS_CSV_HEADER = "market,window_end,delta,rho_bar,sigma_hist,sigma_mvp,sigma_ew,tickers"
OBS_CSV_UNITS = (
    "# units: market=label, window_end=ISO-8601 date, delta=dimensionless, "
    "rho_bar=dimensionless, sigma_hist=% annualized, sigma_mvp=% annualized, "
    "sigma_ew=% annualized, tickers=semicolon-joined labels"
)


def write_observations_csv(results: list[StudyResult], path) -> None:
    lines = [OBS_CSV_UNITS, OBS_CSV_HEADER]
    for result in results:
        for o in result.observations:
            lines.append(",".join([
                o.market,
                o.window_end.isoformat(),
                _fmt(o.delta),
                _fmt(o.rho_bar),
                _fmt(o.sigma_hist),
                _fmt(o.sigma_mvp),
                _fmt(o.sigma_ew),
                ";".join(o.tickers),
            ]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def report_to_dict(report: QuintileReport) -> dict:
    def spear(s: SpearmanResult | None) -> dict | None:
        if s is None:
            return None
        return {"rho": float(_fmt(s.rho)), "p_value": float(_fmt(s.p_value))}

    def subperiod(t):
        if t is None:
            return None
        return {"rho": float(_fmt(t[0])), "p_value": float(_fmt(t[1])), "n": t[2]}

    return {
        "market": report.market,
        "n_observations": report.n_observations,
        "event_date": report.event_date.isoformat() if report.event_date else None,
        "spearman_delta_mvp": spear(report.spearman_delta_mvp),
        "spearman_delta_ew": spear(report.spearman_delta_ew),
        "quintile_mean_sigma_mvp_pct": [float(_fmt(m)) for m in report.quintile_mean_sigma_mvp],
        "ls_spread_pct": float(_fmt(report.ls_spread)),
        "benchmark_spearman_rho_bar": spear(report.benchmark_spearman_rho_bar),
        "benchmark_spearman_sigma_hist": spear(report.benchmark_spearman_sigma_hist),
        "incr_r2_over_rho_bar": float(_fmt(report.incr_r2_over_rho_bar)),
        "incr_r2_over_sigma_hist": float(_fmt(report.incr_r2_over_sigma_hist)),
        "pre_shock_spearman": subperiod(report.pre_shock),
        "post_shock_spearman": subperiod(report.post_shock),
    }
