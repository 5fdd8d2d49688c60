"""Price-panel ingestion, log returns, window standardization, and rolling windows.

Panels hold aligned daily close prices as a dates x tickers float matrix with
NaN marking missing observations. All operations are pure; panels are never
mutated after construction, so they are safe to share across workers.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import DataError, DegenerateWindowError, ParseError, UsageError

logger = logging.getLogger(__name__)

LONG_HEADER = ("date", "ticker", "close")
META_HEADER = ("ticker", "sector", "market")
DEFAULT_SECTOR = "UNKNOWN"
DEFAULT_MARKET = "ALL"

# Reasons recorded when a window drops an asset.
REASON_MISSING = "missing data"
REASON_ZERO_VARIANCE = "zero variance"


# ---------- Domain types ----------

@dataclass(eq=False)
class PricePanel:
    """Aligned daily close prices: rows are dates, columns are tickers (NaN = missing)."""

    dates: list[date]
    tickers: list[str]
    close: np.ndarray  # shape (n_dates, n_tickers), float64
    sector_of: dict[str, str]
    market_of: dict[str, str]

    def __post_init__(self):
        self.close = np.asarray(self.close, dtype=np.float64)
        if self.close.shape != (len(self.dates), len(self.tickers)):
            raise DataError(
                f"price matrix shape {self.close.shape} does not match "
                f"{len(self.dates)} dates x {len(self.tickers)} tickers"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DataError("panel dates must be strictly increasing")
        present = self.close[np.isfinite(self.close)]
        if present.size and present.min() <= 0.0:
            raise DataError("panel contains a non-positive price")
        for t in self.tickers:
            if t not in self.sector_of or t not in self.market_of:
                raise DataError(f"ticker {t!r} has no sector/market label")

    @property
    def shape(self) -> tuple[int, int]:
        return self.close.shape

    def markets(self) -> list[str]:
        return sorted({self.market_of[t] for t in self.tickers})

    def sectors(self) -> list[str]:
        return sorted({self.sector_of[t] for t in self.tickers})

    def restrict(self, tickers: list[str], drop_empty_dates: bool = True) -> "PricePanel":
        """Column subset (given order), optionally dropping dates with no data left."""
        idx = [self.tickers.index(t) for t in tickers]
        close = self.close[:, idx]
        dates = self.dates
        if drop_empty_dates:
            keep = np.isfinite(close).any(axis=1)
            close = close[keep]
            dates = [d for d, k in zip(self.dates, keep) if k]
        return PricePanel(
            dates=dates,
            tickers=list(tickers),
            close=close.copy(),
            sector_of={t: self.sector_of[t] for t in tickers},
            market_of={t: self.market_of[t] for t in tickers},
        )

    def market_panel(self, market: str) -> "PricePanel":
        """Sub-panel for one market on that market's own trading calendar."""
        members = [t for t in self.tickers if self.market_of[t] == market]
        if not members:
            raise DataError(f"no tickers labeled with market {market!r}")
        return self.restrict(members, drop_empty_dates=True)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PricePanel):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.tickers == other.tickers
            and np.array_equal(self.close, other.close, equal_nan=True)
            and self.sector_of == other.sector_of
            and self.market_of == other.market_of
        )


@dataclass(eq=False)
class ReturnPanel:
    """Daily log returns; entry NaN wherever either source price is missing."""

    dates: list[date]  # length = source dates - 1
    tickers: list[str]
    values: np.ndarray  # shape (n_dates, n_tickers)

    @property
    def n_dates(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    def date_index(self, d: date) -> int:
        try:
            return self.dates.index(d)
        except ValueError:
            raise DataError(f"date {d.isoformat()} is not in the return panel") from None


@dataclass(frozen=True)
class WindowSpec:
    """One end-anchored rolling window over return rows [end - length, end)."""

    length: int
    step: int
    end: int  # 1-based end index into the return rows

    def __post_init__(self):
        if self.length < 3:
            raise UsageError(f"window length must be >= 3, got {self.length}")
        if self.step < 1:
            raise UsageError(f"window step must be >= 1, got {self.step}")
        if self.end < self.length:
            raise UsageError("window end index lies before the window start")

    @property
    def start(self) -> int:
        return self.end - self.length


@dataclass(eq=False)
class StandardizedWindow:
    """Z-scored return window, assets as rows; incomplete/flat assets dropped."""

    spec: WindowSpec
    end_date: date
    assets: list[str]
    values: np.ndarray  # shape (n_assets, length); each row has mean 0, variance 1
    means: np.ndarray
    stds: np.ndarray
    dropped: list[tuple[str, str]] = field(default_factory=list)

    @property
    def n_assets(self) -> int:
        return len(self.assets)


# ---------- File I/O ----------

def _open_rows(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        yield from csv.reader(fh)


def _parse_date(text: str, path, line: int) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"invalid ISO date {text!r}", path, line) from None


def _parse_price(text: str, path, line: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"invalid price {text!r}", path, line) from None
    if not math.isfinite(value) or value <= 0.0:
        raise DataError(f"{path}:{line}: non-positive price {text!r}")
    return value


def load_metadata(path) -> dict[str, tuple[str, str]]:
    """Read a `ticker,sector,market` file into {ticker: (sector, market)}."""
    rows = _open_rows(path)
    header = next(rows, None)
    if header is None or tuple(h.strip().lower() for h in header) != META_HEADER:
        raise ParseError(f"expected header {','.join(META_HEADER)}", path, 1)
    out: dict[str, tuple[str, str]] = {}
    for n, row in enumerate(rows, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", path, n)
        ticker, sector, market = (c.strip() for c in row)
        if not ticker or not sector or not market:
            raise ParseError("empty ticker/sector/market field", path, n)
        if ticker in out and out[ticker] != (sector, market):
            raise DataError(f"{path}:{n}: conflicting metadata for ticker {ticker!r}")
        out[ticker] = (sector, market)
    return out


def _load_long(path) -> dict[tuple[date, str], float]:
    rows = _open_rows(path)
    header = next(rows, None)
    if header is None or tuple(h.strip().lower() for h in header) != LONG_HEADER:
        raise ParseError(f"expected header {','.join(LONG_HEADER)}", path, 1)
    cells: dict[tuple[date, str], float] = {}
    for n, row in enumerate(rows, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", path, n)
        d = _parse_date(row[0], path, n)
        ticker = row[1].strip()
        if not ticker:
            raise ParseError("empty ticker", path, n)
        price = _parse_price(row[2], path, n)
        key = (d, ticker)
        if key in cells and cells[key] != price:
            raise DataError(
                f"{path}:{n}: conflicting duplicate for ({d.isoformat()}, {ticker}): "
                f"{cells[key]!r} vs {price!r}"
            )
        cells[key] = price
    return cells


def _load_wide(path) -> dict[tuple[date, str], float]:
    rows = _open_rows(path)
    header = next(rows, None)
    if header is None or not header or header[0].strip().lower() != "date":
        raise ParseError("expected header starting with 'date'", path, 1)
    tickers = [h.strip() for h in header[1:]]
    if not tickers or any(not t for t in tickers):
        raise ParseError("empty ticker column name", path, 1)
    if len(set(tickers)) != len(tickers):
        raise DataError(f"{path}:1: duplicate ticker columns")
    cells: dict[tuple[date, str], float] = {}
    for n, row in enumerate(rows, start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != len(tickers) + 1:
            raise ParseError(f"expected {len(tickers) + 1} fields, got {len(row)}", path, n)
        d = _parse_date(row[0], path, n)
        for ticker, cell in zip(tickers, row[1:]):
            if cell.strip() == "":
                continue  # empty cell = missing
            price = _parse_price(cell, path, n)
            key = (d, ticker)
            if key in cells and cells[key] != price:
                raise DataError(
                    f"{path}:{n}: conflicting duplicate for ({d.isoformat()}, {ticker})"
                )
            cells[key] = price
    return cells


def load_price_panel(path, layout: str = "long", metadata=None) -> PricePanel:
    """Load a close-price file (long or wide layout) into a PricePanel.

    Dates become the sorted union of all observed dates; tickers are
    deduplicated and sorted; anything unobserved stays NaN. When a metadata
    path is given every panel ticker must appear in it; otherwise all tickers
    get placeholder sector/market labels.
    """
    if layout == "long":
        cells = _load_long(path)
    elif layout == "wide":
        cells = _load_wide(path)
    else:
        raise UsageError(f"unknown layout {layout!r} (expected 'long' or 'wide')")
    if not cells:
        raise DataError(f"{path}: no price observations")

    dates = sorted({d for d, _ in cells})
    tickers = sorted({t for _, t in cells})
    date_idx = {d: i for i, d in enumerate(dates)}
    tick_idx = {t: j for j, t in enumerate(tickers)}
    close = np.full((len(dates), len(tickers)), np.nan)
    for (d, t), price in cells.items():
        close[date_idx[d], tick_idx[t]] = price

    if metadata is not None:
        meta = load_metadata(metadata) if not isinstance(metadata, dict) else metadata
        missing = [t for t in tickers if t not in meta]
        if missing:
            raise DataError(f"metadata lacks labels for tickers: {', '.join(missing[:5])}")
        sector_of = {t: meta[t][0] for t in tickers}
        market_of = {t: meta[t][1] for t in tickers}
    else:
        sector_of = {t: DEFAULT_SECTOR for t in tickers}
        market_of = {t: DEFAULT_MARKET for t in tickers}
    return PricePanel(dates, tickers, close, sector_of, market_of)


def write_price_panel(panel: PricePanel, path) -> None:
    """Write the panel in the long layout; round-trips through load_price_panel."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LONG_HEADER)
        for i, d in enumerate(panel.dates):
            iso = d.isoformat()
            for j, t in enumerate(panel.tickers):
                value = panel.close[i, j]
                if np.isfinite(value):
                    writer.writerow([iso, t, repr(float(value))])


def write_metadata(panel: PricePanel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(META_HEADER)
        for t in panel.tickers:
            writer.writerow([t, panel.sector_of[t], panel.market_of[t]])


def merge_panels(panels: list[PricePanel]) -> PricePanel:
    """Column-wise merge of panels sharing one date axis (tickers must be disjoint)."""
    if not panels:
        raise DataError("no panels to merge")
    dates = panels[0].dates
    for p in panels[1:]:
        if p.dates != dates:
            raise DataError("merge_panels requires identical date axes")
    tickers: list[str] = []
    for p in panels:
        overlap = set(tickers) & set(p.tickers)
        if overlap:
            raise DataError(f"merge_panels got duplicate tickers: {sorted(overlap)[:5]}")
        tickers.extend(p.tickers)
    close = np.hstack([p.close for p in panels])
    sector_of = {t: s for p in panels for t, s in p.sector_of.items()}
    market_of = {t: m for p in panels for t, m in p.market_of.items()}
    return PricePanel(dates, tickers, close, sector_of, market_of)


# ---------- Core operations ----------

def log_returns(panel: PricePanel) -> ReturnPanel:
    """Daily log returns ln(P_t / P_{t-1}); NaN where either price is missing."""
    if len(panel.dates) < 2:
        raise DataError("log returns need at least 2 dates")
    with np.errstate(invalid="ignore"):
        values = np.log(panel.close[1:] / panel.close[:-1])
    return ReturnPanel(dates=panel.dates[1:], tickers=list(panel.tickers), values=values)


def rolling_windows(returns: ReturnPanel, length: int, step: int = 1) -> list[WindowSpec]:
    """End-anchored windows ending at rows length, length+step, ...; [] if too short."""
    if length < 3:
        raise UsageError(f"window length must be >= 3, got {length}")
    if step < 1:
        raise UsageError(f"window step must be >= 1, got {step}")
    n = returns.n_dates
    if length > n:
        return []
    return [WindowSpec(length, step, end) for end in range(length, n + 1, step)]


def standardize_window(returns: ReturnPanel, window: WindowSpec) -> StandardizedWindow:
    """Z-score each asset over the window using the population (1/T) variance.

    Assets with any missing return in the window are dropped with reason
    "missing data"; assets with zero variance with reason "zero variance".
    Fewer than 2 survivors raises DegenerateWindowError.
    """
    if window.end > returns.n_dates:
        raise UsageError("window extends past the end of the return panel")
    block = returns.values[window.start:window.end]  # (T, N)
    complete = ~np.isnan(block).any(axis=0)

    dropped: list[tuple[str, str]] = []
    keep: list[int] = []
    means = np.zeros(returns.n_assets)
    stds = np.zeros(returns.n_assets)
    for j, ticker in enumerate(returns.tickers):
        if not complete[j]:
            dropped.append((ticker, REASON_MISSING))
            continue
        m = block[:, j].mean()
        s = math.sqrt(float(np.mean((block[:, j] - m) ** 2)))
        if s <= 0.0 or not math.isfinite(s):
            dropped.append((ticker, REASON_ZERO_VARIANCE))
            continue
        means[j] = m
        stds[j] = s
        keep.append(j)

    if dropped:
        logger.debug(
            "window ending %s dropped %d asset(s): %s",
            returns.dates[window.end - 1].isoformat(), len(dropped),
            ", ".join(f"{t} ({r})" for t, r in dropped[:5]),
        )
    if len(keep) < 2:
        raise DegenerateWindowError(
            f"window ending {returns.dates[window.end - 1].isoformat()} retained "
            f"{len(keep)} assets (need >= 2)"
        )
    keep_arr = np.array(keep, dtype=int)
    z = (block[:, keep_arr] - means[keep_arr]) / stds[keep_arr]
    return StandardizedWindow(
        spec=window,
        end_date=returns.dates[window.end - 1],
        assets=[returns.tickers[j] for j in keep],
        values=np.ascontiguousarray(z.T),
        means=means[keep_arr],
        stds=stds[keep_arr],
        dropped=dropped,
    )
