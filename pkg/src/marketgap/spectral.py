"""Correlation matrices, eigen-spectra, random-matrix bounds, and per-window summaries.

The per-window summary couples the normalized leading eigenvalue
lambda_norm = (lambda_max - 1) / (N - 1) with the mean off-diagonal
correlation rho; their difference delta is the structure gap tracked by the
regimes module. The signed gap is never negative (Rayleigh bound: the leading
eigenvalue dominates the uniform-vector quotient 1 + (N-1)*rho_signed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date

import numpy as np

from .errors import DegenerateWindowError, NumericError, UsageError
from .panel import StandardizedWindow

RHO_MODES = ("signed", "abs")
NORM_MODES = ("excess", "plain")


# ---------- Domain types ----------

@dataclass(eq=False)
class CorrelationMatrix:
    """Symmetric Pearson correlation matrix with unit diagonal."""

    assets: list[str]
    values: np.ndarray

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def validate(self, psd_tol: float = 1e-8) -> None:
        c = self.values
        if c.shape != (self.n_assets, self.n_assets):
            raise NumericError("correlation matrix shape mismatch")
        if not np.allclose(c, c.T, atol=1e-12, rtol=0.0):
            raise NumericError("correlation matrix not symmetric")
        if np.max(np.abs(np.diag(c) - 1.0)) > 1e-10:
            raise NumericError("correlation diagonal deviates from 1")
        if np.max(np.abs(c)) > 1.0 + 1e-10:
            raise NumericError("correlation entry outside [-1, 1]")
        smallest = float(np.linalg.eigvalsh(c)[0])
        if smallest < -psd_tol:
            raise NumericError(f"correlation matrix not PSD (min eigenvalue {smallest:.3e})")


@dataclass(eq=False)
class EigenSpectrum:
    """Eigenvalues in descending order with orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def leading(self) -> float:
        return float(self.eigenvalues[0])


@dataclass(frozen=True)
class MPBounds:
    """Marchenko-Pastur noise band [lower, upper] for aspect ratio q = T / N."""

    lower: float
    upper: float
    q: float


@dataclass(frozen=True)
class SpectralSummary:
    """One rolling window's spectral statistics."""

    end_date: date
    n_assets: int
    lambda_max: float
    lambda_norm: float
    rho_signed: float
    rho_abs: float
    delta: float
    rho_mode: str
    norm_mode: str
    mp: MPBounds
    n_above_mp: int


# ---------- Operations ----------

def correlation_matrix(window: StandardizedWindow) -> CorrelationMatrix:
    """Equal-time Pearson matrix C = Z Z' / T from a standardized window.

    Result is symmetrized, clipped to [-1, 1], and gets an exact unit diagonal.
    """
    n, t = window.values.shape
    if n < 2:
        raise DegenerateWindowError(f"correlation needs >= 2 assets, got {n}")
    if t < 3:
        raise DegenerateWindowError(f"correlation needs >= 3 observations, got {t}")
    c = window.values @ window.values.T / t
    c = (c + c.T) / 2.0
    np.clip(c, -1.0, 1.0, out=c)
    np.fill_diagonal(c, 1.0)
    return CorrelationMatrix(assets=list(window.assets), values=c)


def eigen_spectrum(corr: CorrelationMatrix, negative_tol: float = 1e-8) -> EigenSpectrum:
    """Full symmetric eigendecomposition, descending, tiny negatives clamped to 0."""
    c = corr.values
    try:
        w, v = np.linalg.eigh(c)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigendecomposition failed for {corr.n_assets}x{corr.n_assets} matrix "
            f"(|C|_max={np.max(np.abs(c)):.3e}, trace={np.trace(c):.6e}): {exc}"
        ) from exc
    w = w[::-1].copy()
    v = v[:, ::-1].copy()
    w[(w < 0.0) & (w >= -negative_tol)] = 0.0
    return EigenSpectrum(eigenvalues=w, eigenvectors=v)


def mp_bounds(t_obs: int, n_assets: int) -> MPBounds:
    """Closed-form noise band (1 +- sqrt(1/q))^2 with q = T / N."""
    if t_obs < 1:
        raise UsageError(f"window length must be >= 1, got {t_obs}")
    if n_assets < 2:
        raise UsageError(f"asset count must be >= 2, got {n_assets}")
    q = t_obs / n_assets
    root = math.sqrt(1.0 / q)
    return MPBounds(lower=(1.0 - root) ** 2, upper=(1.0 + root) ** 2, q=q)


def mean_offdiagonal(values: np.ndarray, absolute: bool = False) -> float:
    """Arithmetic mean of the off-diagonal entries (optionally of their magnitudes)."""
    n = values.shape[0]
    m = np.abs(values) if absolute else values
    return float((m.sum() - np.trace(m)) / (n * (n - 1)))


def summary_from_correlation(
    corr: CorrelationMatrix,
    *,
    end_date: date,
    n_obs: int,
    rho_mode: str = "signed",
    norm_mode: str = "excess",
) -> SpectralSummary:
    """Spectral summary of an explicit correlation matrix (n_obs sets the MP band)."""
    if rho_mode not in RHO_MODES:
        raise UsageError(f"rho_mode must be one of {RHO_MODES}, got {rho_mode!r}")
    if norm_mode not in NORM_MODES:
        raise UsageError(f"norm_mode must be one of {NORM_MODES}, got {norm_mode!r}")
    n = corr.n_assets
    if n < 2:
        raise DegenerateWindowError(f"summary needs >= 2 assets, got {n}")
    spectrum = eigen_spectrum(corr)
    lam = spectrum.leading
    lam_norm = lam / n if norm_mode == "plain" else (lam - 1.0) / (n - 1.0)
    rho_signed = mean_offdiagonal(corr.values, absolute=False)
    rho_abs = mean_offdiagonal(corr.values, absolute=True)
    rho = rho_abs if rho_mode == "abs" else rho_signed
    bounds = mp_bounds(n_obs, n)
    return SpectralSummary(
        end_date=end_date,
        n_assets=n,
        lambda_max=lam,
        lambda_norm=lam_norm,
        rho_signed=rho_signed,
        rho_abs=rho_abs,
        delta=lam_norm - rho,
        rho_mode=rho_mode,
        norm_mode=norm_mode,
        mp=bounds,
        n_above_mp=int(np.count_nonzero(spectrum.eigenvalues > bounds.upper)),
    )


def spectral_summary(
    window: StandardizedWindow,
    rho_mode: str = "signed",
    norm_mode: str = "excess",
) -> SpectralSummary:
    """Correlation, eigen-spectrum, MP band, and the gap for one window."""
    corr = correlation_matrix(window)
    return summary_from_correlation(
        corr,
        end_date=window.end_date,
        n_obs=window.spec.length,
        rho_mode=rho_mode,
        norm_mode=norm_mode,
    )


def equicorrelation(n: int, c: float) -> np.ndarray:
    """Matrix with unit diagonal and constant off-diagonal c.

    Spectrum is {1 + (n-1)c} plus (n-1) copies of (1-c); handy as an analytic
    reference in tests and docs.
    """
    if n < 2:
        raise UsageError(f"equicorrelation needs n >= 2, got {n}")
    if not -1.0 / (n - 1) <= c <= 1.0:
        raise UsageError(f"equicorrelation with c={c} is not PSD for n={n}")
    m = np.full((n, n), float(c))
    np.fill_diagonal(m, 1.0)
    return m
