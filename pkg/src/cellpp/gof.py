"""Simulated-envelope goodness-of-fit tests.

A fitted model is probed by sampling M realizations in the data's
window, computing each realization's summary statistic with exactly
the estimator settings used on the data, and asking whether the data
curve stays between the replicate extremes (pointwise band) or within
the maximum deviation around the model curve (global band).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DegeneratePatternError,
    GridMismatchError,
)
from .estimators import (
    CURVE_KINDS,
    RadiusGrid,
    SummaryCurve,
    estimate_F,
    estimate_G,
    estimate_J,
    estimate_K,
)
from .geom import Window
from .models import ModelSpec, check_valid, model_to_dict, theoretical_curve
from .rng import as_stream

MIN_REPLICATES = 19
RECOMMENDED_REPLICATES = 39

# Substream layout per replicate index i: 10*i for the sampler,
# 10*i + 1 for the F test locations.  Keeping the layout sparse means
# replicate sets for smaller M are prefixes of larger ones, so bands
# can only widen as M grows on a shared stream.
_REPLICATE_STRIDE = 10
_REFERENCE_OFFSET = 999_999_937


@dataclass
class EnvelopeBand:
    """Lower/upper test band for one statistic.

    ``mode`` is ``pointwise`` (replicate min/max, significance
    2/(M+1)) or ``global`` (model curve plus/minus the largest
    replicate deviation, significance 1/(M+1)).  NaN marks radii where
    the band is undefined.
    """

    grid: RadiusGrid
    lower: np.ndarray
    upper: np.ndarray
    kind: str
    mode: str
    replicates: int
    significance: float
    reference: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ConfigError(f"kind must be one of {CURVE_KINDS}")
        if self.mode not in ("pointwise", "global"):
            raise ConfigError("mode must be 'pointwise' or 'global'")
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if (self.lower.size != self.grid.size
                or self.upper.size != self.grid.size):
            raise GridMismatchError("band and grid have different lengths")
        both = np.isfinite(self.lower) & np.isfinite(self.upper)
        if np.any(self.lower[both] > self.upper[both]):
            raise ConfigError("band has lower > upper")


@dataclass
class GofVerdict:
    """Containment verdict of one empirical curve against one band.

    A whole-curve pass demands containment at every tested radius.
    That is exactly calibrated for global bands; for pointwise bands
    the per-radius guarantee is 2/(M+1) but scanning many radii
    rejects more often, so read ``exceedance_fraction`` (share of
    tested radii outside) rather than ``passed`` alone there.
    """

    kind: str
    passed: bool
    first_exit_radius: float | None
    exceedance_fraction: float
    n_defined: int
    r_max: float | None = None

    def to_dict(self) -> dict:
        return {"kind": self.kind, "passed": bool(self.passed),
                "first_exit_radius": self.first_exit_radius,
                "exceedance_fraction": float(self.exceedance_fraction),
                "n_defined": int(self.n_defined),
                "r_max": self.r_max}


def _check_m(replicates: int) -> None:
    if replicates < MIN_REPLICATES:
        raise ConfigError(f"envelope needs at least {MIN_REPLICATES} "
                          f"replicates, got {replicates}")
    if replicates < RECOMMENDED_REPLICATES:
        warnings.warn(f"{replicates} replicates gives a weak test; "
                      f"{RECOMMENDED_REPLICATES} is the usual choice",
                      stacklevel=3)


def replicate_curves(spec: ModelSpec, window: Window, replicates: int,
                     grid: RadiusGrid, *, stream=0,
                     n_test: int | None = None,
                     correction: str = "border") -> dict:
    """Empirical K/F/G/J of ``replicates`` realizations of ``spec``.

    Returns a dict of kind -> (replicates, grid size) arrays.  Pass the
    data's F test-point count as ``n_test`` so replicate curves carry
    the same estimator bias as the data curve they calibrate.
    """
    from .samplers import sample

    check_valid(spec)
    base = as_stream(stream)
    out = {kind: np.empty((replicates, grid.size)) for kind in CURVE_KINDS}
    for i in range(int(replicates)):
        pattern = sample(spec, window, base.substream(_REPLICATE_STRIDE * i))
        if pattern.n < 2:
            raise DegeneratePatternError(
                f"envelope replicate {i} of {spec.name} drew "
                f"{pattern.n} points; window too small for this model")
        k = estimate_K(pattern, grid, correction=correction)
        f = estimate_F(pattern, grid, n_test=n_test,
                       seed=base.substream(_REPLICATE_STRIDE * i + 1),
                       correction=correction)
        g = estimate_G(pattern, grid, correction=correction)
        j = estimate_J(f, g)
        for kind, curve in (("K", k), ("F", f), ("G", g), ("J", j)):
            out[kind][i] = curve.values
    return out


def pointwise_envelope(spec: ModelSpec, window: Window, statistic: str,
                       replicates: int = RECOMMENDED_REPLICATES, *,
                       grid: RadiusGrid | None = None, stream=0,
                       n_test: int | None = None,
                       correction: str = "border",
                       replicate_values: np.ndarray | None = None
                       ) -> EnvelopeBand:
    """Min/max band of the statistic over simulated realizations.

    A data curve escaping this band anywhere rejects the model at
    significance 2/(replicates+1).  ``replicate_values`` lets several
    bands share one set of realizations.
    """
    _check_m(replicates)
    if grid is None:
        grid = RadiusGrid.default(window)
    if replicate_values is None:
        replicate_values = replicate_curves(
            spec, window, replicates, grid, stream=stream,
            n_test=n_test, correction=correction)[statistic]
    values = np.asarray(replicate_values, dtype=float)
    if values.shape != (replicates, grid.size):
        raise GridMismatchError(
            f"replicate values have shape {values.shape}, "
            f"expected {(replicates, grid.size)}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        lower = np.nanmin(values, axis=0)
        upper = np.nanmax(values, axis=0)
    return EnvelopeBand(grid=grid, lower=lower, upper=upper, kind=statistic,
                        mode="pointwise", replicates=replicates,
                        significance=2.0 / (replicates + 1),
                        meta=model_to_dict(spec))


def global_envelope(spec: ModelSpec, window: Window, statistic: str,
                    replicates: int = RECOMMENDED_REPLICATES, *,
                    grid: RadiusGrid | None = None, stream=0,
                    n_test: int | None = None, correction: str = "border",
                    replicate_values: np.ndarray | None = None,
                    reference: SummaryCurve | None = None,
                    reference_replicates: int = 200,
                    model_test_points: int = 2000) -> EnvelopeBand:
    """Model curve plus/minus the largest replicate deviation.

    The band is centred on the model curve (closed form where the
    family has one, an independently seeded simulated mean otherwise)
    and has half-width D = max over replicates and radii of the
    absolute deviation; significance 1/(replicates+1).
    """
    _check_m(replicates)
    if grid is None:
        grid = RadiusGrid.default(window)
    base = as_stream(stream)
    if replicate_values is None:
        replicate_values = replicate_curves(
            spec, window, replicates, grid, stream=stream,
            n_test=n_test, correction=correction)[statistic]
    values = np.asarray(replicate_values, dtype=float)
    if values.shape != (replicates, grid.size):
        raise GridMismatchError(
            f"replicate values have shape {values.shape}, "
            f"expected {(replicates, grid.size)}")
    if reference is None:
        reference = theoretical_curve(
            statistic, spec, grid, window=window,
            replicates=reference_replicates,
            stream=base.substream(_REFERENCE_OFFSET),
            n_test=model_test_points)
    elif not reference.grid.matches(grid):
        raise GridMismatchError("reference curve is on a different grid")
    ref = reference.values
    deviations = np.abs(values - ref[None, :])
    if not np.any(np.isfinite(deviations)):
        raise ConfigError("no radius has both replicate and reference "
                          "values; cannot build a global band")
    d_max = float(np.nanmax(deviations))
    return EnvelopeBand(grid=grid, lower=ref - d_max, upper=ref + d_max,
                        kind=statistic, mode="global",
                        replicates=replicates,
                        significance=1.0 / (replicates + 1),
                        reference=ref, meta=model_to_dict(spec))


def verdict(band: EnvelopeBand, empirical: SummaryCurve,
            r_max: float | None = None) -> GofVerdict:
    """Strict containment check of a data curve against a band.

    Radii where the band or the curve is undefined are excluded; the
    curve must lie inside [lower, upper] at every remaining radius.
    ``r_max`` limits the test to small radii, typically the fitted
    contrast range, so the verdict covers the scales the fit claims
    to describe.
    """
    if not band.grid.matches(empirical.grid):
        raise GridMismatchError("band and curve are on different grids")
    if band.kind != empirical.kind:
        raise ConfigError(f"band is for {band.kind}, curve is "
                          f"{empirical.kind}")
    values = empirical.values
    defined = (np.isfinite(band.lower) & np.isfinite(band.upper)
               & np.isfinite(values))
    if r_max is not None:
        defined &= band.grid.r <= r_max
    inside = np.zeros_like(defined)
    inside[defined] = ((values[defined] >= band.lower[defined])
                       & (values[defined] <= band.upper[defined]))
    exits = defined & ~inside
    n_defined = int(defined.sum())
    if exits.any():
        first_exit = float(band.grid.r[int(np.argmax(exits))])
        frac = float(exits.sum() / n_defined)
        return GofVerdict(kind=band.kind, passed=False,
                          first_exit_radius=first_exit,
                          exceedance_fraction=frac, n_defined=n_defined,
                          r_max=r_max)
    return GofVerdict(kind=band.kind, passed=True, first_exit_radius=None,
                      exceedance_fraction=0.0, n_defined=n_defined,
                      r_max=r_max)


def write_band_csv(path, band: EnvelopeBand) -> None:
    """One band as CSV: r, lower, upper, and the model curve when the
    band has one (global mode)."""
    def cell(v):
        return "" if not np.isfinite(v) else repr(float(v))

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["r", "lower", "upper"]
        if band.reference is not None:
            header.append("theoretical")
        writer.writerow(header)
        for i, r in enumerate(band.grid.r):
            row = [repr(float(r)), cell(band.lower[i]), cell(band.upper[i])]
            if band.reference is not None:
                row.append(cell(band.reference[i]))
            writer.writerow(row)
