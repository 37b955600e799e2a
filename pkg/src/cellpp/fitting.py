"""Minimum-contrast fitting of process families to empirical curves.

The fitted distance between an empirical summary curve and a model
curve is an L^q-type discrepancy of the p-th powers over a radius
range.  The shape parameter of a family is found by a derivative-free
bounded search; the intensity is never searched, it is pinned to the
usual count-per-area estimate so the contrast has no flat direction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import (
    ConfigError,
    ConvergenceError,
    InsufficientDataError,
    InsufficientRangeError,
)
from .estimators import (
    CURVE_KINDS,
    SMALL_PATTERN_WARN,
    RadiusGrid,
    SummaryCurve,
    estimate_F,
    estimate_G,
    estimate_J,
    estimate_K,
    require_same_grid,
)
from .geom import PointPattern, Rectangle, Window, intensity_estimate
from .models import (
    BetaGinibre,
    CauchyDpp,
    GaussDpp,
    ModelSpec,
    Poisson,
    _needs_simulation,
    _simulated_mean_curves,
    check_valid,
    model_to_dict,
    theoretical_curve,
)
from .rng import as_stream
from .samplers import spectral_mode_count

FAMILY_NAMES = ("poisson", "beta-ginibre", "gauss-dpp", "cauchy-dpp")

# Upper fit radius defaults to this share of the shorter window side;
# beyond that the border-corrected estimators get noisy.
DEFAULT_RANGE_FRACTION = 1060.0 / 13000.0

# Shape-parameter search boxes.  The lower ends are the near-Poisson
# limits; the upper ends are the existence bounds (resolved per fit).
BETA_SEARCH_MIN = 0.01
SCALE_FRACTION_MIN = 1e-3
CAUCHY_SHAPE_BOUNDS = (0.05, 50.0)

# Spectral mode counts grow like (window extent / kernel scale)^2, so
# on large windows the near-Poisson end of the scale box is not
# simulatable.  The search is clipped to scales the sampler can afford
# under this budget (kept below the sampler default so the fitted
# model stays affordable for later envelope replicates); below the
# clip the model is within Monte-Carlo noise of Poisson anyway.
FIT_MODE_BUDGET = 1_500_000

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def _scale_floor(make, lo: float, hi: float, window: Rectangle) -> float:
    """Smallest kernel scale in [lo, hi] affordable under the sampler
    mode budget on this window; returns lo unchanged when lo already
    fits."""
    if spectral_mode_count(make(lo), window) <= FIT_MODE_BUDGET:
        return lo
    if spectral_mode_count(make(hi), window) > FIT_MODE_BUDGET:
        raise ConfigError(
            "window too large for the spectral families: even the "
            "existence-bound scale exceeds the sampler mode budget")
    a, b = lo, hi
    while b / a > 1.0001:
        mid = math.sqrt(a * b)
        if spectral_mode_count(make(mid), window) > FIT_MODE_BUDGET:
            a = mid
        else:
            b = mid
    return b


# ---------------------------------------------------------------------------
# Contrast
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContrastSpec:
    """How to measure the distance between two summary curves.

    ``step_weighted=True`` multiplies each grid term by the local grid
    step so the sum approximates the integral of |S1^p - S2^p|^q over
    [r_min, r_max] divided by the range; the raw index-sum variant
    (``step_weighted=False``) divides the plain sum by the range and is
    grid-resolution dependent.
    """

    statistic: str = "F"
    p: float = 1.0
    q: float = 2.0
    r_min: float = 0.0
    r_max: float | None = None
    step_weighted: bool = True

    def __post_init__(self):
        if self.statistic not in CURVE_KINDS:
            raise ConfigError(f"statistic must be one of {CURVE_KINDS}, "
                              f"got {self.statistic!r}")
        if not (self.p > 0.0 and self.q > 0.0):
            raise ConfigError("contrast exponents must be positive")
        if self.r_min < 0.0:
            raise ConfigError("r_min must be >= 0")
        if self.r_max is not None and not self.r_max > self.r_min:
            raise ConfigError("r_max must exceed r_min")

    def resolved(self, grid: RadiusGrid,
                 window: Window | None = None) -> "ContrastSpec":
        """Fill in r_max: the default is a fixed fraction of the window
        extent, clipped to the grid; without a window, the grid end."""
        grid_max = float(grid.r[-1])
        if self.r_max is None:
            r_max = grid_max
            if window is not None:
                r_max = min(window.min_extent() * DEFAULT_RANGE_FRACTION,
                            grid_max)
        else:
            r_max = min(self.r_max, grid_max)
        if not r_max > self.r_min:
            raise ConfigError(f"empty fit range [{self.r_min}, {r_max}]")
        return replace(self, r_max=r_max)

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p": self.p, "q": self.q,
                "r_min": self.r_min, "r_max": self.r_max,
                "step_weighted": self.step_weighted}


def contrast(empirical: SummaryCurve, model_curve: SummaryCurve,
             cspec: ContrastSpec) -> float:
    """Discrepancy between two curves under ``cspec``.

    Radii where either curve is NaN are dropped pairwise; fewer than 10
    usable radii in the range is an error, not a quiet small sum.
    """
    grid = require_same_grid(empirical, model_curve)
    if empirical.kind != model_curve.kind:
        raise ConfigError(f"curve kinds differ: {empirical.kind} "
                          f"vs {model_curve.kind}")
    if empirical.kind != cspec.statistic:
        raise ConfigError(f"curves are {empirical.kind} but the contrast "
                          f"wants {cspec.statistic}")
    spec = cspec if cspec.r_max is not None else cspec.resolved(grid)
    r = grid.r
    usable = ((r >= spec.r_min) & (r <= spec.r_max)
              & np.isfinite(empirical.values)
              & np.isfinite(model_curve.values))
    if usable.sum() < 10:
        raise InsufficientRangeError(
            f"only {int(usable.sum())} usable radii in "
            f"[{spec.r_min}, {spec.r_max}]; need at least 10")
    a = empirical.values[usable] ** spec.p
    b = model_curve.values[usable] ** spec.p
    terms = np.abs(a - b) ** spec.q
    span = spec.r_max - spec.r_min
    if spec.step_weighted:
        terms = terms * grid.spacing()[usable]
    return float(terms.sum() / span)


# ---------------------------------------------------------------------------
# Empirical curve bundle
# ---------------------------------------------------------------------------

def empirical_curves(pattern: PointPattern, grid: RadiusGrid | None = None,
                     seed=0, n_test: int | None = None,
                     correction: str = "border") -> dict:
    """All four empirical statistics of one pattern on a shared grid."""
    if grid is None:
        grid = RadiusGrid.default(pattern.window)
    k = estimate_K(pattern, grid, correction=correction)
    f = estimate_F(pattern, grid, n_test=n_test, seed=seed,
                   correction=correction)
    g = estimate_G(pattern, grid, correction=correction)
    j = estimate_J(f, g)
    return {"K": k, "F": f, "G": g, "J": j}


def _model_curves(spec: ModelSpec, grid: RadiusGrid, kinds,
                  window: Window | None, replicates: int, stream,
                  n_test: int) -> dict:
    """Model curves for the requested kinds, sharing one simulation
    pass when the family has no closed forms."""
    out = {}
    want_sim = _needs_simulation(spec) and any(k != "K" for k in kinds)
    sim = None
    if want_sim:
        if window is None:
            raise ConfigError(f"{spec.name} needs a window to simulate "
                              f"its F/G/J curves")
        sim = _simulated_mean_curves(spec, window, grid,
                                     replicates, stream, n_test)
    for kind in kinds:
        if kind == "K" or not _needs_simulation(spec):
            out[kind] = theoretical_curve(kind, spec, grid)
            continue
        if kind == "F":
            values = sim["F"]
        elif kind == "G":
            values = sim["G"]
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                values = np.where(sim["F"] < 1.0 - 1e-6,
                                  (1.0 - sim["G"]) / (1.0 - sim["F"]),
                                  np.nan)
        out[kind] = SummaryCurve(grid=grid, values=values, kind=kind,
                                 origin="simulated",
                                 meta=model_to_dict(spec))
    return out


# ---------------------------------------------------------------------------
# Fit result
# ---------------------------------------------------------------------------

@dataclass
class FitResult:
    """Fitted model with its contrast value and cross-statistic
    distances evaluated at the optimum."""

    model: ModelSpec
    contrast_value: float
    cross_distances: dict
    cspec: ContrastSpec
    diagnostics: dict = field(default_factory=dict)
    # Model curves at the optimum, kept for plotting and envelope
    # references; not part of the serialized result.
    model_curves: dict | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        def _num(v):
            v = float(v)
            return v if math.isfinite(v) else None

        return {
            **model_to_dict(self.model),
            "contrast": self.cspec.to_dict(),
            "contrast_value": _num(self.contrast_value),
            "distances": {k: _num(v)
                          for k, v in sorted(self.cross_distances.items())},
            "diagnostics": {k: self.diagnostics[k]
                            for k in sorted(self.diagnostics)},
        }


# ---------------------------------------------------------------------------
# Scalar search
# ---------------------------------------------------------------------------

def _golden_minimize(fn, lo: float, hi: float, rel_tol: float,
                     budget: int, scan: int = 17):
    """Coarse scan, then golden-section inside the best bracket.

    Deterministic; returns (x, fx, evaluations, converged, trace) with
    the best point seen anywhere, which beats the final bracket centre
    when the objective is noisy.
    """
    trace = []

    def ev(x):
        v = float(fn(x))
        trace.append((float(x), v))
        return v

    xs = np.linspace(lo, hi, scan)
    fs = [ev(x) for x in xs]
    i = int(np.argmin(fs))
    a = float(xs[max(i - 1, 0)])
    b = float(xs[min(i + 1, scan - 1)])
    tol = rel_tol * max(abs(lo), abs(hi))

    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = ev(c), ev(d)
    while (b - a) > tol and len(trace) < budget:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = ev(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = ev(d)
    converged = (b - a) <= tol
    xb, fb = min(trace, key=lambda t: t[1])
    return xb, fb, len(trace), converged, trace


# ---------------------------------------------------------------------------
# Fit
# ---------------------------------------------------------------------------

def fit(pattern: PointPattern, family: str,
        cspec: ContrastSpec | None = None, *,
        curves: dict | None = None, grid: RadiusGrid | None = None,
        stream=0, replicates: int = 200, model_test_points: int = 2000,
        max_evaluations: int = 500, rel_tol: float = 1e-6,
        estimator_seed=0) -> FitResult:
    """Fit one family to a pattern by minimum contrast.

    Parameters
    ----------
    pattern : PointPattern
    family : str
        One of ``poisson``, ``beta-ginibre``, ``gauss-dpp``,
        ``cauchy-dpp``.
    cspec : ContrastSpec, optional
        Statistic and exponents; the default fits F with p=1, q=2 over
        the default range.
    curves : dict, optional
        Precomputed empirical curves keyed by kind (all four); computed
        here when omitted.
    stream : seed or RngStreamSpec
        Drives the model-curve simulations of the Gauss/Cauchy
        families.  Frozen across candidate parameters so the objective
        is a deterministic function of the parameter.
    replicates, model_test_points : int
        Monte-Carlo effort for simulated model curves.

    Notes
    -----
    The intensity is fixed to the empirical estimate, never searched.
    ``diagnostics["near_poisson"]`` flags fits that do not improve on
    the Poisson baseline by more than 5% or that pin the shape
    parameter at its near-Poisson bound: such data cannot support a
    repulsion claim.
    """
    if family not in FAMILY_NAMES:
        raise ConfigError(f"unknown family {family!r}; "
                          f"choose from {FAMILY_NAMES}")
    if pattern.n < 20:
        raise InsufficientDataError(
            f"{pattern.n} points; fitting needs at least 20")
    if pattern.n < SMALL_PATTERN_WARN:
        warnings.warn(f"fitting on {pattern.n} points; below "
                      f"{SMALL_PATTERN_WARN} the fitted parameters are "
                      f"unstable", stacklevel=2)
    lam = intensity_estimate(pattern).value
    window = pattern.window

    if curves is None:
        curves = empirical_curves(pattern, grid, seed=estimator_seed)
    emp_grid = require_same_grid(*curves.values())
    if grid is not None and not grid.matches(emp_grid):
        raise ConfigError("grid argument disagrees with supplied curves")
    spec = (cspec or ContrastSpec()).resolved(emp_grid, window)
    emp = curves[spec.statistic]

    base_stream = as_stream(stream)
    sim_kwargs = dict(window=window, replicates=replicates,
                      stream=base_stream, n_test=model_test_points)

    def objective_for(model: ModelSpec) -> float:
        mc = _model_curves(model, emp_grid, (spec.statistic,),
                           **sim_kwargs)[spec.statistic]
        return contrast(emp, mc, spec)

    poisson_value = objective_for(Poisson(lam))
    pinned_low = False

    if family == "poisson":
        model = Poisson(lam)
        value = poisson_value
        evaluations, converged, trace = 1, True, [(None, value)]
    elif family == "beta-ginibre":
        def obj(beta):
            return objective_for(BetaGinibre(intensity=lam, beta=beta))

        beta, value, evaluations, converged, trace = _golden_minimize(
            obj, BETA_SEARCH_MIN, 1.0, rel_tol, max_evaluations)
        model = BetaGinibre(intensity=lam, beta=beta)
        pinned_low = beta <= BETA_SEARCH_MIN * (1.0 + 10.0 * rel_tol)
    elif family == "gauss-dpp":
        scale_max = 1.0 / math.sqrt(math.pi * lam)

        def obj(scale):
            return objective_for(GaussDpp(intensity=lam, scale=scale))

        lo = SCALE_FRACTION_MIN * scale_max
        if isinstance(window, Rectangle):
            lo = _scale_floor(lambda s: GaussDpp(intensity=lam, scale=s),
                              lo, scale_max, window)
        scale, value, evaluations, converged, trace = _golden_minimize(
            obj, lo, scale_max, rel_tol, max_evaluations)
        model = GaussDpp(intensity=lam, scale=scale)
        pinned_low = scale <= lo * (1.0 + 10.0 * rel_tol)
    else:
        # Cauchy: search (scale fraction of the existence bound,
        # log shape); the box maps onto the admissible wedge.
        lo_w, hi_w = (math.log(CAUCHY_SHAPE_BOUNDS[0]),
                      math.log(CAUCHY_SHAPE_BOUNDS[1]))

        def unpack(x):
            u = float(x[0])
            shape = math.exp(float(x[1]))
            bound = math.sqrt(shape / (math.pi * lam))
            scale = u * bound
            if isinstance(window, Rectangle):
                scale = _scale_floor(
                    lambda s: CauchyDpp(intensity=lam, scale=s, shape=shape),
                    scale, bound, window)
            return CauchyDpp(intensity=lam, scale=scale, shape=shape)

        trace = []

        def obj(x):
            v = objective_for(unpack(x))
            trace.append(((float(x[0]), float(x[1])), v))
            return v

        x0 = np.array([0.5, 0.0])
        f0 = obj(x0)
        res = optimize.minimize(
            obj, x0, method="Nelder-Mead",
            bounds=[(SCALE_FRACTION_MIN, 1.0), (lo_w, hi_w)],
            options={"xatol": rel_tol, "fatol": 1e-10 * (1.0 + abs(f0)),
                     "maxfev": max_evaluations,
                     "initial_simplex": np.array(
                         [[0.5, 0.0], [0.8, 0.0], [0.5, 1.0]])})
        model = unpack(res.x)
        value = float(res.fun)
        evaluations = int(res.nfev) + 1
        # The parameter tolerance is what matters; the function-value
        # tolerance can stay unmet on flat objectives.
        simplex = res.final_simplex[0]
        x_spread = float(np.max(np.abs(simplex - simplex[0])))
        converged = bool(res.success) or x_spread <= 10.0 * rel_tol
        raw_scale = (float(res.x[0])
                     * math.sqrt(math.exp(float(res.x[1])) / (math.pi * lam)))
        pinned_low = (res.x[0] <= SCALE_FRACTION_MIN * (1.0 + 10.0 * rel_tol)
                      or model.scale > raw_scale * (1.0 + 1e-9))

    if not converged:
        raise ConvergenceError(
            f"{family} fit did not reach tolerance in {evaluations} "
            f"evaluations", trace=trace[-20:])
    check_valid(model)

    near_poisson = (isinstance(model, Poisson) or pinned_low
                    or value >= 0.95 * poisson_value)

    model_all = _model_curves(model, emp_grid, CURVE_KINDS, **sim_kwargs)
    cross = {}
    for kind in CURVE_KINDS:
        try:
            cross[kind] = contrast(curves[kind], model_all[kind],
                                   replace(spec, statistic=kind))
        except InsufficientRangeError:
            cross[kind] = float("nan")

    diagnostics = {
        "evaluations": int(evaluations),
        "converged": bool(converged),
        "near_poisson": bool(near_poisson),
        "pinned_lower_bound": bool(pinned_low),
        "poisson_contrast": float(poisson_value),
        "n_points": int(pattern.n),
        "intensity": float(lam),
    }
    return FitResult(model=model, contrast_value=float(value),
                     cross_distances=cross, cspec=spec,
                     diagnostics=diagnostics, model_curves=model_all)
