"""Stationary point-process families and their exact summary curves.

Four families: the homogeneous Poisson process as the no-interaction
baseline, and three repulsive determinantal families (a Cauchy-kernel
and a Gaussian-kernel process, plus the thinned-and-rescaled Ginibre
family indexed by a repulsion strength ``beta``).  Each family exposes
closed-form K everywhere; F, G and J are closed-form for Poisson and
the Ginibre family and Monte-Carlo averages for the other two.

Determinantal families exist only on part of the parameter space: the
kernel's spectrum must stay within [0, 1].  ``validate`` reports the
binding constraint instead of raising, so search code can treat the
boundary as a value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln

from .errors import ConfigError, ExistenceViolation
from .estimators import RadiusGrid, SummaryCurve, estimate_F, estimate_G
from .geom import Window
from .rng import as_stream


@dataclass(frozen=True)
class Poisson:
    """Homogeneous Poisson process with the given intensity (per m^2)."""

    intensity: float

    name = "poisson"


@dataclass(frozen=True)
class CauchyDpp:
    """Determinantal process with kernel
    ``intensity * (1 + |x|^2 / scale^2) ** -(shape + 1)``."""

    intensity: float
    scale: float
    shape: float

    name = "cauchy-dpp"


@dataclass(frozen=True)
class GaussDpp:
    """Determinantal process with kernel
    ``intensity * exp(-|x|^2 / scale^2)``."""

    intensity: float
    scale: float

    name = "gauss-dpp"


@dataclass(frozen=True)
class BetaGinibre:
    """Ginibre process thinned with retention ``beta`` and rescaled to
    keep the intensity; ``beta -> 0`` is Poisson, ``beta = 1`` the full
    Ginibre repulsion."""

    intensity: float
    beta: float

    name = "beta-ginibre"


ModelSpec = Poisson | CauchyDpp | GaussDpp | BetaGinibre

_FAMILIES = {cls.name: cls for cls in (Poisson, CauchyDpp, GaussDpp,
                                       BetaGinibre)}

# Existence boundaries are admissible; the slack absorbs the rounding
# of intensity*pi*scale^2 when the intensity was computed from the
# bound itself.
_EXISTENCE_SLACK = 1e-12


def validate(spec: ModelSpec) -> ExistenceViolation | None:
    """Return the binding existence violation, or None if the spec is
    admissible.  Boundary parameters are admissible."""
    if not spec.intensity > 0:
        return ExistenceViolation("intensity > 0", -spec.intensity)
    if isinstance(spec, Poisson):
        return None
    if isinstance(spec, BetaGinibre):
        if not spec.beta > 0:
            return ExistenceViolation("beta > 0", -spec.beta)
        if spec.beta > 1.0:
            return ExistenceViolation("beta <= 1", spec.beta - 1.0)
        return None
    if not spec.scale > 0:
        return ExistenceViolation("scale > 0", -spec.scale)
    if isinstance(spec, GaussDpp):
        load = spec.intensity * math.pi * spec.scale ** 2
        if load > 1.0 + _EXISTENCE_SLACK:
            return ExistenceViolation(
                "intensity * pi * scale^2 <= 1", load - 1.0)
        return None
    if isinstance(spec, CauchyDpp):
        if not spec.shape > 0:
            return ExistenceViolation("shape > 0", -spec.shape)
        load = spec.intensity * math.pi * spec.scale ** 2 / spec.shape
        if load > 1.0 + _EXISTENCE_SLACK:
            return ExistenceViolation(
                "intensity * pi * scale^2 / shape <= 1", load - 1.0)
        return None
    raise TypeError(f"not a model spec: {spec!r}")


def check_valid(spec: ModelSpec) -> None:
    violation = validate(spec)
    if violation is not None:
        raise violation


def model_to_dict(spec: ModelSpec) -> dict:
    params = {"intensity": spec.intensity}
    if isinstance(spec, BetaGinibre):
        params["beta"] = spec.beta
    elif isinstance(spec, GaussDpp):
        params["scale"] = spec.scale
    elif isinstance(spec, CauchyDpp):
        params["scale"] = spec.scale
        params["shape"] = spec.shape
    return {"model": spec.name, "params": params}


def model_from_dict(d: dict) -> ModelSpec:
    try:
        cls = _FAMILIES[d["model"]]
        return cls(**d["params"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad model description: {d!r}") from exc


def normalized_lower_incomplete_gamma(k: int, x):
    """Regularized lower incomplete gamma at integer shape ``k``.

    Equals ``1 - exp(-x) * sum_{j<k} x^j / j!``, the probability that a
    Poisson(x) count reaches ``k``.  Vectorized over ``x``.
    """
    if k != int(k) or k < 1:
        raise ValueError("k must be a positive integer")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 0):
        raise ValueError("x must be non-negative")
    out = gammainc(int(k), x_arr)
    return float(out) if np.isscalar(x) else out


# ---------------------------------------------------------------------------
# Ginibre-family products
# ---------------------------------------------------------------------------

def _bg_term_count(x: float) -> int:
    # smallest k with beta * P(k, x) below 1e-14, by a Poisson tail
    # bound; the 10*ceil(x) + 200 cap is a guard that never binds
    bound = int(math.ceil(x + 12.0 * math.sqrt(x + 1.0) + 30.0))
    return min(bound, 10 * int(math.ceil(x)) + 200)


def _bg_log_factors(x: float, beta: float, k_hi: int) -> np.ndarray:
    """log(1 - beta * P(k, x)) for k = 1..k_hi.

    Works through the complement Q(k, x) = exp(-x) * sum_{j<k} x^j/j!,
    accumulated from log-space terms so that large x stays accurate.
    """
    js = np.arange(k_hi, dtype=float)
    log_t = js * math.log(x) - x - gammaln(js + 1.0)
    q = np.minimum(np.cumsum(np.exp(log_t)), 1.0)
    with np.errstate(divide="ignore"):
        return np.log((1.0 - beta) + beta * q)


def _bg_survival(x: float, beta: float, first_k: int,
                 k_terms: int | None = None) -> float:
    """prod_{k >= first_k} (1 - beta * P(k, x)) for scalar x >= 0."""
    if x == 0.0:
        return 1.0
    k_hi = _bg_term_count(x) if k_terms is None else int(k_terms)
    k_hi = max(k_hi, first_k)
    total = _bg_log_factors(x, beta, k_hi)[first_k - 1:].sum()
    return float(np.exp(total))


# ---------------------------------------------------------------------------
# Exact curves
# ---------------------------------------------------------------------------

def theoretical_K(spec: ModelSpec, grid: RadiusGrid) -> SummaryCurve:
    """Closed-form K curve of the family on the given grid."""
    check_valid(spec)
    r = grid.r
    base = np.pi * r * r
    if isinstance(spec, Poisson):
        values = base
    elif isinstance(spec, GaussDpp):
        a2 = spec.scale ** 2
        values = base - (np.pi * a2 / 2.0) * (1.0 - np.exp(-2.0 * r * r / a2))
    elif isinstance(spec, CauchyDpp):
        a2 = spec.scale ** 2
        e = 2.0 * spec.shape + 1.0
        values = base - (np.pi * a2 / e) * (1.0 - (1.0 + r * r / a2) ** -e)
    else:
        lam, beta = spec.intensity, spec.beta
        values = base - (beta / lam) * (1.0 - np.exp(-lam * np.pi * r * r
                                                     / beta))
    return SummaryCurve(grid=grid, values=values, kind="K",
                        origin="theoretical", meta=model_to_dict(spec))


def _simulated_mean_curves(spec: ModelSpec, window: Window, grid: RadiusGrid,
                           replicates: int, stream, n_test: int,
                           correction: str = "border") -> dict:
    """Monte-Carlo mean F and G of a family, border-corrected like the
    empirical curves they will be compared against."""
    from .samplers import sample  # runtime import, samplers builds on us

    if replicates < 10:
        raise ConfigError(f"simulated model curves need at least 10 "
                          f"replicates, got {replicates}")
    base = as_stream(stream)
    sums = {"F": np.zeros(grid.size), "G": np.zeros(grid.size)}
    counts = {"F": np.zeros(grid.size), "G": np.zeros(grid.size)}
    used = 0
    for i in range(int(replicates)):
        pattern = sample(spec, window, base.substream(2 * i))
        if pattern.n < 2:
            continue
        used += 1
        f = estimate_F(pattern, grid, n_test=n_test,
                       seed=base.substream(2 * i + 1),
                       correction=correction)
        g = estimate_G(pattern, grid, correction=correction)
        for kind, curve in (("F", f), ("G", g)):
            ok = np.isfinite(curve.values)
            sums[kind][ok] += curve.values[ok]
            counts[kind][ok] += 1.0
    if used == 0:
        raise ConfigError("all simulated replicates were degenerate; "
                          "window too small for this intensity")
    out = {}
    with np.errstate(invalid="ignore", divide="ignore"):
        for kind in ("F", "G"):
            out[kind] = np.where(counts[kind] > 0,
                                 sums[kind] / counts[kind], np.nan)
    out["replicates_used"] = used
    return out


def _needs_simulation(spec: ModelSpec) -> bool:
    return isinstance(spec, (GaussDpp, CauchyDpp))


def theoretical_F(spec: ModelSpec, grid: RadiusGrid,
                  window: Window | None = None, replicates: int = 200,
                  stream=0, n_test: int = 2000,
                  k_terms: int | None = None) -> SummaryCurve:
    """Model F curve: exact where the family admits it, otherwise the
    mean empirical F over ``replicates`` simulated realizations on
    ``window`` (required in that case)."""
    check_valid(spec)
    r = grid.r
    if isinstance(spec, Poisson):
        values = 1.0 - np.exp(-spec.intensity * np.pi * r * r)
        origin = "theoretical"
    elif isinstance(spec, BetaGinibre):
        x = spec.intensity * np.pi * r * r / spec.beta
        values = np.array([1.0 - _bg_survival(xi, spec.beta, 1, k_terms)
                           for xi in x])
        origin = "theoretical"
    else:
        if window is None:
            raise ConfigError(f"{spec.name} has no closed-form F; "
                              f"a window is required to simulate it")
        sim = _simulated_mean_curves(spec, window, grid, replicates, stream,
                                     n_test)
        values, origin = sim["F"], "simulated"
    return SummaryCurve(grid=grid, values=values, kind="F", origin=origin,
                        meta=model_to_dict(spec))


def theoretical_G(spec: ModelSpec, grid: RadiusGrid,
                  window: Window | None = None, replicates: int = 200,
                  stream=0, n_test: int = 2000,
                  k_terms: int | None = None) -> SummaryCurve:
    """Model G curve; see :func:`theoretical_F`."""
    check_valid(spec)
    r = grid.r
    if isinstance(spec, Poisson):
        values = 1.0 - np.exp(-spec.intensity * np.pi * r * r)
        origin = "theoretical"
    elif isinstance(spec, BetaGinibre):
        x = spec.intensity * np.pi * r * r / spec.beta
        values = np.array([1.0 - _bg_survival(xi, spec.beta, 2, k_terms)
                           for xi in x])
        origin = "theoretical"
    else:
        if window is None:
            raise ConfigError(f"{spec.name} has no closed-form G; "
                              f"a window is required to simulate it")
        sim = _simulated_mean_curves(spec, window, grid, replicates, stream,
                                     n_test)
        values, origin = sim["G"], "simulated"
    return SummaryCurve(grid=grid, values=values, kind="G", origin=origin,
                        meta=model_to_dict(spec))


def theoretical_J(spec: ModelSpec, grid: RadiusGrid,
                  window: Window | None = None, replicates: int = 200,
                  stream=0, n_test: int = 2000,
                  f_saturation: float = 1e-6) -> SummaryCurve:
    """Model J curve.

    Poisson is identically 1; the Ginibre family has the closed form
    ``1 / (1 - beta + beta * exp(-intensity*pi*r^2/beta))``; the other
    determinantal families use the ratio of simulated mean curves.
    """
    check_valid(spec)
    r = grid.r
    if isinstance(spec, Poisson):
        values = np.ones_like(r)
        origin = "theoretical"
    elif isinstance(spec, BetaGinibre):
        x = spec.intensity * np.pi * r * r / spec.beta
        values = 1.0 / ((1.0 - spec.beta) + spec.beta * np.exp(-x))
        origin = "theoretical"
    else:
        if window is None:
            raise ConfigError(f"{spec.name} has no closed-form J; "
                              f"a window is required to simulate it")
        sim = _simulated_mean_curves(spec, window, grid, replicates, stream,
                                     n_test)
        f, g = sim["F"], sim["G"]
        with np.errstate(invalid="ignore", divide="ignore"):
            values = np.where(f < 1.0 - f_saturation, (1.0 - g) / (1.0 - f),
                              np.nan)
        origin = "simulated"
    return SummaryCurve(grid=grid, values=values, kind="J", origin=origin,
                        meta=model_to_dict(spec))


def theoretical_curve(kind: str, spec: ModelSpec, grid: RadiusGrid,
                      **kwargs) -> SummaryCurve:
    """Dispatch on the statistic kind."""
    fn = {"K": theoretical_K, "F": theoretical_F, "G": theoretical_G,
          "J": theoretical_J}[kind]
    if kind == "K":
        return fn(spec, grid)
    return fn(spec, grid, **kwargs)


# ---------------------------------------------------------------------------
# Kernel determinants
# ---------------------------------------------------------------------------

def dpp_determinant_check(spec: ModelSpec, points) -> float:
    """Joint correlation density of a small configuration: the
    determinant of the kernel Gram matrix.

    Intended for hand-checkable sizes (n <= 6).  Must be non-negative
    and vanish when two points coincide; useful as an independent probe
    of the kernel against the closed-form curves.
    """
    check_valid(spec)
    if isinstance(spec, Poisson):
        raise ConfigError("the Poisson family has no repulsion kernel; "
                          "determinant check applies to determinantal "
                          "families")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if not 1 <= n <= 6:
        raise ValueError("determinant check is meant for 1 <= n <= 6 points")

    if isinstance(spec, BetaGinibre):
        z = pts[:, 0] + 1j * pts[:, 1]
        c = spec.intensity * np.pi / spec.beta
        sq = np.abs(z) ** 2
        gram = (spec.intensity
                * np.exp(-0.5 * c * (sq[:, None] + sq[None, :]))
                * np.exp(c * z[:, None] * np.conj(z)[None, :]))
        det = np.linalg.det(gram)
        return float(det.real)

    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1)
    if isinstance(spec, GaussDpp):
        gram = spec.intensity * np.exp(-d2 / spec.scale ** 2)
    else:
        gram = spec.intensity * (1.0 + d2 / spec.scale ** 2) ** -(spec.shape
                                                                  + 1.0)
    return float(np.linalg.det(gram))
