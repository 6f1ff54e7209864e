"""Semi-variogram estimation, parametric families, fitting, and selection.

Four bounded families are supported, each parametrized by a nugget C0, a
range a, and a partial sill b, with the sill C0 + b reached (or approached)
as distance grows.  gamma(0) is 0 by convention for every family, including
models with a nonzero nugget: the metamodel honors measured values exactly
and the nugget only widens predictions away from data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigurationError, InsufficientDataError
from .grid import GridSpec, ensure_unique_locations, scaled_coords

BOUNDED_LINEAR = "bounded_linear"
SPHERICAL = "spherical"
EXPONENTIAL = "exponential"
GAUSSIAN = "gaussian"

# Also the tie-break order for model selection.
FAMILIES = (BOUNDED_LINEAR, SPHERICAL, EXPONENTIAL, GAUSSIAN)

FLAG_DEGENERATE = "degenerate"
FLAG_LOW_INFORMATION = "low_information"

# Parameter-space tolerance for the range refinement.
FIT_TOL = 1e-8


def _shape(family: str, h: np.ndarray, a: float) -> np.ndarray:
    """Unit shape in [0, 1]: the family curve with nugget 0 and partial sill 1."""
    if family == BOUNDED_LINEAR:
        return np.minimum(h / a, 1.0)
    if family == SPHERICAL:
        t = np.minimum(h / a, 1.0)
        return 1.5 * t - 0.5 * t**3
    if family == EXPONENTIAL:
        return 1.0 - np.exp(-h / a)
    if family == GAUSSIAN:
        return 1.0 - np.exp(-((h / a) ** 2))
    raise ConfigurationError(f"unknown variogram family {family!r}")


@dataclass(frozen=True)
class VariogramModel:
    """A fitted (or hand-built) semi-variogram.

    nugget, range, sill (the partial sill) are the usual geostatistics
    parameters.  fit_mse is the unweighted mean squared error against the
    empirical bins the model was fitted to (0.0 when hand-built).  flag marks
    fallback fits: FLAG_DEGENERATE for an all-zero empirical variogram,
    FLAG_LOW_INFORMATION for fits from fewer than 3 bins.
    """

    family: str
    nugget: float
    range: float
    sill: float
    fit_mse: float = 0.0
    flag: str | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown variogram family {self.family!r}")
        if not all(math.isfinite(v) for v in (self.nugget, self.range, self.sill)):
            raise ConfigurationError("variogram parameters must be finite")
        if self.nugget < 0 or self.sill < 0 or self.range <= 0:
            raise ConfigurationError(
                f"invalid variogram parameters: nugget={self.nugget}, range={self.range}, sill={self.sill}"
            )

    @property
    def is_degenerate(self) -> bool:
        return self.nugget == 0.0 and self.sill == 0.0

    def __call__(self, h):
        return eval_model(self, h)


def eval_model(model: VariogramModel, h):
    """Semi-variance at scaled distance h (scalar or array).

    Exactly 0 at h = 0; at any h > 0 the value is in [nugget, nugget + sill].
    """
    arr = np.asarray(h, dtype=float)
    if np.any(arr < 0):
        raise ConfigurationError("distances must be nonnegative")
    out = model.nugget + model.sill * _shape(model.family, arr, model.range)
    out = np.where(arr > 0, out, 0.0)
    if np.isscalar(h) or arr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class VariogramBin:
    h_center: float
    gamma_hat: float
    pair_count: int


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Binned method-of-moments estimate plus the summary statistics the
    low-information fallback fit needs (see fit_model)."""

    bins: tuple[VariogramBin, ...]
    response_variance: float
    max_distance: float

    @property
    def n_bins(self) -> int:
        return len(self.bins)

    def h_centers(self) -> np.ndarray:
        return np.array([b.h_center for b in self.bins], dtype=float)

    def gammas(self) -> np.ndarray:
        return np.array([b.gamma_hat for b in self.bins], dtype=float)

    def counts(self) -> np.ndarray:
        return np.array([b.pair_count for b in self.bins], dtype=float)


def empirical_variogram(
    measurements,
    spec: GridSpec,
    bin_width: float | None = None,
    max_lag: float | None = None,
) -> EmpiricalVariogram:
    """Method-of-moments estimate over fixed-width distance bins.

    Each pair lands in the bin whose center (an integer multiple of
    bin_width) is nearest to its scaled distance; a bin's reported h_center
    is the mean of its pair distances.  Bins with no pairs are dropped, as
    are bins centered beyond max_lag, where the estimator has too few pairs
    to be trusted.  Defaults: bin_width is the grid's nearest-neighbor
    spacing, max_lag is half the scaled domain diameter.
    """
    measurements = list(measurements)
    if len(measurements) < 2:
        raise InsufficientDataError("empirical variogram needs at least 2 measurements")
    ensure_unique_locations(measurements)
    if bin_width is None:
        bin_width = spec.nearest_neighbor_spacing()
    if bin_width <= 0 or not math.isfinite(bin_width):
        raise ConfigurationError(f"bin_width must be positive, got {bin_width}")
    if max_lag is None:
        max_lag = 0.5 * spec.scaled_diameter()
    if max_lag < 0 or not math.isfinite(max_lag):
        raise ConfigurationError(f"max_lag must be nonnegative and finite, got {max_lag}")

    pts = scaled_coords([m.location for m in measurements], spec)
    y = np.array([m.response for m in measurements], dtype=float)
    d = pdist(pts)
    n = len(measurements)
    iu, ju = np.triu_indices(n, k=1)
    sq = (y[iu] - y[ju]) ** 2

    idx = np.round(d / bin_width).astype(int)
    bins = []
    for b in np.unique(idx):
        mask = idx == b
        h_c = float(d[mask].mean())
        if h_c > max_lag:
            continue
        count = int(mask.sum())
        gamma = float(sq[mask].sum() / (2.0 * count))
        bins.append(VariogramBin(h_c, gamma, count))

    return EmpiricalVariogram(
        bins=tuple(bins),
        response_variance=float(np.var(y, ddof=1)),
        max_distance=float(d.max()),
    )


def _profiled_linear(family, a, h, gam, wts):
    """Weighted least squares for (nugget, sill) at fixed range.

    The model is linear in (C0, b) once a is fixed, so the inner problem has
    a closed form; the nonnegativity constraints reduce to checking the two
    boundary cases when the unconstrained optimum is infeasible.
    """
    phi = _shape(family, h, a)
    s1 = wts.sum()
    sp = (wts * phi).sum()
    spp = (wts * phi * phi).sum()
    sy = (wts * gam).sum()
    spy = (wts * phi * gam).sum()

    def objective(c0, b):
        r = c0 + b * phi - gam
        return float((wts * r * r).sum())

    det = s1 * spp - sp * sp
    if det > 1e-12 * max(s1 * spp, 1e-300):
        c0 = (spp * sy - sp * spy) / det
        b = (s1 * spy - sp * sy) / det
        if c0 >= 0 and b >= 0:
            return c0, b, objective(c0, b)
    # Clamped candidates: nugget-free fit and flat (pure-nugget) fit.
    cands = []
    if spp > 0:
        b_only = max(spy / spp, 0.0)
        cands.append((0.0, b_only, objective(0.0, b_only)))
    c0_only = max(sy / s1, 0.0)
    cands.append((c0_only, 0.0, objective(c0_only, 0.0)))
    return min(cands, key=lambda t: t[2])


def _fallback_model(empirical: EmpiricalVariogram) -> VariogramModel:
    """Low-information fit used when fewer than 3 bins are available."""
    a = max(empirical.max_distance / 2.0, float(np.finfo(float).tiny))
    model = VariogramModel(
        family=SPHERICAL,
        nugget=0.0,
        range=float(a),
        sill=float(max(empirical.response_variance, 0.0)),
        fit_mse=0.0,
        flag=FLAG_LOW_INFORMATION,
    )
    return _with_mse(model, empirical)


def _with_mse(model: VariogramModel, empirical: EmpiricalVariogram) -> VariogramModel:
    if empirical.n_bins == 0:
        return model
    h = empirical.h_centers()
    resid = eval_model(model, h) - empirical.gammas()
    return VariogramModel(
        family=model.family,
        nugget=model.nugget,
        range=model.range,
        sill=model.sill,
        fit_mse=float(np.mean(resid**2)),
        flag=model.flag,
    )


def fit_model(empirical: EmpiricalVariogram, family: str) -> VariogramModel:
    """Fit one family to the empirical variogram.

    Minimizes the pair-count-weighted MSE over (C0, a, b) with C0 >= 0,
    b >= 0, and a within [smallest bin distance, 2 x largest bin distance].
    The search is a coarse grid over a with exact profiling of (C0, b) at
    each trial range, refined by golden-section down to FIT_TOL; that keeps
    the fit robust on the ragged empirical variograms sparse designs give.
    fit_mse on the result is the unweighted MSE used for model selection.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown variogram family {family!r}")
    if empirical.n_bins < 3:
        return _fallback_model(empirical)

    h = empirical.h_centers()
    gam = empirical.gammas()
    wts = empirical.counts()
    wts = wts / wts.sum()

    if np.all(gam == 0.0):
        model = VariogramModel(
            family=family,
            nugget=0.0,
            range=empirical.max_distance,
            sill=0.0,
            fit_mse=0.0,
            flag=FLAG_DEGENERATE,
        )
        return _with_mse(model, empirical)

    a_lo, a_hi = float(h.min()), 2.0 * float(h.max())

    def profiled_obj(a):
        return _profiled_linear(family, a, h, gam, wts)[2]

    a_grid = np.geomspace(a_lo, a_hi, 40)
    objs = [profiled_obj(a) for a in a_grid]
    best = int(np.argmin(objs))

    # Golden-section on the bracket around the best coarse point.
    lo = a_grid[max(best - 1, 0)]
    hi = a_grid[min(best + 1, len(a_grid) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = profiled_obj(x1), profiled_obj(x2)
    while hi - lo > FIT_TOL * max(1.0, hi):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = profiled_obj(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = profiled_obj(x2)

    candidates = [a_grid[best], (lo + hi) / 2.0]
    a_best = min(candidates, key=profiled_obj)
    c0, b, _ = _profiled_linear(family, a_best, h, gam, wts)
    model = VariogramModel(family=family, nugget=float(max(c0, 0.0)), range=float(a_best),
                           sill=float(max(b, 0.0)))
    return _with_mse(model, empirical)


def select_model(empirical: EmpiricalVariogram) -> VariogramModel:
    """Fit all four families and keep the lowest unweighted-MSE model.

    Exact MSE ties break by family order (FAMILIES).  With fewer than 3 bins
    every family degrades to the same fallback, which is returned directly.
    """
    if empirical.n_bins < 3:
        return _fallback_model(empirical)
    fits = [fit_model(empirical, family) for family in FAMILIES]
    return min(fits, key=lambda m: (m.fit_mse, FAMILIES.index(m.family)))
