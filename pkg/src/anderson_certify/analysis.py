"""Decay-law extraction and asymptotic power-law tests.

Exponential fits run weighted least squares on log(moment) against
distance, with a curvature diagnostic that flags power-law-shaped
residuals.  Confidence intervals for the decay rate come from a block
bootstrap over the disorder blocks carried by each moment estimate
(falling back to the WLS normal interval when no block data is
available, e.g. for externally supplied series).

The power-law tests compare a shell supremum of the moment against
B / L^(3(d-1)) on the finite box (or B / L^(4(d-1)) on a larger proxy
box standing in for the infinite volume); the companion mobility-edge
check applies the same thresholds as lower bounds.  The constants B and
the minimal L are user inputs recorded in every report; rigorous values
are not supplied here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderModel
from .hamiltonian import LaplacianConvention
from .lattice import Region, dist1
from .moments import (
    DEFAULT_BLOCKS,
    MomentEstimate,
    MomentQuery,
    collect_row_samples,
    estimate_moment,
    estimate_shell_supremum,
)
from .resolvent import SpectralPoint


@dataclass(frozen=True)
class DecaySeries:
    """Moment estimates against strictly increasing distances."""

    points: tuple                       # ((distance, MomentEstimate), ...)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = tuple((float(r), est) for r, est in self.points)
        if len(pts) < 1:
            raise ValueError("series needs at least one point")
        dists = [r for r, _ in pts]
        if any(b <= a for a, b in zip(dists, dists[1:])):
            raise ValueError("distances must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def distances(self) -> np.ndarray:
        return np.array([r for r, _ in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([est.value for _, est in self.points])


@dataclass(frozen=True)
class FitDiagnostics:
    rms_residual: float
    curvature: float
    curvature_se: float
    curved: bool


@dataclass(frozen=True)
class DecayFit:
    """Exponential decay law A * exp(-mu * r) fitted to a series."""

    A: float
    mu: float
    mu_ci: tuple
    model: str = "exponential"
    goodness: FitDiagnostics | None = None

    def to_dict(self) -> dict:
        out = {"A": self.A, "mu": self.mu,
               "mu_ci": [self.mu_ci[0], self.mu_ci[1]], "model": self.model}
        if self.goodness is not None:
            out["goodness"] = {
                "rms_residual": self.goodness.rms_residual,
                "curvature": self.goodness.curvature,
                "curvature_se": self.goodness.curvature_se,
                "curved": self.goodness.curved,
            }
        return out


def _log_sigmas(series: DecaySeries) -> np.ndarray:
    sig = []
    for _, est in series.points:
        if est.ci_low > 0 and est.ci_high > est.ci_low:
            sig.append(0.5 * (np.log(est.ci_high) - np.log(est.ci_low)))
        else:
            sig.append(0.0)
    return np.array(sig)


def _wls_line(r, y, w):
    """Weighted least squares y ~ c0 + c1 r; returns (c0, c1, cov)."""
    x = np.column_stack([np.ones_like(r), r])
    xtw = x.T * w
    cov = np.linalg.inv(xtw @ x)
    coef = cov @ (xtw @ y)
    return coef[0], coef[1], cov


def fit_exponential(series: DecaySeries, *, n_bootstrap: int = 500,
                    bootstrap_seed: int = 0) -> DecayFit:
    """Fit A*exp(-mu*r) by weighted least squares on log(moment).

    Weights come from the CI widths on the log scale (equal weights when
    CIs are degenerate).  Scaling every moment by c > 0 shifts only
    log A, leaving mu exactly unchanged.
    """
    if len(series.points) < 3:
        raise ValueError("need at least 3 points to fit")
    values = series.values
    if np.any(values <= 0):
        raise ValueError("all moment values must be positive for a log fit")
    r = series.distances
    y = np.log(values)
    sig = _log_sigmas(series)
    if np.all(sig > 0):
        w = 1.0 / sig ** 2
    else:
        w = np.ones_like(y)
    w = w / np.max(w)

    c0, c1, cov = _wls_line(r, y, w)
    mu = -c1
    amplitude = float(np.exp(c0))

    resid = y - (c0 + c1 * r)
    rms = float(np.sqrt(np.average(resid ** 2, weights=w)))
    curvature, curvature_se = _residual_curvature(r, resid)
    curved = bool(abs(curvature) > 3.0 * curvature_se)

    mu_ci = _bootstrap_mu_ci(series, w, n_bootstrap, bootstrap_seed)
    if mu_ci is None:
        # No block data: WLS normal-theory interval.
        n = len(r)
        dof = max(n - 2, 1)
        scale = float(np.sum(w * resid ** 2) / dof)
        se = float(np.sqrt(scale * cov[1, 1]))
        mu_ci = (mu - 1.96 * se, mu + 1.96 * se)

    return DecayFit(A=amplitude, mu=float(mu), mu_ci=(float(mu_ci[0]), float(mu_ci[1])),
                    goodness=FitDiagnostics(rms, float(curvature),
                                            float(curvature_se), curved))


def _residual_curvature(r, resid):
    """Quadratic coefficient of the residuals and its standard error."""
    x = np.column_stack([np.ones_like(r), r, r ** 2])
    coef, res, rank, _ = np.linalg.lstsq(x, resid, rcond=None)
    n, p = len(r), 3
    if n <= p:
        return float(coef[2]) if rank == p else 0.0, np.inf
    rss = float(np.sum((resid - x @ coef) ** 2))
    sigma2 = rss / (n - p)
    cov = sigma2 * np.linalg.inv(x.T @ x)
    se = float(np.sqrt(max(cov[2, 2], 0.0)))
    return float(coef[2]), max(se, 1e-300)


def _bootstrap_mu_ci(series: DecaySeries, w, n_bootstrap, seed):
    blocks = [est.block_values for _, est in series.points]
    if any(len(b) == 0 for b in blocks):
        return None
    n_blocks = len(blocks[0])
    if any(len(b) != n_blocks for b in blocks):
        return None
    block_matrix = np.asarray(blocks)          # (n_points, n_blocks)
    r = series.distances
    rng = np.random.Generator(np.random.Philox(key=seed))
    mus = []
    for _ in range(n_bootstrap):
        pick = rng.integers(0, n_blocks, size=n_blocks)
        vals = np.median(block_matrix[:, pick], axis=1)
        if np.any(vals <= 0):
            continue
        _, c1, _ = _wls_line(r, np.log(vals), w)
        mus.append(-c1)
    if len(mus) < max(10, n_bootstrap // 5):
        return None
    lo, hi = np.percentile(mus, [2.5, 97.5])
    return float(lo), float(hi)


def decay_series(model: DisorderModel, region: Region, x, radii,
                 z: SpectralPoint, s: float, n_samples: int, seed: int,
                 *, n_blocks: int = DEFAULT_BLOCKS,
                 convention=LaplacianConvention.HOPPING_ONLY,
                 direct_max_sites: int | None = None) -> DecaySeries:
    """Moment-vs-distance series from one shared sampling run.

    For each radius the representative is the site maximizing the point
    estimate on that shell (sup formulation rather than shell average).
    All radii share the same realizations, so block bootstraps over the
    fitted series remain coherent.
    """
    x = tuple(x)
    radii = sorted(int(r) for r in radii)
    by_radius = {r: [y for y in region.sites if dist1(x, y) == r] for r in radii}
    for r, ys in by_radius.items():
        if not ys:
            raise ValueError(f"no sites at distance {r} from {x}")
    targets = tuple(y for r in radii for y in by_radius[r])
    rows = collect_row_samples(model, region, x, targets, z, s, n_samples,
                               seed, n_blocks=n_blocks, convention=convention,
                               direct_max_sites=direct_max_sites)
    points = []
    for r in radii:
        ests = [rows.estimate_for(y) for y in by_radius[r]]
        best = max(range(len(ests)), key=lambda i: ests[i].value)
        points.append((float(r), ests[best]))
    lam = model.coupling
    meta = {"s": s, "E": z.E, "eta": z.eta, "lambda": lam,
            "convention": LaplacianConvention.parse(convention).value,
            "region_sites": len(region)}
    return DecaySeries(tuple(points), meta)


@dataclass(frozen=True)
class PowerLawReport:
    """Shell supremum against the power-law threshold B / L^k."""

    variant: str
    L: int
    d: int
    B: float
    exponent: int
    threshold: float
    supremum_site: tuple
    estimate: MomentEstimate
    verdict: str                       # pass / fail / inconclusive

    def to_dict(self) -> dict:
        return {"variant": self.variant, "L": self.L, "d": self.d, "B": self.B,
                "exponent": self.exponent, "threshold": self.threshold,
                "supremum_site": list(self.supremum_site),
                "estimate": self.estimate.to_dict(), "verdict": self.verdict}


def power_law_test(model: DisorderModel, E: float, L: int, s: float,
                   variant: str, B: float, n_samples: int, seed: int, *,
                   d: int = 1, eta: float = 0.0, L_min: int = 4,
                   n_blocks: int = DEFAULT_BLOCKS,
                   convention=LaplacianConvention.HOPPING_ONLY,
                   direct_max_sites: int | None = None) -> PowerLawReport:
    """Check whether the shell supremum lies below the power-law threshold.

    ``finite_volume`` evaluates on the box of half-side L against
    B / L^(3(d-1)); ``infinite_volume_proxy`` uses a box of twice the
    half-side (side >= 4L, origin centered) against B / L^(4(d-1)).  In
    d = 1 both thresholds reduce to the constant B.
    """
    if variant not in ("finite_volume", "infinite_volume_proxy"):
        raise ValueError(f"unknown variant {variant!r}")
    if L < L_min:
        raise ValueError(f"need L >= {L_min}")
    if B <= 0:
        raise ValueError("B must be positive")
    if variant == "finite_volume":
        region = Region.box(d, L)
        exponent = 3 * (d - 1)
    else:
        region = Region.box(d, 2 * L)
        exponent = 4 * (d - 1)
    threshold = B / float(L) ** exponent
    site, est = estimate_shell_supremum(
        model, region, SpectralPoint(E, eta), s, n_samples, seed, L=L,
        n_blocks=n_blocks, convention=convention,
        direct_max_sites=direct_max_sites)
    if est.ci_high <= threshold:
        verdict = "pass"
    elif est.ci_low > threshold:
        verdict = "fail"
    else:
        verdict = "inconclusive"
    return PowerLawReport(variant, L, d, B, exponent, threshold, site, est, verdict)


@dataclass(frozen=True)
class MobilityEdgeReport:
    """Lower-bound checks at a candidate mobility edge, per volume size."""

    variant: str
    d: int
    B: float
    exponent: int
    rows: tuple                        # ((L, bound, MomentEstimate, status), ...)
    inconsistent_with_mobility_edge: bool

    def to_dict(self) -> dict:
        return {"variant": self.variant, "d": self.d, "B": self.B,
                "exponent": self.exponent,
                "rows": [{"L": L, "bound": bound, "estimate": est.to_dict(),
                          "status": status}
                         for L, bound, est, status in self.rows],
                "inconsistent_with_mobility_edge":
                    self.inconsistent_with_mobility_edge}


def mobility_edge_bound_check(series, d: int, B1: float, B2: float,
                              variant: str = "finite_volume") -> MobilityEdgeReport:
    """Verify shell suprema stay above the mobility-edge lower bound.

    ``series`` is a sequence of (L, MomentEstimate) shell suprema at the
    candidate edge energy.  A violation (upper confidence limit below the
    bound) at trusted constants says the energy cannot be a mobility
    edge.  In d = 1 the bounds are L-independent constants.
    """
    if variant == "finite_volume":
        b, exponent = B1, 3 * (d - 1)
    elif variant == "infinite_volume_proxy":
        b, exponent = B2, 4 * (d - 1)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    rows = []
    violated = False
    for L, est in series:
        bound = b / float(L) ** exponent
        if est.ci_high < bound:
            status = "violated"
            violated = True
        elif est.ci_low >= bound:
            status = "satisfied"
        else:
            status = "inconclusive"
        rows.append((int(L), float(bound), est, status))
    return MobilityEdgeReport(variant, d, b, exponent, tuple(rows), violated)


@dataclass(frozen=True)
class OffAxisScan:
    """Moment estimates along an eta grid at fixed E."""

    etas: tuple
    estimates: tuple
    max_eta: float
    max_at_zero: bool

    def to_dict(self) -> dict:
        return {"etas": list(self.etas),
                "estimates": [e.to_dict() for e in self.estimates],
                "max_eta": self.max_eta, "max_at_zero": self.max_at_zero}


def off_axis_scan(model: DisorderModel, region: Region, x, y, E: float,
                  eta_grid, s: float, n_samples: int, seed: int, *,
                  n_blocks: int = DEFAULT_BLOCKS,
                  convention=LaplacianConvention.HOPPING_ONLY,
                  direct_max_sites: int | None = None) -> OffAxisScan:
    """Scan the moment over eta at matched seeds; locate the maximum.

    Uniformity of the estimates along the grid (maximum at or near
    eta = 0) is the empirical counterpart of off-axis resolvent bounds.
    """
    etas = [float(e) for e in eta_grid]
    if not any(e == 0.0 for e in etas):
        raise ValueError("eta grid must include 0")
    estimates = []
    for eta in etas:
        query = MomentQuery(region, tuple(x), tuple(y), SpectralPoint(E, eta), s)
        estimates.append(estimate_moment(
            model, query, n_samples, seed, n_blocks=n_blocks,
            convention=convention, direct_max_sites=direct_max_sites))
    best = int(np.argmax([e.value for e in estimates]))
    zero_pos = int(np.argmin(np.abs(etas)))
    return OffAxisScan(tuple(etas), tuple(estimates),
                       max_eta=etas[best], max_at_zero=best == zero_pos)
