"""Finite-volume localization criteria on fractional moments.

Three tests are provided, each comparing a computable left-hand side
against the threshold 1:

* ``theorem1_lhs`` -- bulk criterion on a region containing the origin:
  (1 + (C_s/lambda^s)|Gamma(L)|)^2 * sum over boundary bonds of
  E(|<O|(H_L - E)^{-1}|u>|^s), with u the inside endpoint of each bond.

* ``theorem2_lhs`` -- boundary-state-free criterion: max over sub-regions
  W of |Gamma(L+)| * (C~_s/lambda^s) * the same bond sum evaluated with
  the operator restricted to W; terms with O or u outside W contribute 0.

* ``single_site_test`` -- closed-form one-site specialization:
  (2 d^2 (2d+1) C_s / lambda^s) * E(1/|lambda*V - E|^s).

The constants C_s and C~_s are user inputs (default 1.0).  Finiteness of
suitable constants is a theorem; their numerical values are not supplied
here, so every report records the constants used, and verdicts are
statistical statements at the CI's confidence level, not proofs.  The CLI
refuses to print "certified" unless a constants source is given.
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .disorder import DisorderModel
from .hamiltonian import LaplacianConvention
from .lattice import Region, boundary_bonds, extend_plus
from .moments import (
    DEFAULT_BLOCKS,
    MomentEstimate,
    RowMomentSamples,
    collect_row_samples,
)
from .resolvent import SpectralPoint

VERDICT_CERTIFIED = "certified"
VERDICT_NOT_CERTIFIED = "not_certified"
VERDICT_INCONCLUSIVE = "inconclusive"

RIGOR_FULL = "full_subset_max"
RIGOR_PARTIAL = "partial_subset_max"
RIGOR_ANALYTIC = "analytic"

STAT_CAVEAT = (
    "statistical certification at the CI confidence level with user-supplied "
    "constants; not a proof unless the constants come from a rigorous source"
)


@dataclass(frozen=True)
class CriterionConstants:
    """Constants entering the criteria; recorded in every report."""

    C_s: float = 1.0
    C_tilde_s: float = 1.0
    s: float = 1.0 / 3.0
    source: str | None = None

    def __post_init__(self):
        if not (np.isfinite(self.C_s) and self.C_s > 0):
            raise ValueError("C_s must be positive and finite")
        if not (np.isfinite(self.C_tilde_s) and self.C_tilde_s > 0):
            raise ValueError("C_tilde_s must be positive and finite")
        if not 0.0 < self.s < 1.0:
            raise ValueError("s must lie in (0, 1)")

    def to_dict(self) -> dict:
        return {"C_s": self.C_s, "C_tilde_s": self.C_tilde_s, "s": self.s,
                "source": self.source}


@dataclass(frozen=True)
class SubsetStrategy:
    """How to range over sub-regions W in the subset criterion.

    ``exhaustive`` enumerates every W containing the origin (2^(n-1)
    subsets) and is allowed only up to ``max_exhaustive_sites`` sites;
    ``subboxes`` enumerates axis-aligned boxes around the origin inside
    the region (sound but partial, so the rigor flag is downgraded);
    ``user_list`` takes an explicit family.
    """

    kind: str = "exhaustive"
    max_exhaustive_sites: int = 16
    subsets: tuple = ()

    def __post_init__(self):
        if self.kind not in ("exhaustive", "subboxes", "user_list"):
            raise ValueError(f"unknown subset strategy {self.kind!r}")
        if self.kind == "user_list" and not self.subsets:
            raise ValueError("user_list strategy needs a nonempty subset family")


@dataclass(frozen=True)
class CriterionReport:
    """Evaluated criterion with verdict, rigor flag, and full provenance."""

    criterion: str
    lhs: float
    ci_low: float
    ci_high: float
    verdict: str
    rigor: str
    constants: CriterionConstants
    sub_terms: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    threshold: float = 1.0
    caveat: str = STAT_CAVEAT

    def to_json_dict(self) -> dict:
        return {
            "criterion": self.criterion,
            "lhs": self.lhs,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "rigor": self.rigor,
            "constants": self.constants.to_dict(),
            "sub_terms": [
                {"bond": [list(b[0]), list(b[1])], "estimate": est.to_dict()}
                for b, est in sorted(self.sub_terms.items())
            ],
            "provenance": self.provenance,
            "caveat": self.caveat,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)


def _verdict(ci_low: float, ci_high: float, threshold: float = 1.0) -> str:
    if ci_high < threshold:
        return VERDICT_CERTIFIED
    if ci_low > threshold:
        return VERDICT_NOT_CERTIFIED
    return VERDICT_INCONCLUSIVE


def _signed_power_antideriv(w: float, s: float) -> float:
    """Antiderivative of |w|^(-s): sign(w) |w|^(1-s) / (1-s)."""
    return np.sign(w) * np.abs(w) ** (1.0 - s) / (1.0 - s)


def inverse_moment_closed_form(model: DisorderModel, E: float, s: float) -> float:
    """Exact E(1/|lambda*V - E|^s) for the model's distribution.

    Uniform densities use the analytic antiderivative.  Tabulated
    (piecewise-linear) densities are integrated segment by segment with
    the power-law-exact local rule, splitting at the singularity
    v = E/lambda; the integrable singularity costs no accuracy.
    """
    if not 0.0 < s < 1.0:
        raise ValueError("s must lie in (0, 1)")
    lam = model.coupling
    a, b = model.support
    if model.kind == "uniform":
        # substitute w = lambda*v - E; density 1/(b-a)
        wa, wb = lam * a - E, lam * b - E
        integral = _signed_power_antideriv(wb, s) - _signed_power_antideriv(wa, s)
        return float(integral / (lam * (b - a)))

    knots = np.asarray(model.knots)
    weights = np.asarray(model.weights)
    v_star = E / lam
    if np.any(np.abs(knots - v_star) <= 1e-14 * np.maximum(1.0, np.abs(knots))):
        warnings.warn(
            "singularity of |lambda*V - E|^(-s) sits at a tabulation knot; "
            "the integral is split there", stacklevel=2)
    total = 0.0
    for k in range(len(knots) - 1):
        v0, v1 = knots[k], knots[k + 1]
        w0, w1 = weights[k], weights[k + 1]
        slope = (w1 - w0) / (v1 - v0)
        pieces = [(v0, v1)]
        if v0 < v_star < v1:
            pieces = [(v0, v_star), (v_star, v1)]
        for lo, hi in pieces:
            total += _segment_integral(lo, hi, v0, w0, slope, lam, E, s)
    return float(total)


def _segment_integral(lo, hi, v0, w0, slope, lam, E, s):
    """Exact integral of (w0 + slope*(v - v0)) |lam*v - E|^(-s) over [lo, hi]."""
    # In w = lam*v - E: v = (w + E)/lam, dv = dw/lam.
    wl, wh = lam * lo - E, lam * hi - E
    alpha = w0 + slope * ((E / lam) - v0)   # density = alpha + (slope/lam) * w
    beta = slope / lam

    def F0(w):  # integral of |w|^-s
        return _signed_power_antideriv(w, s)

    def F1(w):  # integral of w |w|^-s = sign(w)|w|^{1-s}
        return np.abs(w) ** (2.0 - s) / (2.0 - s)

    return (alpha * (F0(wh) - F0(wl)) + beta * (F1(wh) - F1(wl))) / lam


def single_site_test(model: DisorderModel, E: float,
                     constants: CriterionConstants, d: int) -> CriterionReport:
    """Closed-form one-site criterion; analytic, degenerate CI.

    lhs = (2 d^2 (2d+1) C_s / lambda^s) * E(1/|lambda*V - E|^s).
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    lam = model.coupling
    s = constants.s
    prefactor = 2.0 * d * d * (2 * d + 1) * constants.C_s / lam ** s
    lhs = prefactor * inverse_moment_closed_form(model, E, s)
    return CriterionReport(
        criterion="single_site",
        lhs=lhs, ci_low=lhs, ci_high=lhs,
        verdict=_verdict(lhs, lhs),
        rigor=RIGOR_ANALYTIC,
        constants=constants,
        provenance={"model": model.describe(), "E": E, "d": d,
                    "prefactor": prefactor},
    )


def _origin(region: Region) -> tuple:
    o = (0,) * region.dimension
    if o not in region:
        raise ValueError("region must contain the origin")
    return o


def _bond_sum_terms(region: Region):
    """Boundary bonds, their unique inside endpoints, and multiplicities."""
    bonds = boundary_bonds(region)
    inside = bonds.inside_sites()
    uniq = tuple(sorted(set(inside)))
    mult = {u: inside.count(u) for u in uniq}
    return bonds, uniq, mult


def theorem1_lhs(model: DisorderModel, region: Region, E: SpectralPoint,
                 constants: CriterionConstants, n_samples: int, seed: int,
                 *, n_blocks: int = DEFAULT_BLOCKS,
                 convention=LaplacianConvention.HOPPING_ONLY,
                 direct_max_sites: int | None = None) -> CriterionReport:
    """Bulk finite-volume criterion on a region containing the origin.

    One solve per realization covers every boundary bond; the CI is
    propagated by summing block means over bonds before taking the
    median.
    """
    origin = _origin(region)
    bonds, targets, mult = _bond_sum_terms(region)
    rows = collect_row_samples(
        model, region, origin, targets, E, constants.s, n_samples, seed,
        n_blocks=n_blocks, convention=convention,
        direct_max_sites=direct_max_sites)

    lam_s = model.coupling ** constants.s
    prefactor = (1.0 + constants.C_s / lam_s * len(bonds)) ** 2
    weights = np.array([mult[u] for u in rows.targets], dtype=float)
    bond_sum = rows.combined_estimate(weights)

    sub_terms = {}
    for bond in bonds:
        sub_terms[bond] = rows.estimate_for(bond[0])

    convention = LaplacianConvention.parse(convention)
    return CriterionReport(
        criterion="theorem1",
        lhs=prefactor * bond_sum.value,
        ci_low=prefactor * bond_sum.ci_low,
        ci_high=prefactor * bond_sum.ci_high,
        verdict=_verdict(prefactor * bond_sum.ci_low, prefactor * bond_sum.ci_high),
        rigor=RIGOR_FULL,
        constants=constants,
        sub_terms=sub_terms,
        provenance={
            "model": model.describe(), "E": E.E, "eta": E.eta,
            "region_sites": len(region), "d": region.dimension,
            "n_boundary_bonds": len(bonds), "prefactor": prefactor,
            "n_samples": n_samples, "n_blocks": n_blocks, "seed": seed,
            "convention": convention.value,
            "resample_events": bond_sum.resample_events,
            "near_singular": bond_sum.near_singular,
        },
    )


def _exhaustive_subsets(region: Region, origin, cap: int):
    if len(region) > cap:
        raise ValueError(
            f"exhaustive subset enumeration limited to {cap} sites "
            f"(region has {len(region)}); use the subboxes strategy")
    others = [s for s in region.sites if s != origin]
    for r in range(len(others) + 1):
        for combo in itertools.combinations(others, r):
            yield Region((origin,) + combo)


def _subbox_subsets(region: Region, origin):
    """Axis-aligned boxes around the origin fully contained in the region."""
    coords = region.coords_array()
    d = region.dimension
    lows = [range(int(coords[:, j].min()), 1) for j in range(d)]
    highs = [range(0, int(coords[:, j].max()) + 1) for j in range(d)]
    for lo in itertools.product(*lows):
        for hi in itertools.product(*highs):
            sites = list(itertools.product(*[range(lo[j], hi[j] + 1)
                                             for j in range(d)]))
            if all(s in region for s in sites):
                yield Region(sites)


def _subset_family(region: Region, origin, strategy: SubsetStrategy):
    if strategy.kind == "exhaustive":
        yield from _exhaustive_subsets(region, origin, strategy.max_exhaustive_sites)
    elif strategy.kind == "subboxes":
        yield from _subbox_subsets(region, origin)
    else:
        for w in strategy.subsets:
            sub = w if isinstance(w, Region) else Region(w)
            if not sub.is_subset_of(region):
                raise ValueError("user-supplied subset is not inside the region")
            yield sub


def theorem2_lhs(model: DisorderModel, region: Region, E: SpectralPoint,
                 constants: CriterionConstants, strategy: SubsetStrategy,
                 n_samples: int, seed: int, *,
                 n_blocks: int = DEFAULT_BLOCKS,
                 convention=LaplacianConvention.HOPPING_ONLY,
                 direct_max_sites: int | None = None) -> CriterionReport:
    """Subset-maximized criterion that also rules out boundary states.

    Every sub-region W reuses the same realization stream (counter-based
    sampling), so the max is taken over coherent estimates.  Sub-regions
    not containing the origin contribute 0 and are skipped; bond terms
    with the inside endpoint outside W contribute 0.
    """
    origin = _origin(region)
    bonds, targets, mult = _bond_sum_terms(region)
    lam_s = model.coupling ** constants.s
    gamma_plus = len(boundary_bonds(extend_plus(region)))
    prefactor = gamma_plus * constants.C_tilde_s / lam_s

    best = None         # (value, -n_sites, sites) for deterministic ties
    best_est: MomentEstimate | None = None
    best_region = None
    best_rows: RowMomentSamples | None = None
    n_evaluated = 0
    for w in _subset_family(region, origin, strategy):
        if origin not in w:
            continue
        w_targets = tuple(u for u in targets if u in w)
        n_evaluated += 1
        if not w_targets:
            continue
        rows = collect_row_samples(
            model, region, origin, w_targets, E, constants.s, n_samples,
            seed, n_blocks=n_blocks, convention=convention,
            restrict_to=w, direct_max_sites=direct_max_sites)
        weights = np.array([mult[u] for u in rows.targets], dtype=float)
        est = rows.combined_estimate(weights)
        key = (est.value, -len(w), w.sites)
        if best is None or key > best:
            best = key
            best_est = est
            best_region = w
            best_rows = rows

    if best_est is None:
        # No subset produced a positive term; the max is 0.
        lhs, lo, hi = 0.0, 0.0, 0.0
        sub_terms = {}
        argmax_sites = None
    else:
        lhs = prefactor * best_est.value
        lo = prefactor * best_est.ci_low
        hi = prefactor * best_est.ci_high
        sub_terms = {}
        for bond in bonds:
            if bond[0] in best_region:
                sub_terms[bond] = best_rows.estimate_for(bond[0])
        argmax_sites = [list(s) for s in best_region.sites]

    rigor = RIGOR_FULL if strategy.kind == "exhaustive" else RIGOR_PARTIAL
    convention = LaplacianConvention.parse(convention)
    return CriterionReport(
        criterion="theorem2",
        lhs=lhs, ci_low=lo, ci_high=hi,
        verdict=_verdict(lo, hi),
        rigor=rigor,
        constants=constants,
        sub_terms=sub_terms,
        provenance={
            "model": model.describe(), "E": E.E, "eta": E.eta,
            "region_sites": len(region), "d": region.dimension,
            "n_boundary_bonds": len(bonds),
            "n_boundary_bonds_plus": gamma_plus,
            "prefactor": prefactor,
            "strategy": strategy.kind,
            "n_subsets_evaluated": n_evaluated,
            "argmax_subset": argmax_sites,
            "n_samples": n_samples, "n_blocks": n_blocks, "seed": seed,
            "convention": convention.value,
        },
    )


def certify_interval(model: DisorderModel, region: Region, E_grid,
                     constants: CriterionConstants, which: str,
                     n_samples: int, seed: int, *,
                     strategy: SubsetStrategy | None = None,
                     n_blocks: int = DEFAULT_BLOCKS,
                     convention=LaplacianConvention.HOPPING_ONLY,
                     direct_max_sites: int | None = None) -> list:
    """Evaluate one criterion over an energy grid, same seed per energy."""
    energies = [float(e) for e in E_grid]
    if not energies:
        raise ValueError("energy grid must be nonempty")
    reports = []
    for e in energies:
        point = SpectralPoint(e, 0.0)
        if which == "thm1":
            rep = theorem1_lhs(model, region, point, constants, n_samples,
                               seed, n_blocks=n_blocks, convention=convention,
                               direct_max_sites=direct_max_sites)
        elif which == "thm2":
            rep = theorem2_lhs(model, region, point, constants,
                               strategy or SubsetStrategy(), n_samples, seed,
                               n_blocks=n_blocks, convention=convention,
                               direct_max_sites=direct_max_sites)
        else:
            raise ValueError(f"unknown criterion selector {which!r}")
        reports.append(rep)
    return reports


def certified_intervals(reports, E_grid) -> list:
    """Maximal runs of consecutive certified grid energies, as (a, b) pairs."""
    energies = [float(e) for e in E_grid]
    out = []
    start = None
    for e, rep in zip(energies, reports):
        if rep.verdict == VERDICT_CERTIFIED:
            if start is None:
                start = e
            end = e
        else:
            if start is not None:
                out.append((start, end))
                start = None
    if start is not None:
        out.append((start, end))
    return out
