import json
import warnings

import numpy as np
import pytest
from scipy.integrate import quad

from anderson_certify.criteria import (
    RIGOR_ANALYTIC,
    RIGOR_FULL,
    RIGOR_PARTIAL,
    VERDICT_CERTIFIED,
    VERDICT_NOT_CERTIFIED,
    CriterionConstants,
    SubsetStrategy,
    certified_intervals,
    certify_interval,
    inverse_moment_closed_form,
    single_site_test,
    theorem1_lhs,
    theorem2_lhs,
)
from anderson_certify.disorder import DisorderModel
from anderson_certify.lattice import Region
from anderson_certify.resolvent import SpectralPoint


def uniform(lam):
    return DisorderModel.uniform(coupling=lam)


def theorem1_analytic(lam, E, s, C_s=1.0):
    # Single-site region: lhs = (1 + 2 C_s lam^{-s})^2 * 2 * E|lam V - E|^{-s}
    return ((1.0 + 2.0 * C_s / lam ** s) ** 2
            * 2.0 * inverse_moment_closed_form(uniform(lam), E, s))


class TestInverseMomentClosedForm:
    def test_uniform_reference_value(self):
        v = inverse_moment_closed_form(uniform(1.0), 0.0, 0.5)
        assert v == pytest.approx(2.0 * np.sqrt(2.0), rel=1e-14)

    def test_lambda_scaling(self):
        s = 0.37
        base = inverse_moment_closed_form(uniform(1.0), 0.0, s)
        for lam in (2.0, 17.0, 400.0):
            v = inverse_moment_closed_form(uniform(lam), 0.0, s)
            assert v == pytest.approx(lam ** (-s) * base, rel=1e-12)

    def test_support_bound_far_energy(self):
        # |lam V - E| ranges over [9.5, 10.5] at lam=1, E=10.
        v = inverse_moment_closed_form(uniform(1.0), 10.0, 0.5)
        assert 10.5 ** -0.5 <= v <= 9.5 ** -0.5

    def test_uniform_vs_quadrature(self):
        lam, E, s = 3.0, 0.7, 0.45
        v_star = E / lam
        oracle, err = quad(lambda v: np.abs(lam * v - E) ** (-s), -0.5, 0.5,
                           points=[v_star], limit=200)
        got = inverse_moment_closed_form(uniform(lam), E, s)
        assert got == pytest.approx(oracle, abs=max(1e-10, 10 * err))

    def test_tabulated_vs_quadrature(self):
        tri = DisorderModel.tabulated([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0],
                                      coupling=2.0)
        for E in (0.0, 0.37, 1.2):
            v_star = E / 2.0
            oracle, err = quad(lambda v: tri.density(v) * np.abs(2 * v - E) ** (-0.4),
                               -1.0, 1.0, points=[v_star], limit=200)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")  # E=0 sits on a knot by design
                got = inverse_moment_closed_form(tri, E, 0.4)
            assert got == pytest.approx(oracle, abs=max(1e-9, 10 * err))

    def test_singularity_at_knot_warns(self):
        tri = DisorderModel.tabulated([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0])
        with pytest.warns(UserWarning, match="knot"):
            inverse_moment_closed_form(tri, 0.0, 0.5)

    def test_invalid_s(self):
        with pytest.raises(ValueError):
            inverse_moment_closed_form(uniform(1.0), 0.0, 1.0)


class TestSingleSiteTest:
    def test_certification_threshold_d1(self):
        # lhs = 12 sqrt(2) / lam at s = 1/2: certified iff lam > 16.97.
        c = CriterionConstants(C_s=1.0, C_tilde_s=1.0, s=0.5)
        low = single_site_test(uniform(16.0), 0.0, c, d=1)
        high = single_site_test(uniform(18.0), 0.0, c, d=1)
        assert low.lhs == pytest.approx(12.0 * np.sqrt(2.0) / 16.0, rel=1e-12)
        assert low.verdict == VERDICT_NOT_CERTIFIED
        assert high.verdict == VERDICT_CERTIFIED
        assert high.rigor == RIGOR_ANALYTIC
        assert high.ci_low == high.lhs == high.ci_high

    def test_monotone_in_lambda(self):
        c = CriterionConstants(s=0.5)
        values = [single_site_test(uniform(lam), 0.0, c, d=1).lhs
                  for lam in (5.0, 10.0, 50.0, 200.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_d2_prefactor(self):
        c = CriterionConstants(s=0.5)
        rep = single_site_test(uniform(1.0), 0.0, c, d=2)
        assert rep.provenance["prefactor"] == pytest.approx(40.0)

    def test_d_validation(self):
        with pytest.raises(ValueError):
            single_site_test(uniform(1.0), 0.0, CriterionConstants(), d=0)


class TestTheorem1:
    def test_analytic_anchor_lambda_1000(self):
        c = CriterionConstants(C_s=1.0, s=1.0 / 3.0)
        rep = theorem1_lhs(uniform(1000.0), Region.box(1, 0), SpectralPoint(0.0),
                           c, n_samples=20_000, seed=42)
        assert rep.ci_low <= 0.54429 <= rep.ci_high
        assert rep.verdict == VERDICT_CERTIFIED
        assert rep.rigor == RIGOR_FULL
        assert theorem1_analytic(1000.0, 0.0, 1.0 / 3.0) == pytest.approx(0.54429, abs=5e-6)

    def test_monotone_in_Cs(self):
        reps = []
        for cs in (0.5, 1.0, 2.0):
            c = CriterionConstants(C_s=cs, s=1.0 / 3.0)
            reps.append(theorem1_lhs(uniform(10.0), Region.box(1, 0),
                                     SpectralPoint(0.0), c, 500, seed=3).lhs)
        assert reps[0] < reps[1] < reps[2]

    def test_lambda_ratio_below_tenth(self):
        c = CriterionConstants(s=1.0 / 3.0)
        big = theorem1_lhs(uniform(1000.0), Region.box(1, 0), SpectralPoint(0.0),
                           c, 2000, seed=4).lhs
        small = theorem1_lhs(uniform(1.0), Region.box(1, 0), SpectralPoint(0.0),
                             c, 2000, seed=4).lhs
        assert big / small < 0.1

    def test_matches_analytic_for_random_triples(self):
        rng = np.random.default_rng(55)
        for _ in range(10):
            lam = float(rng.uniform(2.0, 50.0))
            e = float(rng.uniform(-2.0, 2.0))
            s = float(rng.uniform(0.2, 0.55))
            c = CriterionConstants(C_s=1.0, s=s)
            rep = theorem1_lhs(uniform(lam), Region.box(1, 0), SpectralPoint(e),
                               c, 20_000, seed=int(rng.integers(1 << 30)))
            truth = theorem1_analytic(lam, e, s)
            assert rep.ci_low <= truth <= rep.ci_high

    def test_bond_bookkeeping_inside_endpoints(self):
        rep = theorem1_lhs(uniform(5.0), Region.box(1, 1), SpectralPoint(0.0),
                           CriterionConstants(s=0.3), 300, seed=6)
        bonds = set(rep.sub_terms)
        assert bonds == {((-1,), (-2,)), ((1,), (2,))}

    def test_origin_required(self):
        shifted = Region([(3,), (4,)])
        with pytest.raises(ValueError):
            theorem1_lhs(uniform(5.0), shifted, SpectralPoint(0.0),
                         CriterionConstants(), 200, seed=0)

    def test_lhs_to_zero_as_lambda_grows(self):
        c = CriterionConstants(s=1.0 / 3.0)
        v10 = theorem1_lhs(uniform(10.0), Region.box(1, 0), SpectralPoint(0.0),
                           c, 1000, seed=8).lhs
        v1e4 = theorem1_lhs(uniform(1e4), Region.box(1, 0), SpectralPoint(0.0),
                            c, 1000, seed=8).lhs
        assert v10 / v1e4 > 10.0


class TestTheorem2:
    def test_single_site_formula(self):
        lam, s = 1000.0, 1.0 / 3.0
        c = CriterionConstants(C_tilde_s=1.0, s=s)
        rep = theorem2_lhs(uniform(lam), Region.box(1, 0), SpectralPoint(0.0),
                           c, SubsetStrategy(), 2000, seed=9)
        truth = 2.0 * lam ** (-s) * 2.0 * inverse_moment_closed_form(uniform(lam), 0.0, s)
        assert rep.ci_low <= truth <= rep.ci_high
        assert rep.provenance["n_boundary_bonds_plus"] == 2

    def test_subset_without_origin_contributes_zero(self):
        region = Region.box(1, 1)
        strategy = SubsetStrategy(kind="user_list",
                                  subsets=(Region([(-1,), (1,)]),))
        rep = theorem2_lhs(uniform(5.0), region, SpectralPoint(0.0),
                           CriterionConstants(s=0.3), strategy, 200, seed=1)
        assert rep.lhs == 0.0

    def test_exhaustive_dominates_any_member(self):
        region = Region.box(1, 1)
        c = CriterionConstants(s=0.3)
        full = theorem2_lhs(uniform(5.0), region, SpectralPoint(0.0), c,
                            SubsetStrategy(), 300, seed=2)
        only_region = theorem2_lhs(uniform(5.0), region, SpectralPoint(0.0), c,
                                   SubsetStrategy(kind="user_list", subsets=(region,)),
                                   300, seed=2)
        assert full.lhs >= only_region.lhs

    def test_exhaustive_dominates_subboxes(self):
        rng = np.random.default_rng(31)
        c = CriterionConstants(s=1.0 / 3.0)
        for trial in range(10):
            lo = -int(rng.integers(0, 4))
            hi = int(rng.integers(0, 4 + lo + 1))
            region = Region([(i,) for i in range(lo, hi + 1)])
            seed = int(rng.integers(1 << 30))
            exh = theorem2_lhs(uniform(8.0), region, SpectralPoint(0.0), c,
                               SubsetStrategy(kind="exhaustive"), 200, seed)
            sub = theorem2_lhs(uniform(8.0), region, SpectralPoint(0.0), c,
                               SubsetStrategy(kind="subboxes"), 200, seed)
            assert exh.lhs >= sub.lhs
            assert exh.rigor == RIGOR_FULL and sub.rigor == RIGOR_PARTIAL

    def test_exhaustive_cap(self):
        big = Region.box(1, 10)
        with pytest.raises(ValueError, match="exhaustive"):
            theorem2_lhs(uniform(5.0), big, SpectralPoint(0.0),
                         CriterionConstants(), SubsetStrategy(), 200, seed=0)

    def test_lambda_scaling(self):
        c = CriterionConstants(s=1.0 / 3.0)
        v10 = theorem2_lhs(uniform(10.0), Region.box(1, 0), SpectralPoint(0.0),
                           c, SubsetStrategy(), 500, seed=3).lhs
        v1e4 = theorem2_lhs(uniform(1e4), Region.box(1, 0), SpectralPoint(0.0),
                            c, SubsetStrategy(), 500, seed=3).lhs
        assert v10 / v1e4 > 10.0


class TestCertifyInterval:
    def test_single_energy_reduces_to_single_test(self):
        c = CriterionConstants(s=1.0 / 3.0)
        reports = certify_interval(uniform(100.0), Region.box(1, 0), [0.5], c,
                                   "thm1", 500, seed=11)
        direct = theorem1_lhs(uniform(100.0), Region.box(1, 0), SpectralPoint(0.5),
                              c, 500, seed=11)
        assert reports[0].to_json() == direct.to_json()

    def test_symmetric_energies_overlap(self):
        c = CriterionConstants(s=1.0 / 3.0)
        reports = certify_interval(uniform(20.0), Region.box(1, 0), [-1.0, 1.0],
                                   c, "thm1", 2000, seed=12)
        a, b = reports
        assert a.ci_low <= b.ci_high and b.ci_low <= a.ci_high

    def test_strong_coupling_grid_all_certified(self):
        c = CriterionConstants(s=1.0 / 3.0)
        reports = certify_interval(uniform(1000.0), Region.box(1, 0),
                                   [-1.0, 0.0, 1.0], c, "thm1", 2000, seed=13)
        assert all(r.verdict == VERDICT_CERTIFIED for r in reports)
        assert certified_intervals(reports, [-1.0, 0.0, 1.0]) == [(-1.0, 1.0)]

    def test_interval_extraction_with_gap(self):
        class Fake:
            def __init__(self, verdict):
                self.verdict = verdict

        reports = [Fake(VERDICT_CERTIFIED), Fake(VERDICT_NOT_CERTIFIED),
                   Fake(VERDICT_CERTIFIED), Fake(VERDICT_CERTIFIED)]
        assert certified_intervals(reports, [0, 1, 2, 3]) == [(0.0, 0.0), (2.0, 3.0)]

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            certify_interval(uniform(10.0), Region.box(1, 0), [],
                             CriterionConstants(), "thm1", 200, seed=0)


class TestReports:
    def test_json_canonical_and_parseable(self):
        c = CriterionConstants(s=0.3, source="unit-test")
        rep = theorem1_lhs(uniform(50.0), Region.box(1, 1), SpectralPoint(0.0),
                           c, 300, seed=14)
        blob = rep.to_json()
        parsed = json.loads(blob)
        assert parsed["constants"]["source"] == "unit-test"
        assert parsed["verdict"] == rep.verdict
        assert json.dumps(parsed, sort_keys=True) == blob

    def test_constants_validation(self):
        with pytest.raises(ValueError):
            CriterionConstants(C_s=-1.0)
        with pytest.raises(ValueError):
            CriterionConstants(s=0.0)
