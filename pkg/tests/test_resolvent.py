import numpy as np
import pytest
from scipy.special import eval_chebyu

from anderson_certify.disorder import DisorderModel, sample_realization
from anderson_certify.hamiltonian import assemble
from anderson_certify.lattice import Region
from anderson_certify.resolvent import (
    SolverError,
    SpectralPoint,
    green_1d_transfer,
    green_entry,
    green_row,
    solve_green_column,
)

from helpers import fixed_realization, random_subregion, zero_potential_model


def chain(n):
    return Region([(i,) for i in range(n)])


def chain_sample(n, model, seed):
    region = chain(n)
    return assemble(region, sample_realization(model, region, seed))


class TestGreenEntry:
    def test_single_site(self):
        region = Region.box(1, 0)
        sample = assemble(region, fixed_realization(region, [0.8]))
        for z in (SpectralPoint(0.3), SpectralPoint(-1.0, 0.5)):
            g = green_entry(sample, (0,), (0,), z)
            assert g == pytest.approx(1.0 / (0.8 - z.z), rel=1e-13)

    def test_two_site_free_chain(self):
        # dense 2x2 inverse oracle at z = i
        sample = chain_sample(2, zero_potential_model(), 0)
        g = green_entry(sample, (0,), (1,), SpectralPoint(0.0, 1.0))
        oracle = np.linalg.inv(sample.dense().astype(complex)
                               - 1j * np.eye(2))[0, 1]
        assert g == pytest.approx(oracle, rel=1e-12)
        assert g == pytest.approx(-0.5, rel=1e-12)

    def test_complex_symmetry_2d(self):
        model = DisorderModel.uniform(coupling=2.0)
        region = Region.box(2, 2)
        for seed in range(5):
            sample = assemble(region, sample_realization(model, region, seed))
            z = SpectralPoint(0.4, 0.2)
            gxy = green_entry(sample, (1, -1), (-2, 0), z)
            gyx = green_entry(sample, (-2, 0), (1, -1), z)
            assert abs(gxy - gyx) < 1e-12 * max(1.0, abs(gxy))

    def test_outside_region_raises(self):
        sample = chain_sample(3, DisorderModel.uniform(), 0)
        with pytest.raises(ValueError):
            green_entry(sample, (0,), (9,), SpectralPoint(0.0))


class TestGreenRow:
    def test_single_site_row(self):
        region = Region.box(1, 0)
        sample = assemble(region, fixed_realization(region, [0.8]))
        row = green_row(sample, (0,), SpectralPoint(0.1))
        assert set(row) == {(0,)}
        assert row[(0,)] == pytest.approx(green_entry(sample, (0,), (0,), SpectralPoint(0.1)))

    def test_row_matches_entries(self):
        model = DisorderModel.uniform(coupling=1.5)
        region = Region.box(2, 1)
        sample = assemble(region, sample_realization(model, region, 3))
        z = SpectralPoint(0.2, 0.1)
        row = green_row(sample, (0, 0), z)
        for site in region.sites:
            assert abs(row[site] - green_entry(sample, (0, 0), site, z)) < 1e-12

    def test_row_vs_dense_inverse_2d(self):
        # 10x10 two-dimensional box against the dense full inverse.
        model = DisorderModel.uniform(coupling=2.0)
        region = Region([(i, j) for i in range(10) for j in range(10)])
        sample = assemble(region, sample_realization(model, region, 9))
        z = SpectralPoint(0.3, 0.15)
        inv = np.linalg.inv(sample.dense().astype(complex) - z.z * np.eye(100))
        row = green_row(sample, (4, 5), z)
        k = region.site_index((4, 5))
        err = max(abs(row[s] - inv[k, region.site_index(s)]) for s in region.sites)
        assert err < 1e-10


class TestTransferOracle:
    def test_two_site_matches_inverse(self):
        sample = chain_sample(2, DisorderModel.uniform(coupling=3.0), 5)
        z = SpectralPoint(0.7, 0.4)
        inv = np.linalg.inv(sample.dense().astype(complex) - z.z * np.eye(2))
        assert green_1d_transfer(sample, (0,), (1,), z) == pytest.approx(inv[0, 1], rel=1e-12)

    def test_matches_solver_on_random_chains(self):
        rng = np.random.default_rng(21)
        for trial in range(20):
            lam = float(rng.uniform(0.5, 20.0))
            e = float(rng.uniform(-4.0, 4.0))
            eta = float(rng.choice([0.0, rng.uniform(-1.0, 1.0)]))
            sample = chain_sample(50, DisorderModel.uniform(coupling=lam), 300 + trial)
            z = SpectralPoint(e, eta)
            x, y = (int(rng.integers(0, 50)),), (int(rng.integers(0, 50)),)
            col, _ = solve_green_column(sample, x, z.z)
            expected = complex(col[sample.region.site_index(y)])
            got = green_1d_transfer(sample, x, y, z)
            assert abs(got - expected) <= 1e-8 * abs(expected)

    def test_free_chain_chebyshev_closed_form(self):
        # V = 0, z real outside [-2, 2]: minors are Chebyshev U_k(-z/2).
        n = 12
        sample = chain_sample(n, zero_potential_model(), 0)
        for z in (-3.0, 2.5, 4.0):
            w = -z / 2.0
            for (i, j) in [(0, 0), (1, 7), (3, 11)]:
                expected = (eval_chebyu(i, w) * eval_chebyu(n - 1 - j, w)
                            / eval_chebyu(n, w))
                got = green_1d_transfer(sample, (i,), (j,), SpectralPoint(z))
                assert got == pytest.approx(expected, rel=1e-10)

    def test_long_chain_no_overflow(self):
        # log rescaling keeps the recurrence finite at large |z|.
        sample = chain_sample(2000, DisorderModel.uniform(coupling=1.0), 1)
        g = green_1d_transfer(sample, (0,), (1999,), SpectralPoint(50.0))
        assert np.isfinite(abs(g))
        assert abs(g) < 1e-300 or abs(g) == 0.0  # decays below double range edge

    def test_requires_chain(self):
        region = Region.box(2, 1)
        sample = assemble(region, sample_realization(DisorderModel.uniform(), region, 0))
        with pytest.raises(ValueError):
            green_1d_transfer(sample, (0, 0), (1, 0), SpectralPoint(0.0))


class TestContracts:
    def test_herglotz(self):
        # eta > 0 implies Im G(x, x) > 0, strictly, across many samples.
        model = DisorderModel.uniform(coupling=2.0)
        rng = np.random.default_rng(31)
        violations = 0
        for seed in range(1000):
            n = int(rng.integers(2, 12))
            sample = chain_sample(n, model, seed)
            z = SpectralPoint(float(rng.uniform(-3, 3)), float(rng.uniform(0.05, 1.0)))
            x = (int(rng.integers(0, n)),)
            if green_entry(sample, x, x, z).imag <= 0.0:
                violations += 1
        assert violations == 0

    def test_norm_bound(self):
        model = DisorderModel.uniform(coupling=2.0)
        rng = np.random.default_rng(32)
        for seed in range(100):
            n = int(rng.integers(2, 20))
            sample = chain_sample(n, model, seed)
            eta = float(rng.uniform(0.05, 2.0)) * float(rng.choice([-1.0, 1.0]))
            z = SpectralPoint(float(rng.uniform(-3, 3)), eta)
            row = green_row(sample, (0,), z)
            assert max(abs(v) for v in row.values()) <= 1.0 / abs(eta) + 1e-12

    def test_first_resolvent_identity(self):
        model = DisorderModel.uniform(coupling=1.5)
        region = Region.box(2, 2)
        sample = assemble(region, sample_realization(model, region, 4))
        z1, z2 = complex(0.3, 0.4), complex(-0.2, 0.7)
        n = sample.n_sites
        h = sample.dense().astype(complex)
        g1 = np.linalg.solve(h - z1 * np.eye(n), np.eye(n))
        x = (0, 0)
        col1, _ = solve_green_column(sample, x, z1)
        col2, _ = solve_green_column(sample, x, z2)
        # G(z1) - G(z2) = (z1 - z2) G(z1) G(z2), applied to e_x
        lhs = col1 - col2
        rhs = (z1 - z2) * (g1 @ col2)
        assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_dense_inverse_equivalence_small_regions(self):
        rng = np.random.default_rng(33)
        model = DisorderModel.uniform(coupling=2.0)
        for trial in range(20):
            d = int(rng.choice([1, 2]))
            region = random_subregion(rng, d, 4 if d == 2 else 40, keep=0.6,
                                      must_contain=(0,) * d)
            if len(region) > 100:
                continue
            sample = assemble(region, sample_realization(model, region, trial))
            z = SpectralPoint(float(rng.uniform(-2, 2)), float(rng.uniform(0.05, 0.5)))
            inv = np.linalg.inv(sample.dense().astype(complex)
                                - z.z * np.eye(len(region)))
            x = region.sites[int(rng.integers(len(region)))]
            col, _ = solve_green_column(sample, x, z.z)
            k = region.site_index(x)
            assert np.max(np.abs(col - inv[:, k])) < 1e-10

    def test_splu_path(self):
        # Above the dense threshold but under the direct limit: sparse LU.
        model = DisorderModel.uniform(coupling=2.0)
        region = Region([(i, j) for i in range(21) for j in range(21)])
        assert len(region) == 441
        sample = assemble(region, sample_realization(model, region, 2))
        z = SpectralPoint(0.5, 0.3)
        col, cond = solve_green_column(sample, (10, 10), z.z)
        inv_col = np.linalg.solve(
            sample.dense().astype(complex) - z.z * np.eye(441),
            np.eye(441)[:, region.site_index((10, 10))])
        assert np.max(np.abs(col - inv_col)) < 1e-9
        assert np.isfinite(cond) and cond > 1.0

    def test_iterative_path(self):
        model = DisorderModel.uniform(coupling=2.0)
        region = Region([(i, j) for i in range(8) for j in range(8)])
        sample = assemble(region, sample_realization(model, region, 3))
        z = SpectralPoint(0.2, 0.4)
        direct, _ = solve_green_column(sample, (3, 3), z.z)
        iterative, _ = solve_green_column(sample, (3, 3), z.z, direct_max_sites=10)
        assert np.max(np.abs(direct - iterative)) < 1e-8

    def test_singular_system_raises(self):
        sample = chain_sample(2, zero_potential_model(), 0)
        # H = [[0,-1],[-1,0]]; z = 1 is an eigenvalue: exactly singular.
        with pytest.raises(SolverError):
            solve_green_column(sample, (0,), 1.0 + 0.0j)

    def test_eta_zero_real_dtype(self):
        sample = chain_sample(5, DisorderModel.uniform(coupling=3.0), 7)
        col, _ = solve_green_column(sample, (2,), complex(0.4, 0.0))
        assert not np.iscomplexobj(col)


def test_spectral_point_validation():
    with pytest.raises(ValueError):
        SpectralPoint(np.inf, 0.0)
    p = SpectralPoint(1.5, -0.25)
    assert p.z == complex(1.5, -0.25)
    assert not p.is_real
    assert SpectralPoint(0.0, 0.0).is_real
