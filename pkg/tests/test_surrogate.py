import numpy as np
import pytest

import augquant as aq
from augquant.errors import NumericalError
from augquant.surrogate import (AugmentationMoments, psd_factor, sample_surrogate_rows)

EXCHANGEABLE = np.array([[1.0, -0.5], [-0.5, 1.0]])


def _swap_setup(rho=-0.5, sigma=1.0):
    src = aq.gaussian_source([0.0, 0.0], sigma * sigma * np.array([[1.0, rho], [rho, 1.0]]))
    return aq.swap_family(), src


class TestExactMoments:
    def test_identity_family(self):
        cov = np.array([[2.0, 0.3], [0.3, 1.0]])
        src = aq.gaussian_source([0.5, -1.0], cov)
        m = aq.estimate_moments(aq.identity_family(2), src)
        assert np.allclose(m.mean_phi_x, [0.5, -1.0])
        assert np.allclose(m.sigma11, cov)
        assert np.allclose(m.sigma12, cov)
        assert np.allclose(m.mean_cond_var, 0.0, atol=1e-14)

    def test_swap_cross_covariance(self):
        fam, src = _swap_setup()
        m = aq.estimate_moments(fam, src)
        # (1 + rho) sigma^2 / 2 = 0.25 at rho = -0.5, sigma = 1
        assert np.allclose(m.sigma12, 0.25 * np.ones((2, 2)), atol=1e-14)
        assert np.allclose(m.sigma11, EXCHANGEABLE, atol=1e-14)

    def test_sixth_moment_standard_normal(self):
        src = aq.gaussian_source([0.0], [[1.0]])
        m = aq.estimate_moments(aq.identity_family(1), src)
        assert m.sixth_moment == pytest.approx(15.0, rel=1e-12)

    def test_monte_carlo_matches_exact(self):
        fam, src = _swap_setup()
        exact = aq.estimate_moments(fam, src)
        n_mc = 200_000
        mc = aq.estimate_moments(fam, src, num_samples=n_mc, seed=7, method="monte_carlo")

        # independent oracle for the entrywise SE: draw fresh transformed pairs
        # and take the SD of the cross products
        rng = np.random.default_rng(1234)
        x = src.sample(n_mc, rng)
        i1 = fam.sample_indices(n_mc, rng)
        i2 = fam.sample_indices(n_mc, rng)
        mats = np.array([t.matrix for t in fam.members])
        y1 = np.einsum("nij,nj->ni", mats[i1], x)
        y2 = np.einsum("nij,nj->ni", mats[i2], x)
        prods = (y1 - y1.mean(0))[:, :, None] * (y2 - y2.mean(0))[:, None, :]
        se = prods.std(axis=0) / np.sqrt(n_mc)
        assert np.all(np.abs(mc.sigma12 - exact.sigma12) <= 4 * se)
        assert abs(mc.sixth_moment - exact.sixth_moment) <= \
            4 * np.std(np.sum(y1 * y1, 1) ** 3) / np.sqrt(n_mc)

    def test_non_psd_estimate_carries_warning(self):
        # the swap family's cross-copy covariance is rank one, so any finite
        # sample pushes its zero eigenvalue slightly negative and the estimate
        # must say so
        fam, src = _swap_setup()
        m = aq.estimate_moments(fam, src, num_samples=4, seed=1, method="monte_carlo")
        assert m.provenance == "monte_carlo"
        assert m.warnings and "cross-copy covariance" in m.warnings[0]
        # a full-rank cross-covariance estimates cleanly
        clean = aq.estimate_moments(aq.sign_flip_family(1, 0.9),
                                    aq.gaussian_source([0.0], [[1.0]]),
                                    num_samples=50_000, seed=1, method="monte_carlo")
        assert clean.warnings == ()

    def test_sample_count_precondition(self):
        fam, src = _swap_setup()
        with pytest.raises(Exception):
            aq.estimate_moments(fam, src, num_samples=1, method="monte_carlo")

    def test_cross_covariance_equals_variance_of_conditional_mean(self):
        # two Monte Carlo routes to the same matrix agree within joint error
        fam, src = _swap_setup()
        n_mc = 100_000
        rng = np.random.default_rng(5)
        x = src.sample(n_mc, rng)
        mats = np.array([t.matrix for t in fam.members])
        i1, i2 = fam.sample_indices(n_mc, rng), fam.sample_indices(n_mc, rng)
        y1 = np.einsum("nij,nj->ni", mats[i1], x)
        y2 = np.einsum("nij,nj->ni", mats[i2], x)
        cross = np.cov(np.concatenate([y1, y2], 1), rowvar=False)[:2, 2:]
        cond_mean = x @ (0.5 * (mats[0] + mats[1])).T
        var_cond = np.cov(cond_mean, rowvar=False)
        prods = (y1 - y1.mean(0))[:, :, None] * (y2 - y2.mean(0))[:, None, :]
        se = prods.std(axis=0) / np.sqrt(n_mc)
        assert np.all(np.abs(cross - var_cond) <= 4 * 2 * se)


class TestCovarianceOrdering:
    @pytest.mark.parametrize("family,source", [
        (aq.swap_family(), aq.gaussian_source([0.0, 0.0], EXCHANGEABLE)),
        (aq.random_crop_family(2), aq.gaussian_source([1.0, 1.0], [[1.0, 0.5], [0.5, 1.0]])),
        (aq.cyclic_rotation_family(4), aq.gaussian_source([2.0] * 4, np.eye(4))),
        (aq.sign_flip_family(1, 0.7), aq.gaussian_source([0.2], [[1.5]])),
    ])
    def test_loewner_sandwich(self, family, source):
        m = aq.estimate_moments(family, source)
        w1 = np.linalg.eigvalsh(m.sigma11 - m.mean_var_given_map)
        w2 = np.linalg.eigvalsh(m.mean_var_given_map - m.sigma12)
        assert w1.min() >= -1e-8
        assert w2.min() >= -1e-8


class TestBuildSurrogate:
    def test_delta_zero_and_one(self):
        fam, src = _swap_setup()
        m = aq.estimate_moments(fam, src)
        s0 = aq.build_surrogate(m, n=10, k=3, delta=0.0)
        s1 = aq.build_surrogate(m, n=10, k=3, delta=1.0)
        assert np.allclose(s0.diag_block, m.sigma11)
        assert np.allclose(s1.diag_block, m.sigma12)
        assert np.allclose(s1.full_covariance(), np.tile(m.sigma12, (3, 3)))

    def test_delta_interpolation_exact(self):
        fam, src = _swap_setup()
        m = aq.estimate_moments(fam, src)
        c0 = aq.build_surrogate(m, 5, 2, 0.0).full_covariance()
        c1 = aq.build_surrogate(m, 5, 2, 1.0).full_covariance()
        for delta in (0.25, 0.5, 0.9):
            cd = aq.build_surrogate(m, 5, 2, delta).full_covariance()
            assert np.allclose(cd, (1 - delta) * c0 + delta * c1, atol=1e-14)

    def test_identity_family_equals_replicate_spec(self):
        src = aq.gaussian_source([0.3, -0.2], EXCHANGEABLE)
        m = aq.estimate_moments(aq.identity_family(2), src)
        for delta in (0.0, 0.5, 1.0):
            spec = aq.build_surrogate(m, 4, 3, delta)
            ref = aq.build_unaugmented_surrogate(src, 4, 3)
            assert np.allclose(spec.diag_block, ref.diag_block)
            assert np.allclose(spec.offdiag_block, ref.offdiag_block)
            assert np.allclose(spec.mean_block, ref.mean_block)

    def test_ordering_violation_rejected(self):
        bad = AugmentationMoments(
            mean_phi_x=np.zeros(1), sigma11=np.array([[1.0]]),
            sigma12=np.array([[2.0]]),  # exceeds the marginal variance
            mean_cond_var=np.array([[-1.0]]), mean_var_given_map=np.array([[1.0]]),
            sixth_moment=15.0, provenance="exact")
        with pytest.raises(NumericalError):
            aq.build_surrogate(bad, 2, 2, 0.0)


class TestSampleSurrogate:
    def test_perfect_replication_when_blocks_equal(self):
        src = aq.gaussian_source([1.0, 2.0], EXCHANGEABLE)
        spec = aq.build_unaugmented_surrogate(src, n=100, k=4)
        rows = aq.sample_surrogate(spec, seed=3).reshape(100, 4, 2)
        for j in range(1, 4):
            assert np.allclose(rows[:, j, :], rows[:, 0, :], atol=1e-12)

    def test_independent_slots_when_offdiag_zero(self):
        m = AugmentationMoments(
            mean_phi_x=np.zeros(1), sigma11=np.array([[1.0]]),
            sigma12=np.array([[0.0]]), mean_cond_var=np.array([[1.0]]),
            mean_var_given_map=np.array([[1.0]]), sixth_moment=15.0, provenance="exact")
        spec = aq.build_surrogate(m, n=50_000, k=3, delta=0.0)
        rows = aq.sample_surrogate(spec, seed=4).reshape(-1, 3)
        c = np.cov(rows, rowvar=False)
        se = np.sqrt((c[0, 0] * c[1, 1]) / rows.shape[0])
        off = c[~np.eye(3, dtype=bool)]
        assert np.all(np.abs(off) <= 4 * se)

    def test_full_covariance_reconstruction(self):
        fam, src = _swap_setup()
        m = aq.estimate_moments(fam, src)
        spec = aq.build_surrogate(m, n=1, k=3, delta=0.0)
        n_rows = 100_000
        rows = sample_surrogate_rows(spec, n_rows, seed=11)
        emp = np.cov(rows, rowvar=False)
        theory = spec.full_covariance()
        diag = np.diag(theory)
        se = np.sqrt((np.outer(diag, diag) + theory**2) / n_rows)
        assert np.all(np.abs(emp - theory) <= 4 * se)
        mean_se = np.sqrt(diag / n_rows)
        assert np.all(np.abs(rows.mean(axis=0) - spec.full_mean()) <= 4 * mean_se)

    def test_determinism(self):
        fam, src = _swap_setup()
        spec = aq.build_surrogate(aq.estimate_moments(fam, src), 20, 2, 0.5)
        assert aq.sample_surrogate(spec, 9).tobytes() == aq.sample_surrogate(spec, 9).tobytes()


class TestRepeatedSurrogate:
    def test_point_mass_family(self):
        t = aq.affine([[2.0, 0.0], [0.0, 0.5]], [1.0, -1.0])
        fam = aq.finite_uniform_family([t])
        src = aq.gaussian_source([0.0, 0.0], np.eye(2))
        rows = aq.sample_repeated_surrogate(fam, src, n=50_000, k=2, seed=6).reshape(-1, 2, 2)
        # both slots carry the same map, hence identical values
        assert np.allclose(rows[:, 0, :], rows[:, 1, :])
        got_mean = rows[:, 0, :].mean(axis=0)
        assert np.all(np.abs(got_mean - [1.0, -1.0]) <= 4 * np.array([2.0, 0.5]) / np.sqrt(50_000))

    def test_unconditional_slot_mean_matches_tower_property(self):
        fam, src = _swap_setup()
        src = aq.gaussian_source([0.5, -0.5], EXCHANGEABLE)
        m = aq.estimate_moments(fam, src)
        vals = []
        for rep in range(200):
            rows = aq.sample_repeated_surrogate(fam, src, n=50, k=3, seed=rep)
            vals.append(rows.reshape(-1, 2).mean(axis=0))
        vals = np.asarray(vals)
        se = vals.std(axis=0, ddof=1) / np.sqrt(len(vals))
        assert np.all(np.abs(vals.mean(axis=0) - m.mean_phi_x) <= 4 * se)

    def test_exchangeable_source_sum_variance_matches_iid(self):
        # identity/swap on an exchangeable source: the conditional law of the
        # slot sum does not depend on the drawn maps
        fam, src = _swap_setup()
        k, n = 3, 40
        sums_rep, sums_iid = [], []
        spec = aq.build_surrogate(aq.estimate_moments(fam, src), n, k, 0.0)
        for rep in range(400):
            r1 = aq.sample_repeated_surrogate(fam, src, n, k, seed=rep)
            sums_rep.append(r1.sum())
            sums_iid.append(sample_surrogate_rows(spec, n, seed=10_000 + rep).sum())
        v1, v2 = np.var(sums_rep, ddof=1), np.var(sums_iid, ddof=1)
        se = np.sqrt(2.0 / 400) * max(v1, v2)
        assert abs(v1 - v2) <= 4 * np.sqrt(2) * se


class TestPsdPolicy:
    def test_small_negative_eigenvalue_tolerated(self):
        m = np.array([[1.0, 0.0], [0.0, -1e-9]])
        fac = psd_factor(m, "test")
        assert np.allclose(fac @ fac.T, np.array([[1.0, 0.0], [0.0, 0.0]]), atol=1e-8)

    def test_large_violation_fails(self):
        with pytest.raises(NumericalError):
            psd_factor(np.array([[1.0, 0.0], [0.0, -1e-3]]), "test")

    def test_zero_matrix_factors(self):
        fac = psd_factor(np.zeros((3, 3)), "test")
        assert np.allclose(fac, 0.0)


def test_spec_round_trip_through_text():
    from augquant.config import surrogate_spec_from_text, surrogate_spec_text
    fam, src = _swap_setup()
    spec = aq.build_surrogate(aq.estimate_moments(fam, src), 7, 3, 0.25)
    back = surrogate_spec_from_text(surrogate_spec_text(spec))
    assert back.n == spec.n and back.k == spec.k and back.d == spec.d
    assert back.delta == spec.delta and back.mode == spec.mode
    assert np.array_equal(back.mean_block, spec.mean_block)
    assert np.array_equal(back.diag_block, spec.diag_block)
    assert np.array_equal(back.offdiag_block, spec.offdiag_block)
