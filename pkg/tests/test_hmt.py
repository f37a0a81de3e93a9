import json

import numpy as np
import pytest

from conftest import enumerate_posteriors, random_theta, random_tree
from wavecomplex.dwt import WaveletTree
from wavecomplex.hmt import (
    FitConfig,
    HmtParams,
    e_step,
    fit,
    init_params,
    load_model,
    Posteriors,
    m_step,
    sample_tree,
    variance_floors,
)


def _theta(eps, variances, root=(0.5, 0.5), J=None):
    eps = np.asarray(eps, dtype=float)
    variances = np.asarray(variances, dtype=float)
    J = J or variances.shape[0]
    return HmtParams(
        np.asarray(root, dtype=float),
        np.broadcast_to(eps, (J - 1, *eps.shape)).copy(),
        np.zeros_like(variances),
        variances,
    )


class TestParams:
    def test_shapes(self, rng):
        theta = random_theta(rng, 5, M=3)
        assert theta.J == 5 and theta.M == 3
        assert theta.transition(1).shape == (3, 3)
        with pytest.raises(IndexError):
            theta.transition(0)

    def test_read_only(self, rng):
        theta = random_theta(rng, 3)
        with pytest.raises(ValueError):
            theta.means[0, 0] = 1.0

    def test_validate_rejects_bad_rows(self):
        theta = _theta([[0.7, 0.4], [0.5, 0.5]], np.ones((3, 2)))
        with pytest.raises(ValueError):
            theta.validate()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            HmtParams(np.ones(2) / 2, np.full((1, 2, 2), 0.5), np.zeros((3, 2)), np.ones((3, 2)))

    def test_dict_round_trip(self, rng):
        theta = random_theta(rng, 4)
        back = HmtParams.from_dict(json.loads(json.dumps(theta.to_dict())))
        for name in ("root_pmf", "trans", "means", "variances"):
            assert getattr(back, name).tobytes() == getattr(theta, name).tobytes()

    def test_permuted(self, rng):
        theta = random_theta(rng, 3)
        p = theta.permuted([1, 0])
        assert p.root_pmf[0] == theta.root_pmf[1]
        assert p.trans[0][0, 1] == theta.trans[0][1, 0]
        assert p.variances[2, 0] == theta.variances[2, 1]


class TestEStep:
    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("M", [2, 3])
    def test_matches_enumeration(self, seed, M):
        rng = np.random.default_rng(seed)
        J = 3 if M == 3 else 4
        theta = random_theta(rng, J, M=M, zero_rows=seed % 2 == 1)
        tree = random_tree(rng, J)
        gamma, xi, loglik = enumerate_posteriors(tree, theta)
        post = e_step(tree, theta)
        assert post.log_likelihood == pytest.approx(loglik, abs=1e-10)
        for i in range(1, 2 ** J):
            np.testing.assert_allclose(post.node_gamma(i), gamma[i], atol=1e-10)
            if i > 1:
                np.testing.assert_allclose(post.node_xi(i), xi[i], atol=1e-10)

    def test_posterior_invariants(self, rng):
        theta = random_theta(rng, 8)
        post = e_step(random_tree(rng, 8), theta)
        for j in range(8):
            np.testing.assert_allclose(post.gamma[j].sum(axis=1), 1.0, atol=1e-12)
            if j:
                np.testing.assert_allclose(post.xi[j].sum(axis=(1, 2)), 1.0, atol=1e-12)
                # child marginal of xi is the child's gamma
                np.testing.assert_allclose(post.xi[j].sum(axis=1), post.gamma[j], atol=1e-12)
                # parent marginal of xi is the parent's gamma
                parents = np.repeat(post.gamma[j - 1], 2, axis=0)
                np.testing.assert_allclose(post.xi[j].sum(axis=2), parents, atol=1e-12)

    def test_identity_transitions_lock_the_tree(self, rng):
        theta = _theta(np.eye(2), [[0.5, 4.0]] * 5, root=(0.3, 0.7))
        post = e_step(random_tree(rng, 5), theta)
        root = post.gamma[0][0]
        for g in post.gamma[1:]:
            np.testing.assert_allclose(g, np.broadcast_to(root, g.shape), atol=1e-12)

    def test_identical_states_return_prior(self, rng):
        theta = _theta([[0.8, 0.2], [0.4, 0.6]], np.ones((4, 2)), root=(0.25, 0.75))
        tree = random_tree(rng, 4)
        post = e_step(tree, theta)
        prior = np.array([0.25, 0.75])
        for j, g in enumerate(post.gamma):
            np.testing.assert_allclose(g, np.broadcast_to(prior, g.shape), atol=1e-12)
            if j < 3:
                prior = prior @ theta.trans[j]
        d = tree.flat()[1:]
        expected = -0.5 * np.sum(d ** 2) - 0.5 * d.size * np.log(2 * np.pi)
        assert post.log_likelihood == pytest.approx(expected, rel=1e-12)

    def test_extreme_coefficients_stay_finite(self, rng):
        theta = random_theta(rng, 6)
        tree = random_tree(rng, 6, scale=1e4)
        post = e_step(tree, theta)
        assert np.isfinite(post.log_likelihood)
        assert all(np.all(np.isfinite(g)) for g in post.gamma)

    def test_scale_mismatch(self, rng):
        with pytest.raises(ValueError):
            e_step(random_tree(rng, 4), random_theta(rng, 5))


class TestMStep:
    def test_fixed_point_of_perfect_posteriors(self):
        J = 3
        tree = WaveletTree(J, 0.0, [np.array([0.1]), np.array([3.0, -0.2]), np.array([1, -1, 2, -2.0])])
        M = 2
        # hard assignments: every node in state 1
        gamma = [np.tile([0.0, 1.0], (2 ** j, 1)) for j in range(J)]
        xi = [None] + [np.tile([[0.0, 0.0], [0.0, 1.0]], (2 ** j, 1, 1)) for j in range(1, J)]
        theta = m_step(tree, Posteriors(gamma, xi, 0.0), FitConfig(M=M))
        np.testing.assert_array_equal(theta.root_pmf, [0.0, 1.0])
        # state 0 has no parent mass: uniform row
        np.testing.assert_array_equal(theta.trans[0][0], [0.5, 0.5])
        np.testing.assert_array_equal(theta.trans[0][1], [0.0, 1.0])
        assert theta.means[1, 1] == pytest.approx(1.4)
        assert theta.variances[1, 1] == pytest.approx(2.56)
        # the empty state falls back to the whole scale around its mean
        assert theta.means[2, 0] == pytest.approx(0.0)
        assert theta.variances[2, 0] == pytest.approx(2.5)

    def test_zero_mean(self, rng):
        tree = random_tree(rng, 5)
        theta = random_theta(rng, 5)
        new = m_step(tree, e_step(tree, theta), FitConfig(zero_mean=True))
        assert np.all(new.means == 0.0)
        new.validate()

    def test_variance_floor(self):
        tree = WaveletTree(3, 0.0, [np.array([1.0]), np.array([2.0, 2.0]), np.array([0.0, 0.0, 5.0, 5.0])])
        floors = variance_floors(tree, FitConfig())
        assert floors[1] == 1e-12
        assert floors[2] == pytest.approx(1e-6 * 6.25)
        theta = fit(tree, FitConfig(max_iter=5)).params
        assert np.all(theta.variances[1] >= 1e-12)
        assert np.all(theta.variances[2] >= floors[2])

    def test_output_is_valid(self, rng):
        tree = random_tree(rng, 7)
        theta = m_step(tree, e_step(tree, random_theta(rng, 7, M=3)), FitConfig(M=3))
        theta.validate()


class TestInit:
    def test_two_group_labels(self):
        fine = np.array([0.1, -0.1, 0.2, -0.2, 0.1, -0.1, 8.0, -9.0])
        tree = WaveletTree(4, 0.0, [np.array([4.0]), np.array([0.1, 5.0]), np.array([0.1, -0.2, 6.0, 0.1]), fine])
        theta = init_params(tree, FitConfig())
        theta.validate()
        # the two largest magnitudes form the high-variance group
        assert theta.variances[-1, 1] == pytest.approx(72.25)
        assert theta.means[-1, 1] == pytest.approx(-0.5)

    def test_constant_scale_starts_in_state_zero(self):
        J = 5
        details = [np.full(2 ** j, 0.0) for j in range(J)]
        details[-1] = np.random.default_rng(0).normal(size=16)
        theta = init_params(WaveletTree(J, 0.0, details), FitConfig())
        theta.validate()
        for j in range(1, J - 1):
            # state 1 never observed at these scales: only pseudo-counts reach it
            assert theta.trans[j - 1][0, 0] > theta.trans[j - 1][0, 1]

    def test_restarts_are_deterministic(self, rng):
        tree = random_tree(rng, 6)
        cfg = FitConfig(seed=7)
        a, b = init_params(tree, cfg, 3), init_params(tree, cfg, 3)
        assert a.variances.tobytes() == b.variances.tobytes()

    def test_needs_two_scales(self):
        with pytest.raises(ValueError):
            init_params(WaveletTree(1, 0.0, [np.array([1.0])]), FitConfig())


class TestFit:
    def test_monotone_likelihood(self, rng):
        theta = _theta([[0.9, 0.1], [0.2, 0.8]], [[0.3, 9.0]] * 8)
        tree, _ = sample_tree(theta, rng)
        res = fit(tree, FitConfig(max_iter=60, rel_tol=1e-12))
        assert np.all(np.diff(res.trace) >= -1e-8 * np.abs(res.trace[:-1]))

    def test_infinite_tolerance_is_one_iteration(self, rng):
        tree = random_tree(rng, 6)
        cfg = FitConfig(rel_tol=np.inf)
        res = fit(tree, cfg)
        assert len(res.trace) == 2
        assert res.converged
        theta0 = init_params(tree, cfg)
        expected = m_step(tree, e_step(tree, theta0), cfg)
        perm = np.argsort(expected.variances[-1], kind="stable")
        np.testing.assert_allclose(res.params.variances, expected.variances[:, perm])

    def test_canonical_labels(self, rng):
        res = fit(random_tree(rng, 7), FitConfig(restarts=3))
        assert np.all(np.diff(res.params.variances[-1]) >= 0)

    def test_posteriors_match_params(self, rng):
        tree = random_tree(rng, 6)
        res = fit(tree, FitConfig(restarts=2))
        again = e_step(tree, res.params)
        for a, b in zip(again.gamma, res.posteriors.gamma):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_recovers_planted_model(self):
        true = _theta([[0.9, 0.1], [0.1, 0.9]], [[0.25, 16.0]] * 11)
        tree, states = sample_tree(true, np.random.default_rng(2))
        est = fit(tree, FitConfig(max_iter=300, rel_tol=1e-9, zero_mean=True)).params
        for j in range(8, 11):
            d, s = tree.details[j], states[j]
            realized = [np.mean(d[s == m] ** 2) for m in (0, 1)]
            np.testing.assert_allclose(est.variances[j], realized, rtol=0.1)
            np.testing.assert_allclose(np.diag(est.trans[j - 1]), [0.9, 0.9], atol=0.06)

    def test_restarts_never_hurt(self, rng):
        tree = random_tree(rng, 7)
        one = fit(tree, FitConfig(restarts=1))
        many = fit(tree, FitConfig(restarts=4))
        assert many.log_likelihood >= one.log_likelihood - 1e-9

    def test_model_json_round_trip(self, rng):
        res = fit(random_tree(rng, 5), FitConfig(zero_mean=True, seed=3))
        theta, loglik, cfg = load_model(res.to_json())
        assert loglik == res.log_likelihood
        assert cfg == res.config
        assert theta.trans.tobytes() == res.params.trans.tobytes()


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [dict(M=0), dict(max_iter=0), dict(rel_tol=0.0), dict(restarts=0), dict(variance_floor_abs=0.0)],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)


def test_sample_tree_statistics():
    theta = _theta([[1.0, 0.0], [0.0, 1.0]], [[1.0, 100.0]] * 10, root=(0.0, 1.0))
    tree, states = sample_tree(theta, np.random.default_rng(0))
    assert all(np.all(s == 1) for s in states)
    assert np.var(tree.details[-1]) == pytest.approx(100.0, rel=0.15)
