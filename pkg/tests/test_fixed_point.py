import numpy as np
import pytest

from miocp import (GaussianPolicy, GaussianPrior, ImageMismatch,
                   InvalidArgument, NonInvertibleA, ProblemSpec,
                   gradient_reduced, kl_gaussian, objective_reduced,
                   policy_from_prior, prior_from_policy, propagate_moments)

from helpers import prior_of, random_prior, random_spec, s1_spec


def rank_of(M, tol=1e-10):
    if not np.any(M):
        return 0
    w = np.linalg.eigvalsh(M)
    return int(np.sum(w > tol * (1 + w[-1])))


def test_scalar_policy_oracle():
    policy, resid, _ = policy_from_prior(s1_spec(), prior_of(0.25))
    assert policy.Sigma[0][0, 0] == pytest.approx(0.125, abs=1e-12)
    assert policy.P[0][0, 0] == pytest.approx(-0.25, abs=1e-12)
    assert policy.q[0][0] == 0.0
    assert np.array_equal(resid.r[-1], np.zeros(1))


def test_zero_covariance_stage_gives_feedforward():
    spec = s1_spec()
    mu = np.array([0.7])
    prior = GaussianPrior(mu=[mu], Sigma=[np.zeros((1, 1))])
    policy, _, _ = policy_from_prior(spec, prior)
    assert np.array_equal(policy.Sigma[0], np.zeros((1, 1)))
    assert np.array_equal(policy.P[0], np.zeros((1, 1)))
    assert policy.q[0][0] == pytest.approx(0.7, abs=1e-12)


def test_nonzero_mean_offsets_oracle():
    # one-stage scalar case with prior mean mu: the backward offset is
    # -(2/3) mu and the policy offset mu/2
    mu = 0.8
    prior = GaussianPrior(mu=[np.array([mu])], Sigma=[np.array([[0.25]])])
    policy, resid, _ = policy_from_prior(s1_spec(), prior)
    assert resid.r[0][0] == pytest.approx(-2.0 * mu / 3.0, abs=1e-12)
    assert resid.r[1][0] == 0.0
    assert policy.q[0][0] == pytest.approx(0.5 * mu, abs=1e-12)
    assert policy.P[0][0, 0] == pytest.approx(-0.25, abs=1e-12)


def test_nonzero_mean_requires_invertible_dynamics():
    spec = ProblemSpec.constant(T=1, A=0.0, B=1.0, R=1.0, F=1.0,
                                Sigma_w=0.1, Sigma_x_ini=1.0, epsilon=0.5)
    prior = GaussianPrior(mu=[np.array([1.0])], Sigma=[np.array([[1.0]])])
    with pytest.raises(NonInvertibleA) as exc:
        policy_from_prior(spec, prior)
    assert exc.value.stage == 0
    # identical but zero-mean prior never needs the inverse
    policy_from_prior(spec, GaussianPrior.zero_mean([np.array([[1.0]])]))


def test_policy_satisfies_image_condition_on_singular_priors():
    rng = np.random.default_rng(17)
    for _ in range(20):
        spec = random_spec(rng)
        prior = random_prior(rng, spec, allow_singular=True)
        policy, _, _ = policy_from_prior(spec, prior)
        for k in range(spec.T):
            assert rank_of(policy.Sigma[k]) == rank_of(prior.Sigma[k])


def test_moment_oracle_and_zero_policy_open_loop():
    spec = s1_spec()
    policy, _, _ = policy_from_prior(spec, prior_of(0.25))
    moments = propagate_moments(spec, policy)
    assert np.array_equal(moments.mu_x[0], np.zeros(1))
    assert moments.Sigma_x[0][0, 0] == 2.0
    assert moments.Sigma_x[1][0, 0] == pytest.approx(1.35, abs=1e-12)

    zero_policy = GaussianPolicy(P=[np.zeros((1, 1))], q=[np.zeros(1)],
                                 Sigma=[np.zeros((1, 1))])
    open_loop = propagate_moments(spec, zero_policy)
    assert open_loop.Sigma_x[1][0, 0] == pytest.approx(2.1, abs=1e-12)
    assert all(not np.any(mu) for mu in open_loop.mu_x)


def test_prior_update_oracle_is_fixed_point():
    spec = s1_spec()
    policy, _, _ = policy_from_prior(spec, prior_of(0.25))
    updated = prior_from_policy(spec, policy, propagate_moments(spec, policy))
    assert updated.Sigma[0][0, 0] == pytest.approx(0.25, abs=1e-12)
    assert updated.is_zero_mean


def test_prior_update_zero_gain_returns_policy_marginal():
    spec = s1_spec()
    policy = GaussianPolicy(P=[np.zeros((1, 1))], q=[np.array([0.3])],
                            Sigma=[np.array([[0.4]])])
    updated = prior_from_policy(spec, policy, propagate_moments(spec, policy))
    assert updated.mu[0][0] == pytest.approx(0.3)
    assert updated.Sigma[0][0, 0] == pytest.approx(0.4)


def test_state_feedback_term_enters_prior_covariance():
    # the update adds the pushed-forward state covariance on top of the
    # policy covariance; a pure-feedback policy (zero covariance, nonzero
    # gain) sits outside the admissible class and is rejected upstream
    spec = s1_spec()
    policy = GaussianPolicy(P=[np.array([[-0.5]])], q=[np.zeros(1)],
                            Sigma=[np.array([[1e-6]])])
    updated = prior_from_policy(spec, policy, propagate_moments(spec, policy))
    assert updated.Sigma[0][0, 0] == pytest.approx(1e-6 + 0.25 * 2.0, abs=1e-12)
    with pytest.raises(InvalidArgument):
        GaussianPolicy(P=[np.array([[-0.5]])], q=[np.zeros(1)],
                       Sigma=[np.zeros((1, 1))])


def test_composition_fixed_point_tight():
    spec = s1_spec()
    prior = prior_of(0.25)
    policy, _, _ = policy_from_prior(spec, prior)
    updated = prior_from_policy(spec, policy, propagate_moments(spec, policy))
    assert abs(updated.Sigma[0][0, 0] - 0.25) <= 1e-12


def test_image_rank_propagates_through_full_alternation():
    rng = np.random.default_rng(29)
    for _ in range(20):
        spec = random_spec(rng)
        prior = random_prior(rng, spec, allow_singular=True)
        policy, _, _ = policy_from_prior(spec, prior)
        updated = prior_from_policy(spec, policy, propagate_moments(spec, policy))
        for k in range(spec.T):
            r = rank_of(prior.Sigma[k])
            assert rank_of(policy.Sigma[k]) == r
            assert rank_of(updated.Sigma[k]) == r


def test_objective_scalar_oracles():
    spec = s1_spec()
    assert objective_reduced(spec, prior_of(0.0)) == pytest.approx(1.05, abs=1e-12)
    expected = 0.5 * (0.75 * 2 + 0.5 * np.log(2.0) + 0.1)
    assert objective_reduced(spec, prior_of(0.25)) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(0.97329, abs=1e-5)


def test_objective_rejects_nonzero_means():
    prior = GaussianPrior(mu=[np.array([1.0])], Sigma=[np.array([[1.0]])])
    with pytest.raises(InvalidArgument):
        objective_reduced(s1_spec(), prior)


def test_half_step_descent():
    rng = np.random.default_rng(41)
    for _ in range(30):
        spec = random_spec(rng)
        prior = random_prior(rng, spec, allow_singular=True)
        before = objective_reduced(spec, prior)
        policy, _, _ = policy_from_prior(spec, prior)
        updated = prior_from_policy(spec, policy, propagate_moments(spec, policy))
        after = objective_reduced(spec, updated)
        assert after <= before + 1e-10


def test_coercivity_probe():
    rng = np.random.default_rng(53)
    for _ in range(10):
        spec = random_spec(rng)
        prior = random_prior(rng, spec, allow_singular=False)
        k = int(rng.integers(0, spec.T))
        values = []
        for scale in (1e2, 1e4, 1e6):
            sigmas = [S.copy() for S in prior.Sigma]
            sigmas[k] = scale * sigmas[k]
            values.append(objective_reduced(spec, GaussianPrior.zero_mean(sigmas)))
        assert values[0] < values[1] < values[2]


def test_gradient_scalar_oracles():
    spec = s1_spec()
    g_star = gradient_reduced(spec, prior_of(0.25))
    assert g_star.Jk_prime[0][0, 0] == pytest.approx(0.0, abs=1e-12)
    g_zero = gradient_reduced(spec, prior_of(0.0))
    assert g_zero.Jk_prime[0][0, 0] == pytest.approx(-1.0, abs=1e-12)
    assert g_zero.E[0][0, 0] == pytest.approx(0.5, abs=1e-12)
    assert g_zero.L[0][0, 0] == pytest.approx(4.0, abs=1e-12)


def test_gradient_structure():
    rng = np.random.default_rng(61)
    for _ in range(20):
        spec = random_spec(rng)
        prior = random_prior(rng, spec, allow_singular=True)
        g = gradient_reduced(spec, prior)
        sol_scale = 1e-10
        for k in range(spec.T):
            Jp = g.Jk_prime[k]
            assert np.allclose(Jp, Jp.T, atol=sol_scale * (1 + np.abs(Jp).max()))
            assert np.all(np.linalg.eigvalsh(g.L[k]) > 0)
            prod = g.L[k] @ (prior.Sigma[k] + _sigma_q(spec, prior, k))
            assert np.allclose(prod, np.eye(spec.m), atol=1e-9)


def _sigma_q(spec, prior, k):
    from miocp import solve_riccati
    return solve_riccati(spec, prior).Sigma_Q[k]


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(71)
    for _ in range(10):
        spec = random_spec(rng)
        prior = random_prior(rng, spec, allow_singular=False)
        g = gradient_reduced(spec, prior)
        targets = [_random_target(rng, spec.m) for _ in range(spec.T)]
        direction = [S - P for S, P in zip(targets, prior.Sigma)]
        analytic = sum(float(np.trace(g.Jk_prime[k] @ direction[k]))
                       for k in range(spec.T))
        h = 1e-6
        plus = _shifted_objective(spec, prior, direction, h)
        minus = _shifted_objective(spec, prior, direction, -h)
        fd = (plus - minus) / (2 * h)
        assert fd == pytest.approx(analytic, rel=1e-5, abs=1e-9)


def _random_target(rng, m):
    G = rng.standard_normal((m, m))
    return G @ G.T / m + 0.2 * np.eye(m)


def _shifted_objective(spec, prior, direction, t):
    sigmas = [S + t * D for S, D in zip(prior.Sigma, direction)]
    return objective_reduced(spec, GaussianPrior.zero_mean(sigmas))


def test_kl_identical_is_zero():
    mu = np.array([0.3, -0.2])
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert kl_gaussian(mu, S, mu, S) == 0.0


def test_kl_one_dimensional_oracle():
    val = kl_gaussian(np.zeros(1), np.eye(1), np.ones(1), 2.0 * np.eye(1))
    assert val == pytest.approx(0.5 * np.log(2.0), abs=1e-12)


def test_kl_rank_deficient_oracle():
    Sp = np.array([[1.0, 1.0], [1.0, 1.0]])
    Sq = np.array([[2.0, 2.0], [2.0, 2.0]])
    val = kl_gaussian(np.zeros(2), Sp, np.zeros(2), Sq)
    assert val == pytest.approx(0.5 * (np.log(2.0) - 0.5), abs=1e-12)


def test_kl_zero_covariances_equal_means():
    assert kl_gaussian(np.ones(2), np.zeros((2, 2)), np.ones(2), np.zeros((2, 2))) == 0.0


def test_kl_image_mismatch_raised():
    Sp = np.array([[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ImageMismatch):
        kl_gaussian(np.zeros(2), Sp, np.zeros(2), np.eye(2))
    with pytest.raises(ImageMismatch):
        kl_gaussian(np.zeros(2), np.eye(2), np.zeros(2), Sp)
    # mean difference escaping the common image is also non-absolutely-continuous
    with pytest.raises(ImageMismatch):
        kl_gaussian(np.array([1.0, 0.0]), np.zeros((2, 2)),
                    np.array([0.0, 0.0]), np.zeros((2, 2)))
    with pytest.raises(ImageMismatch):
        kl_gaussian(np.array([1.0, -1.0]), Sp, np.zeros(2), Sp)


def test_kl_dimension_mismatch_rejected():
    with pytest.raises(InvalidArgument):
        kl_gaussian(np.zeros(1), np.eye(1), np.zeros(2), np.eye(2))


def test_kl_nonnegative_and_zero_iff_identical():
    rng = np.random.default_rng(83)
    for _ in range(50):
        dim = int(rng.integers(1, 4))
        G = rng.standard_normal((dim, dim))
        Sq = G @ G.T + 0.1 * np.eye(dim)
        H = rng.standard_normal((dim, dim)) * 0.3
        Sp = Sq + 0.5 * (H + H.T) + 0.5 * np.eye(dim)
        mu_p = rng.standard_normal(dim)
        mu_q = rng.standard_normal(dim)
        val = kl_gaussian(mu_p, Sp, mu_q, Sq)
        assert val >= 0.0
        identical = np.allclose(mu_p, mu_q) and np.allclose(Sp, Sq)
        if val == 0.0:
            assert identical
