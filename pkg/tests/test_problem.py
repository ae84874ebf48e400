import numpy as np
import pytest

from miocp import (DimensionMismatch, GaussianPolicy, GaussianPrior,
                   InvalidArgument, NonPositiveDefinite, NonPositiveEpsilon,
                   ProblemSpec, StateMoments, default_prior, validate)

from helpers import s1_spec


def sec6_spec(eps=10.0):
    return ProblemSpec.constant(
        T=5,
        A=np.array([[0.9, 0.2], [0.1, 1.1]]),
        B=np.array([[0.0], [0.2]]),
        R=1.0,
        F=10.0 * np.eye(2),
        Sigma_w=1e-3 * np.eye(2),
        Sigma_x_ini=np.array([[7.0, 3.0], [3.0, 5.0]]),
        epsilon=eps,
    )


def test_validate_accepts_reference_setups():
    assert validate(sec6_spec()) is not None
    assert validate(s1_spec()) is not None


def test_validate_is_idempotent():
    spec = validate(sec6_spec())
    again = validate(spec)
    assert again.T == spec.T
    assert np.array_equal(again.A[0], spec.A[0])


def test_zero_r_rejected_with_field_and_stage():
    spec = ProblemSpec.constant(T=2, A=1.0, B=1.0, R=0.0, F=1.0,
                                Sigma_w=1.0, Sigma_x_ini=1.0, epsilon=1.0)
    with pytest.raises(NonPositiveDefinite) as exc:
        validate(spec)
    assert exc.value.field == "R"
    assert exc.value.stage == 0


def test_indefinite_terminal_weight_rejected():
    spec = ProblemSpec.constant(T=1, A=np.eye(2), B=np.eye(2),
                                R=np.eye(2), F=np.diag([1.0, -1.0]),
                                Sigma_w=np.eye(2), Sigma_x_ini=np.eye(2),
                                epsilon=1.0)
    with pytest.raises(NonPositiveDefinite) as exc:
        validate(spec)
    assert exc.value.field == "F"


def test_dimension_mismatch_names_field():
    spec = ProblemSpec.constant(T=1, A=np.eye(3), B=np.ones((2, 1)),
                                R=1.0, F=np.eye(3), Sigma_w=np.eye(3),
                                Sigma_x_ini=np.eye(3), epsilon=1.0)
    with pytest.raises(DimensionMismatch) as exc:
        validate(spec)
    assert exc.value.field == "B"


def test_nonpositive_epsilon_rejected():
    for eps in (0.0, -1.0):
        spec = s1_spec().with_epsilon(0.5)
        bad = ProblemSpec.constant(T=1, A=1.0, B=1.0, R=1.0, F=1.0,
                                   Sigma_w=0.1, Sigma_x_ini=2.0, epsilon=eps)
        with pytest.raises(NonPositiveEpsilon):
            validate(bad)
        del spec


def test_horizon_must_be_positive():
    with pytest.raises(InvalidArgument):
        ProblemSpec.constant(T=0, A=1.0, B=1.0, R=1.0, F=1.0,
                             Sigma_w=1.0, Sigma_x_ini=1.0, epsilon=1.0)


def test_per_stage_list_length_checked():
    with pytest.raises(InvalidArgument):
        ProblemSpec(T=3, A=[np.eye(1)] * 2, B=[np.eye(1)] * 3,
                    R=[np.eye(1)] * 3, F=np.eye(1),
                    Sigma_w=[np.eye(1)] * 3, Sigma_x_ini=np.eye(1),
                    epsilon=1.0)


def test_constant_broadcasts_across_stages():
    spec = sec6_spec()
    assert spec.T == 5
    assert len(spec.A) == 5
    assert all(np.array_equal(spec.A[k], spec.A[0]) for k in range(5))
    assert spec.n == 2
    assert spec.m == 1


def test_with_epsilon_replaces_only_temperature():
    spec = sec6_spec(10.0)
    other = spec.with_epsilon(0.001)
    assert other.epsilon == 0.001
    assert np.array_equal(other.A[0], spec.A[0])
    assert spec.epsilon == 10.0


def test_spec_arrays_are_read_only():
    spec = sec6_spec()
    with pytest.raises(ValueError):
        spec.A[0][0, 0] = 99.0


def test_default_prior_is_standard_normal_every_stage():
    prior = default_prior(sec6_spec())
    assert prior.stages == 5
    assert prior.is_zero_mean
    for k in range(5):
        assert np.array_equal(prior.Sigma[k], np.eye(1))
        assert np.array_equal(prior.mu[k], np.zeros(1))


def test_default_prior_wide_input():
    spec = ProblemSpec.constant(T=1, A=np.eye(3), B=np.eye(3), R=np.eye(3),
                                F=np.eye(3), Sigma_w=np.eye(3),
                                Sigma_x_ini=np.eye(3), epsilon=1.0)
    prior = default_prior(spec)
    assert prior.stages == 1
    assert np.array_equal(prior.Sigma[0], np.eye(3))


def test_prior_rejects_indefinite_covariance():
    with pytest.raises(Exception):
        GaussianPrior.zero_mean([np.array([[-1.0]])])


def test_prior_accepts_singular_covariance():
    prior = GaussianPrior.zero_mean([np.array([[1.0, 1.0], [1.0, 1.0]])])
    assert prior.stages == 1


def test_policy_image_condition_enforced():
    # gain pushes along a direction the covariance cannot randomize: fine
    sigma = np.diag([1.0, 0.0])
    P_ok = np.array([[1.0, 0.0], [0.0, 0.0]])
    GaussianPolicy(P=[P_ok], q=[np.zeros(2)], Sigma=[sigma])
    # gain leaking outside the covariance image: rejected, not projected
    P_bad = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.raises(InvalidArgument):
        GaussianPolicy(P=[P_bad], q=[np.zeros(2)], Sigma=[sigma])


def test_policy_image_check_is_scale_free():
    # a well-conditioned covariance of tiny magnitude keeps its full image;
    # the admissibility test must not misread small scale as rank deficiency
    sigma = 1e-12 * np.diag([1.0, 3.0])
    P = np.array([[0.4, -0.2], [0.1, 0.7]])
    GaussianPolicy(P=[P], q=[np.zeros(2)], Sigma=[sigma])
    # a truly rank-deficient tiny covariance still rejects leaking gains
    with pytest.raises(InvalidArgument):
        GaussianPolicy(P=[P], q=[np.zeros(2)],
                       Sigma=[1e-12 * np.diag([1.0, 0.0])])


def test_state_moments_shape_checked():
    with pytest.raises(Exception):
        StateMoments(mu_x=[np.zeros(2)], Sigma_x=[np.eye(3)])
