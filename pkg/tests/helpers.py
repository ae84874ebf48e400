"""Shared generators for randomized tests.

Everything takes an explicit numpy Generator so each test controls its seed;
nothing here touches global RNG state.
"""

from __future__ import annotations

import numpy as np

from miocp import GaussianPrior, ProblemSpec


def random_psd(rng: np.random.Generator, dim: int, rank: int | None = None,
               scale: float = 1.0) -> np.ndarray:
    """Random PSD matrix of the given rank (full rank when rank is None)."""
    if rank is None:
        rank = dim
    if rank == 0:
        return np.zeros((dim, dim))
    G = rng.standard_normal((dim, rank))
    M = G @ G.T * (scale / rank)
    return 0.5 * (M + M.T)


def random_pd(rng: np.random.Generator, dim: int, scale: float = 1.0) -> np.ndarray:
    """Random PD matrix, eigenvalues bounded away from zero."""
    return random_psd(rng, dim, scale=scale) + 0.1 * scale * np.eye(dim)


def random_spec(rng: np.random.Generator, n_max: int = 3, t_max: int = 4,
                eps: float | None = None, m_le_n: bool = True,
                time_varying: bool = True) -> ProblemSpec:
    """Random well-posed instance; A kept invertible, B full column rank.

    Shifting A's spectrum away from zero and drawing B with orthonormal
    columns keeps every instance inside the assumptions of the stochasticity
    certificate, so the same generator serves all the randomized suites.
    """
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, (n if m_le_n else n_max) + 1))
    T = int(rng.integers(1, t_max + 1))
    stages = T if time_varying else 1

    def one_a() -> np.ndarray:
        A = rng.standard_normal((n, n)) * 0.5
        # push singular values up so A stays comfortably invertible
        U, s, Vt = np.linalg.svd(A)
        return U @ np.diag(np.maximum(s, 0.3)) @ Vt

    def one_b() -> np.ndarray:
        if m <= n:
            Q, _ = np.linalg.qr(rng.standard_normal((n, m)))
            return Q[:, :m] * (0.5 + rng.uniform(0.0, 1.0))
        # wider than tall: full column rank is impossible, plain draw
        return rng.standard_normal((n, m)) * 0.5

    A = [one_a() for _ in range(stages)]
    B = [one_b() for _ in range(stages)]
    R = [random_pd(rng, m) for _ in range(stages)]
    Sw = [random_pd(rng, n, scale=0.5) for _ in range(stages)]
    if eps is None:
        eps = float(rng.uniform(0.2, 2.0))
    return ProblemSpec(
        T=T,
        A=A if time_varying else A * T,
        B=B if time_varying else B * T,
        R=R if time_varying else R * T,
        F=random_pd(rng, n),
        Sigma_w=Sw if time_varying else Sw * T,
        Sigma_x_ini=random_pd(rng, n),
        epsilon=eps,
    )


def random_prior(rng: np.random.Generator, spec: ProblemSpec,
                 allow_singular: bool = False) -> GaussianPrior:
    """Random zero-mean prior; optionally rank-deficient at some stages."""
    sigmas = []
    for _ in range(spec.T):
        if allow_singular and rng.uniform() < 0.3:
            rank = int(rng.integers(0, spec.m + 1))
        else:
            rank = spec.m
        sigmas.append(random_psd(rng, spec.m, rank=rank))
    return GaussianPrior.zero_mean(sigmas)


def s1_spec(eps: float = 0.5) -> ProblemSpec:
    """The scalar reference problem used for hand-checked oracles."""
    return ProblemSpec.constant(T=1, A=1.0, B=1.0, R=1.0, F=1.0,
                                Sigma_w=0.1, Sigma_x_ini=2.0, epsilon=eps)


def prior_of(sigma: float) -> GaussianPrior:
    """Scalar zero-mean one-stage prior with the given variance."""
    return GaussianPrior.zero_mean([np.array([[float(sigma)]])])
