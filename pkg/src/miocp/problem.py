"""Problem definition and the Gaussian policy/prior/moment types.

A problem instance is a finite-horizon stochastic linear system with a
quadratic input/terminal cost and a temperature-weighted KL regularizer that
pulls each stage's control policy toward a state-independent Gaussian prior.
Standing assumptions: the input weights, terminal weight, process-noise
covariances and initial-state covariance are all positive definite and the
temperature is strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .psd_linalg import check_symmetric, is_psd, min_eig, pinv

__all__ = [
    "NonPositiveDefinite",
    "DimensionMismatch",
    "NonPositiveEpsilon",
    "InvalidArgument",
    "ProblemSpec",
    "GaussianPrior",
    "GaussianPolicy",
    "StateMoments",
    "validate",
    "default_prior",
]

# Absolute tolerance on min_eig for the positive definiteness checks below.
PD_TOL = 1e-12

# Relative slack allowed when accepting computed covariances as PSD.
PSD_RTOL = 1e-9

# Tolerance of the policy-class image test (I - Sigma pinv(Sigma)) P = 0.
IMAGE_TOL = 1e-8


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class NonPositiveEpsilon(InvalidArgument):
    """The temperature must be strictly positive."""


class DimensionMismatch(InvalidArgument):
    """A field's shape or count disagrees with the declared dimensions."""

    def __init__(self, field: str, stage: int | None, message: str):
        self.field = field
        self.stage = stage
        where = field if stage is None else f"{field}[{stage}]"
        super().__init__(f"{where}: {message}")


class NonPositiveDefinite(InvalidArgument):
    """A field that must be symmetric positive definite is not."""

    def __init__(self, field: str, stage: int | None, message: str = ""):
        self.field = field
        self.stage = stage
        where = field if stage is None else f"{field}[{stage}]"
        detail = f": {message}" if message else ""
        super().__init__(f"{where} is not symmetric positive definite{detail}")


def _as_matrix(value) -> np.ndarray:
    """Coerce scalars / nested lists to a read-only float64 2-D array."""
    A = np.atleast_2d(np.asarray(value, dtype=float)).copy()
    A.setflags(write=False)
    return A


def _as_vector(value, m: int | None = None) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float)).copy()
    v.setflags(write=False)
    return v


def _stage_tuple(value, T: int, field: str) -> tuple[np.ndarray, ...]:
    """Normalize a per-stage field to a tuple of T matrices."""
    if isinstance(value, np.ndarray) and value.ndim == 3:
        items = [value[k] for k in range(value.shape[0])]
    elif isinstance(value, (list, tuple)):
        items = list(value)
    else:
        items = [value]
    mats = tuple(_as_matrix(v) for v in items)
    if len(mats) == 1 and T > 1:
        mats = mats * T
    if len(mats) != T:
        raise DimensionMismatch(field, None, f"expected 1 or {T} stage matrices, got {len(mats)}")
    return mats


@dataclass(frozen=True)
class ProblemSpec:
    """A finite-horizon instance of the regularized control problem.

    Per-stage fields (``A``, ``B``, ``R``, ``Sigma_w``) are stored as explicit
    length-``T`` tuples even when time invariant; pass a single matrix to
    broadcast it across stages, or use :meth:`constant`.

    Fields:
        T: horizon (number of stages, at least 1).
        A: state matrices, each ``(n, n)``.
        B: input matrices, each ``(n, m)``.
        R: input cost weights, each ``(m, m)``, positive definite.
        F: terminal cost weight ``(n, n)``, positive definite.
        Sigma_w: process noise covariances, each ``(n, n)``, positive definite.
        Sigma_x_ini: initial state covariance ``(n, n)``, positive definite.
        epsilon: temperature weighting the KL cost, strictly positive
            (cost units per nat).
    """

    T: int
    A: tuple[np.ndarray, ...]
    B: tuple[np.ndarray, ...]
    R: tuple[np.ndarray, ...]
    F: np.ndarray
    Sigma_w: tuple[np.ndarray, ...]
    Sigma_x_ini: np.ndarray
    epsilon: float

    def __post_init__(self):
        T = int(self.T)
        if T < 1:
            raise InvalidArgument(f"T must be at least 1, got {self.T}")
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "A", _stage_tuple(self.A, T, "A"))
        object.__setattr__(self, "B", _stage_tuple(self.B, T, "B"))
        object.__setattr__(self, "R", _stage_tuple(self.R, T, "R"))
        object.__setattr__(self, "Sigma_w", _stage_tuple(self.Sigma_w, T, "Sigma_w"))
        object.__setattr__(self, "F", _as_matrix(self.F))
        object.__setattr__(self, "Sigma_x_ini", _as_matrix(self.Sigma_x_ini))
        object.__setattr__(self, "epsilon", float(self.epsilon))

    @classmethod
    def constant(cls, *, T, A, B, R, F, Sigma_w, Sigma_x_ini, epsilon) -> "ProblemSpec":
        """Build a time-invariant instance from single matrices."""
        return cls(T=T, A=A, B=B, R=R, F=F, Sigma_w=Sigma_w,
                   Sigma_x_ini=Sigma_x_ini, epsilon=epsilon)

    @property
    def n(self) -> int:
        """State dimension."""
        return self.A[0].shape[0]

    @property
    def m(self) -> int:
        """Input dimension."""
        return self.B[0].shape[1]

    def with_epsilon(self, epsilon: float) -> "ProblemSpec":
        """Copy of this instance with a different temperature."""
        return ProblemSpec(T=self.T, A=self.A, B=self.B, R=self.R, F=self.F,
                           Sigma_w=self.Sigma_w, Sigma_x_ini=self.Sigma_x_ini,
                           epsilon=epsilon)


def _check_pd(M: np.ndarray, field: str, stage: int | None):
    try:
        S = check_symmetric(M, name=field)
    except ValueError as exc:
        raise NonPositiveDefinite(field, stage, str(exc)) from exc
    me = min_eig(S)
    if not me > PD_TOL:
        raise NonPositiveDefinite(field, stage, f"min eigenvalue {me:.3g} <= {PD_TOL:g}")


def validate(spec: ProblemSpec) -> ProblemSpec:
    """Check all instance invariants; return the instance unchanged if they hold.

    Raises the first violation found as :class:`NonPositiveEpsilon`,
    :class:`DimensionMismatch` or :class:`NonPositiveDefinite` (each names the
    offending field and stage).  Validation has no side effects and is
    idempotent.
    """
    if not spec.epsilon > 0:
        raise NonPositiveEpsilon(f"epsilon must be strictly positive, got {spec.epsilon}")
    n, m = spec.n, spec.m
    if spec.A[0].shape != (n, n):
        raise DimensionMismatch("A", 0, f"expected square, got {spec.A[0].shape}")
    for k in range(spec.T):
        if spec.A[k].shape != (n, n):
            raise DimensionMismatch("A", k, f"expected {(n, n)}, got {spec.A[k].shape}")
        if spec.B[k].shape != (n, m):
            raise DimensionMismatch("B", k, f"expected {(n, m)}, got {spec.B[k].shape}")
        if spec.R[k].shape != (m, m):
            raise DimensionMismatch("R", k, f"expected {(m, m)}, got {spec.R[k].shape}")
        if spec.Sigma_w[k].shape != (n, n):
            raise DimensionMismatch("Sigma_w", k, f"expected {(n, n)}, got {spec.Sigma_w[k].shape}")
        if not np.all(np.isfinite(spec.A[k])):
            raise DimensionMismatch("A", k, "contains non-finite entries")
        if not np.all(np.isfinite(spec.B[k])):
            raise DimensionMismatch("B", k, "contains non-finite entries")
    if spec.F.shape != (n, n):
        raise DimensionMismatch("F", None, f"expected {(n, n)}, got {spec.F.shape}")
    if spec.Sigma_x_ini.shape != (n, n):
        raise DimensionMismatch("Sigma_x_ini", None,
                                f"expected {(n, n)}, got {spec.Sigma_x_ini.shape}")
    for k in range(spec.T):
        _check_pd(spec.R[k], "R", k)
        _check_pd(spec.Sigma_w[k], "Sigma_w", k)
    _check_pd(spec.F, "F", None)
    _check_pd(spec.Sigma_x_ini, "Sigma_x_ini", None)
    return spec


def _check_psd_cov(S: np.ndarray, field: str, stage: int) -> np.ndarray:
    from .psd_linalg import NotPsd  # local import keeps the module namespace tidy

    sym = check_symmetric(S, name=f"{field}[{stage}]")
    tol = PSD_RTOL * (1.0 + float(np.max(np.abs(sym))))
    if not is_psd(sym, tol):
        raise NotPsd(f"{field}[{stage}] has min eigenvalue {min_eig(sym):.3g}")
    sym.setflags(write=False)
    return sym


@dataclass(frozen=True)
class GaussianPrior:
    """Per-stage state-independent Gaussian prior over inputs.

    ``mu[k]`` is the stage-k mean (length m) and ``Sigma[k]`` the stage-k
    covariance, PSD and possibly rank deficient (a zero covariance is a point
    mass).  The reduced problem only ever uses zero-mean priors; the mean
    field exists so the full fixed-prior policy formula stays exercisable.
    """

    mu: tuple[np.ndarray, ...]
    Sigma: tuple[np.ndarray, ...]

    def __post_init__(self):
        Sigmas = tuple(_check_psd_cov(S, "prior Sigma", k) for k, S in enumerate(self.Sigma))
        m = Sigmas[0].shape[0]
        mus = tuple(_as_vector(v) for v in self.mu)
        if len(mus) != len(Sigmas):
            raise DimensionMismatch("prior mu", None,
                                    f"{len(mus)} means for {len(Sigmas)} covariances")
        for k, v in enumerate(mus):
            if v.shape != (m,):
                raise DimensionMismatch("prior mu", k, f"expected {(m,)}, got {v.shape}")
        object.__setattr__(self, "mu", mus)
        object.__setattr__(self, "Sigma", Sigmas)

    @classmethod
    def zero_mean(cls, Sigmas) -> "GaussianPrior":
        """Prior with the given covariances and all means zero."""
        mats = [_as_matrix(S) for S in Sigmas]
        m = mats[0].shape[0]
        return cls(mu=tuple(np.zeros(m) for _ in mats), Sigma=tuple(mats))

    @property
    def stages(self) -> int:
        return len(self.Sigma)

    @property
    def is_zero_mean(self) -> bool:
        return all(not np.any(v) for v in self.mu)


@dataclass(frozen=True)
class GaussianPolicy:
    """Per-stage affine-Gaussian conditional input law.

    Stage k maps state x to the Gaussian with mean ``P[k] @ x + q[k]`` and
    covariance ``Sigma[k]``.  Membership in the admissible class additionally
    requires the gain's image to lie inside the covariance's image, checked as
    ``(I - Sigma pinv(Sigma)) P = 0`` within 1e-8; violating inputs are
    rejected, never projected.
    """

    P: tuple[np.ndarray, ...]
    q: tuple[np.ndarray, ...]
    Sigma: tuple[np.ndarray, ...]

    def __post_init__(self):
        Sigmas = tuple(_check_psd_cov(S, "policy Sigma", k) for k, S in enumerate(self.Sigma))
        m = Sigmas[0].shape[0]
        gains = tuple(_as_matrix(P) for P in self.P)
        offsets = tuple(_as_vector(v) for v in self.q)
        if not (len(gains) == len(offsets) == len(Sigmas)):
            raise DimensionMismatch("policy", None, "P, q, Sigma must have equal stage counts")
        for k, (P, v) in enumerate(zip(gains, offsets)):
            if P.shape[0] != m:
                raise DimensionMismatch("policy P", k, f"expected {m} rows, got {P.shape[0]}")
            if v.shape != (m,):
                raise DimensionMismatch("policy q", k, f"expected {(m,)}, got {v.shape}")
            # rank cutoff relative to the covariance's own scale; an absolute
            # floor would misread small-epsilon covariances as degenerate
            top = float(np.max(np.abs(Sigmas[k]), initial=0.0))
            proj = np.eye(m) - Sigmas[k] @ pinv(Sigmas[k], tol=PSD_RTOL * top)
            leak = np.max(np.abs(proj @ P)) if P.size else 0.0
            if leak > IMAGE_TOL * (1.0 + np.max(np.abs(P), initial=0.0)):
                raise InvalidArgument(
                    f"policy gain at stage {k} leaves the covariance image "
                    f"(residual {leak:.3g}); the admissible class requires "
                    f"Im(P) inside Im(Sigma)")
        object.__setattr__(self, "P", gains)
        object.__setattr__(self, "q", offsets)
        object.__setattr__(self, "Sigma", Sigmas)

    @property
    def stages(self) -> int:
        return len(self.Sigma)


@dataclass(frozen=True)
class StateMoments:
    """State mean/covariance sequence over stages 0..T.

    ``Sigma_x[0]`` equals the initial covariance and every ``Sigma_x[k]`` is
    positive definite (the process noise is).
    """

    mu_x: tuple[np.ndarray, ...]
    Sigma_x: tuple[np.ndarray, ...]

    def __post_init__(self):
        Sigmas = tuple(_check_psd_cov(S, "Sigma_x", k) for k, S in enumerate(self.Sigma_x))
        mus = tuple(_as_vector(v) for v in self.mu_x)
        if len(mus) != len(Sigmas):
            raise DimensionMismatch("mu_x", None,
                                    f"{len(mus)} means for {len(Sigmas)} covariances")
        for k, (mu, S) in enumerate(zip(mus, Sigmas)):
            if mu.shape[0] != S.shape[0]:
                raise DimensionMismatch(
                    "mu_x", k, f"mean dim {mu.shape[0]} vs covariance dim {S.shape[0]}")
        object.__setattr__(self, "mu_x", mus)
        object.__setattr__(self, "Sigma_x", Sigmas)


def default_prior(spec: ProblemSpec) -> GaussianPrior:
    """The standard initializer: zero mean, identity covariance at each stage.

    Strict positive definiteness maximizes the admissible image of every later
    iterate, since the iteration preserves covariance images.
    """
    m = spec.m
    return GaussianPrior.zero_mean([np.eye(m) for _ in range(spec.T)])
