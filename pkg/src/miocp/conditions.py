"""Sufficient-condition checks for stochastic and deterministic optima.

Whether the optimal policy keeps injecting noise or collapses to a
deterministic law is certified by two per-stage test matrices built from the
prior-free bound recursions: one must be positive definite at every stage
(small temperatures, stochastic optimum), the other negative definite (large
temperatures, deterministic optimum).  Both are affine in the temperature
with a positive definite slope, so the exact switchover temperatures are
generalized eigenvalue problems, solved here alongside the boolean checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .problem import ProblemSpec, validate
from .riccati import riccati_bounds

__all__ = [
    "ConditionReport",
    "EpsilonThresholds",
    "sigma_x_zero",
    "condition_report",
    "stochastic_condition",
    "deterministic_condition",
    "epsilon_thresholds",
]

# Condition number beyond which a state matrix counts as effectively singular
# for the assumption flags.
COND_LIMIT = 1e14

# Relative eigenvalue cutoff declaring a pencil's constant term rank deficient.
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class ConditionReport:
    """Both certificates evaluated at the instance's temperature.

    M_check[k] must be PD at every stage to guarantee a stochastic optimum;
    M_hat_zero[k] must be ND at every stage to guarantee a deterministic one.
    The margins expose min_eig(M_check[k]) and max_eig(M_hat_zero[k]) so the
    conservativeness of the certificates is visible.  stochastic_guaranteed
    is None when the stochastic certificate's assumptions (invertible state
    matrices, full-column-rank input matrices) fail, since the statement is
    silent there; the deterministic certificate needs no assumptions.
    """

    M_check: tuple[np.ndarray, ...]
    M_hat_zero: tuple[np.ndarray, ...]
    stochastic_margins: np.ndarray
    deterministic_margins: np.ndarray
    stochastic_guaranteed: bool | None
    deterministic_guaranteed: bool
    a_invertible: tuple[bool, ...]
    b_full_column_rank: tuple[bool, ...]


@dataclass(frozen=True)
class EpsilonThresholds:
    """Exact temperature switchovers of the two certificates.

    Per stage, the stochastic certificate holds iff the temperature is below
    that stage's threshold, and the deterministic one iff above.  The overall
    thresholds take the min (stochastic) and max (deterministic) over stages.
    No ordering between the two overall values is asserted; both certificates
    are merely sufficient.  A degenerate flag marks stages whose pencil
    constant term is rank deficient, which pins that threshold to zero.
    """

    stochastic_per_stage: np.ndarray
    deterministic_per_stage: np.ndarray
    eps_stochastic_max: float
    eps_deterministic_min: float
    stochastic_degenerate: tuple[bool, ...]
    deterministic_degenerate: tuple[bool, ...]


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def sigma_x_zero(spec: ProblemSpec) -> list[np.ndarray]:
    """State covariances under identically zero input, stages 0 through T."""
    validate(spec)
    out = [np.asarray(spec.Sigma_x_ini)]
    for k in range(spec.T):
        out.append(_sym(spec.A[k] @ out[k] @ spec.A[k].T + spec.Sigma_w[k]))
    return out


def _pencils(spec: ProblemSpec):
    """Per-stage (G, H) pairs with certificate matrix = G - epsilon*H.

    The bound recursions entering G and H never involve the temperature, so
    each certificate is exactly affine in it.
    """
    bounds = riccati_bounds(spec)
    sxz = sigma_x_zero(spec)
    eye_m = np.eye(spec.m)
    G_sto, H_sto, G_det, H_det = [], [], [], []
    for k in range(spec.T):
        A, B, R = spec.A[k], spec.B[k], spec.R[k]
        inv_hat = _sym(np.linalg.solve(_sym(R + B.T @ bounds.Pi_hat[k + 1] @ B), eye_m))
        inv_check = _sym(np.linalg.solve(_sym(R + B.T @ bounds.Pi_check[k + 1] @ B), eye_m))
        noise = spec.Sigma_x_ini if k == 0 else spec.Sigma_w[k - 1]
        U = B.T @ bounds.Pi_check[k + 1] @ A
        G_sto.append(_sym(inv_hat @ U @ noise @ U.T @ inv_hat))
        H_sto.append(inv_check)
        V = B.T @ bounds.Pi_hat[k + 1] @ A
        G_det.append(_sym(inv_check @ V @ sxz[k] @ V.T @ inv_check))
        H_det.append(inv_hat)
    return G_sto, H_sto, G_det, H_det


def condition_report(spec: ProblemSpec) -> ConditionReport:
    """Evaluate both certificates at the instance's own temperature."""
    validate(spec)
    G_sto, H_sto, G_det, H_det = _pencils(spec)
    eps = spec.epsilon
    M_check, M_hat_zero = [], []
    margins_s = np.empty(spec.T)
    margins_d = np.empty(spec.T)
    for k in range(spec.T):
        Mc = _sym(G_sto[k] - eps * H_sto[k])
        Mz = _sym(G_det[k] - eps * H_det[k])
        M_check.append(Mc)
        M_hat_zero.append(Mz)
        margins_s[k] = np.linalg.eigvalsh(Mc)[0]
        margins_d[k] = np.linalg.eigvalsh(Mz)[-1]
    a_inv = tuple(bool(np.linalg.cond(spec.A[k]) < COND_LIMIT) for k in range(spec.T))
    b_fcr = tuple(bool(np.linalg.matrix_rank(spec.B[k]) == spec.m) for k in range(spec.T))
    assumptions_met = all(a_inv) and all(b_fcr)
    stochastic = bool(np.all(margins_s > 0.0)) if assumptions_met else None
    deterministic = bool(np.all(margins_d < 0.0))
    margins_s.setflags(write=False)
    margins_d.setflags(write=False)
    return ConditionReport(
        M_check=tuple(M_check),
        M_hat_zero=tuple(M_hat_zero),
        stochastic_margins=margins_s,
        deterministic_margins=margins_d,
        stochastic_guaranteed=stochastic,
        deterministic_guaranteed=deterministic,
        a_invertible=a_inv,
        b_full_column_rank=b_fcr)


def stochastic_condition(spec: ProblemSpec) -> ConditionReport:
    """Certificate that every optimal prior covariance is full rank.

    Returns the full report; read stochastic_guaranteed, stochastic_margins
    and M_check from it.  Both halves cost one pass over the bound
    recursions, so nothing is saved by splitting them.
    """
    return condition_report(spec)


def deterministic_condition(spec: ProblemSpec) -> ConditionReport:
    """Certificate that the optimal prior collapses to a point mass.

    Returns the full report; read deterministic_guaranteed,
    deterministic_margins and M_hat_zero from it.
    """
    return condition_report(spec)


def _gen_eig_range(G: np.ndarray, H: np.ndarray) -> tuple[float, float]:
    """Smallest and largest generalized eigenvalues of (G, H), H PD."""
    w = scipy.linalg.eigh(G, H, eigvals_only=True, check_finite=False)
    return float(w[0]), float(w[-1])


def epsilon_thresholds(spec: ProblemSpec) -> EpsilonThresholds:
    """Exact per-stage and overall switchover temperatures.

    Solved as generalized eigenproblems of the affine pencils, then
    self-verified by re-evaluating the boolean margins just inside and just
    outside each overall threshold; an inconsistency raises rather than
    returning numbers the booleans would contradict.
    """
    validate(spec)
    G_sto, H_sto, G_det, H_det = _pencils(spec)
    T = spec.T
    thr_s = np.empty(T)
    thr_d = np.empty(T)
    deg_s, deg_d = [], []
    for k in range(T):
        deg_s.append(_is_degenerate(G_sto[k]))
        deg_d.append(_is_degenerate(G_det[k]))
        lo, _ = _gen_eig_range(G_sto[k], H_sto[k])
        thr_s[k] = 0.0 if deg_s[k] else max(0.0, lo)
        _, hi = _gen_eig_range(G_det[k], H_det[k])
        thr_d[k] = 0.0 if deg_d[k] else max(0.0, hi)
    overall_s = float(thr_s.min())
    overall_d = float(thr_d.max())
    _verify_thresholds(G_sto, H_sto, G_det, H_det, overall_s, overall_d)
    thr_s.setflags(write=False)
    thr_d.setflags(write=False)
    return EpsilonThresholds(
        stochastic_per_stage=thr_s,
        deterministic_per_stage=thr_d,
        eps_stochastic_max=overall_s,
        eps_deterministic_min=overall_d,
        stochastic_degenerate=tuple(deg_s),
        deterministic_degenerate=tuple(deg_d))


def _is_degenerate(G: np.ndarray) -> bool:
    w = np.linalg.eigvalsh(G)
    return bool(w[0] <= DEGENERATE_RTOL * (1.0 + abs(w[-1])))


def _verify_thresholds(G_sto, H_sto, G_det, H_det,
                       overall_s: float, overall_d: float):
    probe = 1e-6
    if overall_s > 0.0:
        inside = min(np.linalg.eigvalsh(_sym(G - overall_s * (1 - probe) * H))[0]
                     for G, H in zip(G_sto, H_sto))
        outside = min(np.linalg.eigvalsh(_sym(G - overall_s * (1 + probe) * H))[0]
                      for G, H in zip(G_sto, H_sto))
        if not (inside > 0.0 and outside <= 0.0):
            raise ArithmeticError(
                f"stochastic threshold self-check failed: margins "
                f"{inside:.3e} inside / {outside:.3e} outside")
    if overall_d > 0.0:
        inside = max(np.linalg.eigvalsh(_sym(G - overall_d * (1 + probe) * H))[-1]
                     for G, H in zip(G_det, H_det))
        outside = max(np.linalg.eigvalsh(_sym(G - overall_d * (1 - probe) * H))[-1]
                      for G, H in zip(G_det, H_det))
        if not (inside < 0.0 and outside >= 0.0):
            raise ArithmeticError(
                f"deterministic threshold self-check failed: margins "
                f"{inside:.3e} inside / {outside:.3e} outside")
