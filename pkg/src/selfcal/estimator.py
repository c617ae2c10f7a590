"""Extrinsic estimation from motion pairs with observability-aware updates.

Every pair contributes the hand-eye loop residual

    r = log(X^-1 A^-1 X B),

zero exactly when ``A X = X B``. Gauss-Newton steps are computed from the
whitened, column-scaled Jacobian through a truncated SVD, so directions the
data cannot see are never updated and keep their initial value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import SERIES_ANGLE, Pose, compose, exp, inverse, log, se3_left_jacobian_inv
from .keyframer import MotionPair

LOG_2PI_E = math.log(2.0 * math.pi * math.e)
UNOBSERVABLE_VARIANCE = 1e12
# columns whose norm is below this fraction of the largest are treated as empty
DEAD_COLUMN = 1e-10


class EstimationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SolveOptions:
    tsvd_threshold: float = 0.1
    max_iterations: int = 20
    step_tolerance: float = 1e-10
    use_tsvd: bool = True
    numeric_jacobian: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.tsvd_threshold < 1.0:
            raise ValueError("tsvd_threshold must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class CalibrationEstimate:
    theta: Pose
    cov: np.ndarray
    entropy: float
    obs_scores: np.ndarray
    numerical_rank: int
    converged: bool = True
    iterations: int = 0
    cost: float = 0.0
    cost_history: tuple[float, ...] = field(default=(), repr=False)


# -- per-pair model ---------------------------------------------------------


def residual(theta: Pose, pair: MotionPair) -> np.ndarray:
    loop = compose(compose(inverse(theta), inverse(pair.motion_a)), compose(theta, pair.motion_b))
    return log(loop)


def residual_and_jacobian(theta: Pose, pair: MotionPair) -> tuple[np.ndarray, np.ndarray]:
    # with C = X^-1 A^-1 X:  r(X exp(d)) = log(exp(-d) C exp(d) B)
    #                                    ~ r0 + Jl^-1(r0) (Ad_C - I) d
    C = compose(compose(inverse(theta), inverse(pair.motion_a)), theta)
    r0 = log(compose(C, pair.motion_b))
    J = se3_left_jacobian_inv(r0) @ (C.adjoint() - np.eye(6))
    return r0, J


def jacobian(theta: Pose, pair: MotionPair) -> np.ndarray:
    """Derivative of the residual w.r.t. a right perturbation of theta."""
    return residual_and_jacobian(theta, pair)[1]


def numeric_jacobian(theta: Pose, pair: MotionPair, step: float = 1e-6) -> np.ndarray:
    J = np.empty((6, 6))
    for j in range(6):
        d = np.zeros(6)
        d[j] = step
        J[:, j] = (residual(compose(theta, exp(d)), pair) - residual(compose(theta, exp(-d)), pair)) / (2 * step)
    return J


def whitening(cov: np.ndarray) -> np.ndarray:
    """Upper-triangular L with G^-1 = L^T L."""
    try:
        return np.linalg.cholesky(np.linalg.inv(cov)).T
    except np.linalg.LinAlgError:
        raise EstimationError("measurement covariance is not positive-definite") from None


# -- vectorised model over many pairs ---------------------------------------


def _hat_batch(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _series(theta, exact, coeffs):
    t2 = theta * theta
    approx = coeffs[0] + t2 * (coeffs[1] + t2 * coeffs[2])
    small = theta < SERIES_ANGLE
    return np.where(small, approx, exact(np.where(small, 1.0, theta)))


class PairBatch:
    """Motion pairs stacked into arrays for vectorised residuals and Jacobians.

    Agrees with :func:`residual_and_jacobian` pair by pair; the scalar
    routine stays the reference implementation.
    """

    def __init__(self, pairs: Sequence[MotionPair]) -> None:
        self.RA = np.array([p.motion_a.R for p in pairs])
        self.tA = np.array([p.motion_a.t for p in pairs])
        self.RB = np.array([p.motion_b.R for p in pairs])
        self.tB = np.array([p.motion_b.t for p in pairs])
        self.L = np.array([whitening(p.cov_pair) for p in pairs])

    def __len__(self) -> int:
        return self.RA.shape[0]

    def _loop(self, theta: Pose):
        Rx, tx = theta.R, theta.t
        RAt = np.transpose(self.RA, (0, 2, 1))
        RC = Rx.T @ RAt @ Rx
        tC = np.einsum("ij,njk,nk->ni", Rx.T, RAt, tx - self.tA) - Rx.T @ tx
        RE = RC @ self.RB
        tE = np.einsum("nij,nj->ni", RC, self.tB) + tC
        # rotation log through the skew part stays accurate at small angles
        w = 0.5 * np.stack(
            [RE[:, 2, 1] - RE[:, 1, 2], RE[:, 0, 2] - RE[:, 2, 0], RE[:, 1, 0] - RE[:, 0, 1]], axis=1
        )
        s = np.linalg.norm(w, axis=1)
        c = 0.5 * (np.trace(RE, axis1=1, axis2=2) - 1.0)
        angle = np.arctan2(s, c)
        if np.any(np.pi - angle < 1e-9):
            raise EstimationError("residual rotation reached pi; log branch undefined")
        k = _series(angle, lambda t: t / np.sin(t), (1.0, 1.0 / 6.0, 7.0 / 360.0))
        phi = k[:, None] * w
        P = _hat_batch(phi)
        PP = P @ P
        cinv = _series(
            angle,
            lambda t: (1.0 - 0.5 * t * np.cos(0.5 * t) / np.sin(0.5 * t)) / (t * t),
            (1.0 / 12.0, 1.0 / 720.0, 1.0 / 30240.0),
        )
        Jinv = np.eye(3) - 0.5 * P + cinv[:, None, None] * PP
        rho = np.einsum("nij,nj->ni", Jinv, tE)
        return RC, tC, rho, phi, P, PP, Jinv, angle

    def residuals(self, theta: Pose) -> np.ndarray:
        _, _, rho, phi, *_ = self._loop(theta)
        return np.concatenate([rho, phi], axis=1)

    def whitened_cost(self, theta: Pose) -> float:
        e = np.einsum("nij,nj->ni", self.L, self.residuals(theta))
        return float(np.sum(e * e))

    def residuals_and_jacobians(self, theta: Pose) -> tuple[np.ndarray, np.ndarray]:
        RC, tC, rho, phi, P, PP, Jinv, th = self._loop(theta)
        n = len(self)
        c1 = _series(th, lambda t: (t - np.sin(t)) / t**3, (1.0 / 6.0, -1.0 / 120.0, 1.0 / 5040.0))
        c2 = _series(
            th, lambda t: (t * t + 2.0 * np.cos(t) - 2.0) / (2.0 * t**4), (1.0 / 24.0, -1.0 / 720.0, 1.0 / 40320.0)
        )
        c3 = _series(
            th,
            lambda t: (2.0 * t - 3.0 * np.sin(t) + t * np.cos(t)) / (2.0 * t**5),
            (1.0 / 120.0, -1.0 / 2520.0, 1.0 / 120960.0),
        )
        Rh = _hat_batch(rho)
        PR, RP = P @ Rh, Rh @ P
        PRP = PR @ P
        Q = (
            0.5 * Rh
            + c1[:, None, None] * (PR + RP + PRP)
            + c2[:, None, None] * (PP @ Rh + RP @ P - 3.0 * PRP)
            + c3[:, None, None] * (PRP @ P + P @ PRP)
        )
        Jl_inv = np.zeros((n, 6, 6))
        Jl_inv[:, :3, :3] = Jinv
        Jl_inv[:, 3:, 3:] = Jinv
        Jl_inv[:, :3, 3:] = -Jinv @ Q @ Jinv
        Ad = np.zeros((n, 6, 6))
        Ad[:, :3, :3] = RC
        Ad[:, 3:, 3:] = RC
        Ad[:, :3, 3:] = _hat_batch(tC) @ RC
        Ad -= np.eye(6)
        return np.concatenate([rho, phi], axis=1), Jl_inv @ Ad

    def whitened_system(self, theta: Pose) -> tuple[np.ndarray, np.ndarray]:
        r, J = self.residuals_and_jacobians(theta)
        rw = np.einsum("nij,nj->ni", self.L, r).reshape(-1)
        Jw = (self.L @ J).reshape(-1, 6)
        return rw, Jw


def _numeric_system(theta, pairs, weights):
    rw = np.empty(6 * len(pairs))
    Jw = np.empty((6 * len(pairs), 6))
    for i, (pair, L) in enumerate(zip(pairs, weights)):
        rw[6 * i : 6 * i + 6] = L @ residual(theta, pair)
        Jw[6 * i : 6 * i + 6] = L @ numeric_jacobian(theta, pair)
    return rw, Jw


# -- linear algebra ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ScaledSVD:
    """SVD of a column-scaled matrix restricted to its non-empty columns."""

    live: np.ndarray
    scale: np.ndarray
    U: np.ndarray
    sv: np.ndarray
    V: np.ndarray
    rank: int


def scaled_svd(Jw: np.ndarray, threshold: float) -> ScaledSVD:
    n = Jw.shape[1]
    norms = np.linalg.norm(Jw, axis=0)
    top = norms.max() if norms.size else 0.0
    live = norms > DEAD_COLUMN * top if top > 0.0 else np.zeros(n, dtype=bool)
    scale = np.zeros(n)
    scale[live] = 1.0 / norms[live]
    if not live.any():
        return ScaledSVD(live, scale, np.zeros((Jw.shape[0], 0)), np.zeros(0), np.zeros((0, 0)), 0)
    U, sv, Vt = np.linalg.svd(Jw[:, live] * scale[live], full_matrices=False)
    keep = (sv > 0.0) & (sv >= threshold * sv[0])
    return ScaledSVD(live, scale, U, sv, Vt.T, int(keep.sum()))


def _tsvd_step(dec: ScaledSVD, rw: np.ndarray) -> np.ndarray:
    k = dec.rank
    coeff = (dec.U[:, :k].T @ rw) / dec.sv[:k]
    delta = np.zeros(dec.live.size)
    delta[dec.live] = -dec.scale[dec.live] * (dec.V[:, :k] @ coeff)
    return delta


def tsvd_update(Jw: np.ndarray, rw: np.ndarray, threshold: float) -> np.ndarray:
    """Step minimising |Jw d + rw| inside the retained singular subspace."""
    return _tsvd_step(scaled_svd(Jw, threshold), rw)


def normal_update(Jw: np.ndarray, rw: np.ndarray) -> np.ndarray:
    try:
        return -np.linalg.solve(Jw.T @ Jw, Jw.T @ rw)
    except np.linalg.LinAlgError:
        raise EstimationError("information matrix is singular") from None


def entropy_of(cov: np.ndarray) -> float:
    """Differential entropy 0.5 ln det(2 pi e cov) of a Gaussian, in nats."""
    cov = np.asarray(cov, dtype=float)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance is not positive-definite") from None
    return 0.5 * cov.shape[0] * LOG_2PI_E + float(np.sum(np.log(np.diag(L))))


def _marginals(dec: ScaledSVD) -> tuple[np.ndarray, float, np.ndarray]:
    """Covariance with sentinel variance off the retained subspace, its entropy, obs scores."""
    k = dec.rank
    obs = np.zeros(dec.live.size)
    obs[dec.live] = np.sum(dec.V[:, :k] ** 2, axis=1)
    if k == 0:
        return UNOBSERVABLE_VARIANCE * np.eye(dec.live.size), math.inf, obs
    M = np.zeros((dec.live.size, k))
    M[dec.live] = dec.scale[dec.live, None] * dec.V[:, :k]
    cov_r = (M / dec.sv[:k] ** 2) @ M.T
    basis = np.linalg.svd(M, full_matrices=True)[0]
    Q, N = basis[:, :k], basis[:, k:]
    sign, logdet = np.linalg.slogdet(Q.T @ cov_r @ Q)
    entropy = 0.5 * (k * LOG_2PI_E + logdet) if sign > 0 else math.inf
    cov = cov_r + UNOBSERVABLE_VARIANCE * (N @ N.T)
    return 0.5 * (cov + cov.T), entropy, obs


# -- solving ----------------------------------------------------------------


def stacked_system(theta: Pose, pairs: Sequence[MotionPair]) -> tuple[np.ndarray, np.ndarray]:
    """Whitened residual vector and Jacobian over all pairs."""
    return PairBatch(pairs).whitened_system(theta)


def fim(pairs: Sequence[MotionPair], theta: Pose) -> np.ndarray:
    """Fisher information J^T G^-1 J at theta."""
    if not pairs:
        raise ValueError("fim needs at least one pair")
    _, Jw = stacked_system(theta, pairs)
    F = Jw.T @ Jw
    return 0.5 * (F + F.T)


def gauss_newton_step(theta: Pose, pairs: Sequence[MotionPair], opts: SolveOptions) -> np.ndarray:
    rw, Jw = stacked_system(theta, pairs)
    if opts.use_tsvd:
        return tsvd_update(Jw, rw, opts.tsvd_threshold)
    return normal_update(Jw, rw)


def solve(pairs: Sequence[MotionPair], init: Pose, opts: SolveOptions = SolveOptions()) -> CalibrationEstimate:
    """Gauss-Newton on SE(3) from ``init``; see the module docstring."""
    if not pairs:
        raise EstimationError("cannot solve for the extrinsic without motion pairs")
    batch = PairBatch(pairs)
    if opts.numeric_jacobian:
        def system(th):
            return _numeric_system(th, pairs, batch.L)
    else:
        system = batch.whitened_system

    theta = init
    converged = False
    costs = []
    iterations = 0
    for iterations in range(1, opts.max_iterations + 1):
        rw, Jw = system(theta)
        cost = float(rw @ rw)
        costs.append(cost)
        delta = tsvd_update(Jw, rw, opts.tsvd_threshold) if opts.use_tsvd else normal_update(Jw, rw)
        if float(np.linalg.norm(delta)) < opts.step_tolerance:
            theta = compose(theta, exp(delta))
            converged = True
            break
        # halve the step until the whitened cost does not increase
        for _ in range(10):
            candidate = compose(theta, exp(delta))
            if batch.whitened_cost(candidate) <= cost:
                theta = candidate
                break
            delta = 0.5 * delta
        else:
            converged = True
            break

    rw, Jw = system(theta)
    dec = scaled_svd(Jw, opts.tsvd_threshold if opts.use_tsvd else 0.0)
    cov, entropy, obs = _marginals(dec)
    return CalibrationEstimate(
        theta=theta,
        cov=cov,
        entropy=entropy,
        obs_scores=obs,
        numerical_rank=dec.rank,
        converged=converged,
        iterations=iterations,
        cost=float(rw @ rw),
        cost_history=tuple(costs),
    )
