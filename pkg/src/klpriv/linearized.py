"""First-order expansion of a network around a reference parameter vector.

The linearized model is f_lin(W; x) = f(W0; x) + J(x) (W - W0) with J the
output Jacobian at W0.  Training this model is convex in W, and its Gram
matrix J J^T drives both the interpolation construction and the convergence
analysis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import (
    LossKind,
    NetArch,
    ParamVector,
    forward,
    loss_batch,
    output_jacobian,
    residual_batch,
)
from .numerics import RankDeficiencyError, psd_spectrum, running_mean, solve_psd


@dataclass(frozen=True)
class NtkFeatures:
    """Frozen expansion point: reference weights, inputs, outputs and Jacobian.

    ``jac`` has one row per (example, output) pair, example-major, so row
    ``i * o + j`` is the gradient of output j on example i.
    """

    arch: NetArch
    W0: ParamVector
    X: np.ndarray
    f0: np.ndarray          # (n, o) outputs at W0
    jac: np.ndarray         # (n * o, P)

    @property
    def n(self) -> int:
        return self.X.shape[0]


def jacobian_rows(params: ParamVector, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Outputs (n, o) and stacked Jacobian rows (n*o, P) at the given weights."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    arch = params.arch
    f0 = np.empty((n, arch.o))
    jac = np.empty((n * arch.o, arch.num_params))
    for i in range(n):
        f, _ = forward(params, X[i])
        f0[i] = f
        jac[i * arch.o:(i + 1) * arch.o] = output_jacobian(params, X[i])
    return f0, jac


def build_features(params: ParamVector, X: np.ndarray) -> NtkFeatures:
    """Expand the network around ``params`` on the rows of ``X``."""
    f0, jac = jacobian_rows(params, X)
    return NtkFeatures(arch=params.arch, W0=params.copy(), X=np.array(X, dtype=float),
                       f0=f0, jac=jac)


def lin_forward(features: NtkFeatures, W: ParamVector) -> np.ndarray:
    """Predictions (n, o) of the linearized model at weights W."""
    shift = features.jac @ (W.flat - features.W0.flat)
    return features.f0 + shift.reshape(features.f0.shape)


def lin_per_example_grads(features: NtkFeatures, W: ParamVector, Y, loss: LossKind) -> np.ndarray:
    """Per-example loss gradients of the linearized model, shape (n, P)."""
    preds = lin_forward(features, W)
    R = residual_batch(preds, Y, loss)
    n, o = preds.shape
    jac_view = features.jac.reshape(n, o, -1)
    return np.einsum("nop,no->np", jac_view, R)


def lin_empirical_grad(features: NtkFeatures, W: ParamVector, Y, loss: LossKind) -> ParamVector:
    """Mean per-example gradient of the linearized model."""
    G = lin_per_example_grads(features, W, Y, loss)
    return ParamVector(features.arch, G.mean(axis=0))


def lin_empirical_loss(features: NtkFeatures, W: ParamVector, Y, loss: LossKind) -> float:
    """Mean per-example loss of the linearized model at weights W."""
    return float(np.mean(loss_batch(lin_forward(features, W), Y, loss)))


@dataclass(frozen=True)
class GramAnalysis:
    """Spectrum summary of the Gram matrix K = J J^T for a single output."""

    K: np.ndarray
    eigenvalues: np.ndarray
    rank: int
    lambda_min: float       # smallest eigenvalue counted in the rank


def gram_analysis(features: NtkFeatures, tol: float = 1e-10) -> GramAnalysis:
    """Gram matrix and spectrum of the features; single-output models only."""
    if features.arch.o != 1:
        raise ValueError("gram analysis is defined for single-output models")
    K = features.jac @ features.jac.T
    eigvals, rank, lam_min = psd_spectrum(K, tol=tol)
    return GramAnalysis(K=K, eigenvalues=eigvals, rank=rank, lambda_min=lam_min)


@dataclass(frozen=True)
class LazySolution:
    """Minimum-norm interpolator pushing every margin to 2 ln(n).

    ``alpha_gap`` certifies near-optimality: the empirical loss minimum is
    non-negative, so the achieved loss itself bounds the optimality gap.
    """

    Wstar: ParamVector
    R: float                # squared parameter distance ||Wstar - W0||^2
    achieved_loss: float
    alpha_gap: float
    ridge_used: float


def lazy_solution(features: NtkFeatures, labels: np.ndarray, ridge: float | None = None) -> LazySolution:
    """Construct the dual-space interpolator of the linearized model.

    Targets t = 2 ln(n) y - f0 are hit by W* = W0 + J^T alpha with
    alpha = K^{-1} t, giving logistic loss log(1 + n^-2) at every example.

    Args:
        features: expansion with a single output.
        labels: +-1 labels, shape (n,).
        ridge: solver regularizer; ``None`` picks 1e-10 * trace(K) / n,
            pass 0.0 for an exact solve on a full-rank Gram matrix.
    """
    if features.arch.o != 1:
        raise ValueError("lazy construction is defined for single-output models")
    y = np.asarray(labels, dtype=float).reshape(-1)
    n = features.n
    if y.shape != (n,) or not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +-1 with one entry per example")
    if n < 1:
        raise ValueError("need at least one example")
    K = features.jac @ features.jac.T
    _, rank, _ = psd_spectrum(K)
    if rank < n:
        raise RankDeficiencyError(rank, n)
    if ridge is None:
        ridge = 1e-10 * float(np.trace(K)) / n
    t = 2.0 * np.log(n) * y - features.f0[:, 0]
    alpha = solve_psd(K, t, ridge=ridge)
    Wstar = ParamVector(features.arch, features.W0.flat + features.jac.T @ alpha)
    R = float(alpha @ (K @ alpha))
    achieved = lin_empirical_loss(features, Wstar, y, LossKind.LOGISTIC_SINGLE)
    return LazySolution(Wstar=Wstar, R=R, achieved_loss=achieved,
                        alpha_gap=achieved, ridge_used=float(ridge))


def running_average(params_seq) -> ParamVector:
    """Arithmetic mean of a sequence of parameter vectors on one architecture."""
    params_seq = list(params_seq)
    if not params_seq:
        raise ValueError("need at least one parameter vector")
    arch = params_seq[0].arch
    if any(p.arch != arch for p in params_seq):
        raise ValueError("all parameter vectors must share an architecture")
    return ParamVector(arch, running_mean([p.flat for p in params_seq]))
