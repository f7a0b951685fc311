"""Empirical KL estimation for noisy gradient descent.

A run trains on the dataset D only.  At every step the per-example gradients
give, for each neighbor candidate D', the squared empirical-gradient
difference ||grad L(W; D) - grad L(W; D')||^2; scaled by eta over the
convention constant times sigma^2 these accumulate into the KL estimate.
Traces keep the raw squared differences so a different noise level or
constant convention can be replayed without retraining.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .accountant import KLConstant, gradient_norm_constant_B
from .data import Dataset, Neighbor, NeighborSet
from .linearized import NtkFeatures, jacobian_rows, lin_forward
from .network import (
    InitScheme,
    LossKind,
    NetArch,
    ParamVector,
    as_scheme,
    backprop_deltas,
    forward,
    forward_batch,
    init_betas,
    output_jacobian,
    residual_batch,
    sample_init,
)
from .numerics import RngStream, psd_spectrum


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of a noisy-GD estimation run."""

    eta: float
    steps: int
    sigma2: float
    runs: int = 6
    seed: int = 0
    kl_constant: KLConstant = KLConstant.PAPER
    loss: LossKind | None = None       # None: inferred from the output width
    record_every: int = 1
    divergence_threshold: float = 1e12

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("step size must be positive")
        if self.steps < 0:
            raise ValueError("step count must be non-negative")
        if self.sigma2 <= 0:
            raise ValueError("noise variance must be positive for KL estimation")
        if self.runs < 1:
            raise ValueError("need at least one run")
        if self.record_every < 1:
            raise ValueError("record_every must be positive")


@dataclass(frozen=True)
class DnnModel:
    """Train the network itself, with a fresh initialization per run."""

    arch: NetArch
    scheme: InitScheme

    def __post_init__(self):
        object.__setattr__(self, "scheme", as_scheme(self.scheme))


@dataclass(frozen=True)
class LinearizedModel:
    """Train the linearized model around the expansion point in ``features``."""

    features: NtkFeatures

    @property
    def arch(self) -> NetArch:
        return self.features.arch


@dataclass
class KLTrace:
    """One training run's accumulation record.

    ``per_step_sq_diffs`` has one row per completed step and one column per
    neighbor; replaying it with another sigma^2 or constant convention only
    rescales the accumulation.  After a divergence abort the remaining
    recorded entries are infinite.
    """

    eta: float
    sigma2: float
    convention: KLConstant
    recorded_steps: np.ndarray
    per_step_sq_diffs: np.ndarray
    cumulative_per_neighbor: np.ndarray
    cumulative_worst: np.ndarray
    diverged: bool


@dataclass
class KLEstimationResult:
    """Aggregate over runs: mean/std of the worst-neighbor cumulative KL."""

    traces: list[KLTrace]
    recorded_steps: np.ndarray
    worst_mean: np.ndarray
    worst_std: np.ndarray
    diverged_any: bool


@dataclass(frozen=True)
class McReport:
    """Monte Carlo summary against a closed-form reference value or bound."""

    mean: float
    stderr: float
    samples: int
    reference: float
    z_score: float
    reference_kind: str      # "exact" or "upper_bound"
    violation: bool


def run_streams(seed: int, run: int) -> tuple[RngStream, RngStream]:
    """(init stream, noise stream) used by :func:`run_kl_estimation` for a run."""
    base = RngStream(seed).child(run)
    return base.child(0), base.child(1)


def noisy_gd_step(W: ParamVector, grad: ParamVector, eta: float, sigma2: float,
                  rng: RngStream) -> ParamVector:
    """One update W - eta * grad + sqrt(2 eta sigma2) * Z with Z standard normal."""
    if W.arch != grad.arch:
        raise ValueError("weights and gradient must share an architecture")
    if eta < 0:
        raise ValueError("step size must be non-negative")
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    new = W.flat - eta * grad.flat
    if sigma2 > 0 and eta > 0:
        noise = rng.generator().standard_normal(W.flat.size)
        new = new + math.sqrt(2.0 * eta * sigma2) * noise
    return ParamVector(W.arch, new)


def _as_matrix(grads) -> np.ndarray:
    if isinstance(grads, np.ndarray):
        G = np.atleast_2d(np.asarray(grads, dtype=float))
    else:
        G = np.stack([g.flat if isinstance(g, ParamVector) else np.asarray(g, dtype=float)
                      for g in grads])
    return G


def _diffs_from_scalars(n: int, notion: Neighbor, norms_sq, dots_S, S_sq,
                        pool_norms_sq=None, pool_dots_S=None, cross=None,
                        pairs=None) -> np.ndarray:
    """Squared empirical-gradient differences from cached inner products.

    All three notions reduce, via the gradient sum S, to combinations of
    per-example norms and inner products; nothing here touches a parameter-
    sized vector.
    """
    if notion is Neighbor.REMOVE_ONE:
        if n < 2:
            raise ValueError("remove-one needs at least two records")
        num = n * n * norms_sq - 2.0 * n * dots_S + S_sq
        return num / (n * n * (n - 1) * (n - 1))
    if notion is Neighbor.ADD_ONE:
        num = S_sq - 2.0 * n * pool_dots_S + n * n * pool_norms_sq
        return num / (n * n * (n + 1) * (n + 1))
    # replace-one: ||g_i - g'_j||^2 / n^2 over the requested pairs
    if pairs is None:
        pairs = [(i, j) for i in range(n) for j in range(cross.shape[1])]
    idx = np.array(pairs, dtype=int).reshape(-1, 2)
    num = norms_sq[idx[:, 0]] - 2.0 * cross[idx[:, 0], idx[:, 1]] + pool_norms_sq[idx[:, 1]]
    return num / (n * n)


def neighbor_grad_diffs(per_example_grads, pool_grads=None,
                        notion: Neighbor = Neighbor.REMOVE_ONE,
                        pairs=None) -> np.ndarray:
    """Squared gradient differences against every neighbor candidate.

    Args:
        per_example_grads: per-example loss gradients on D (stacked array or
            list of parameter vectors).
        pool_grads: gradients of the candidate records (add / replace only).
        notion: adjacency notion; determines the enumeration.
        pairs: optional (record, pool) index pairs restricting replace-one.

    Returns:
        One squared difference per neighbor: n entries for remove-one, one
        per pool record for add-one, one per (i, j) pair for replace-one.
    """
    if isinstance(notion, str):
        notion = Neighbor(notion)
    G = _as_matrix(per_example_grads)
    n = G.shape[0]
    S = G.sum(axis=0)
    norms_sq = np.einsum("ip,ip->i", G, G)
    dots_S = G @ S
    S_sq = float(S @ S)
    if notion is Neighbor.REMOVE_ONE:
        return _diffs_from_scalars(n, notion, norms_sq, dots_S, S_sq)
    if pool_grads is None:
        raise ValueError(f"{notion.value} needs pool gradients")
    P = _as_matrix(pool_grads)
    pool_norms_sq = np.einsum("ip,ip->i", P, P)
    if notion is Neighbor.ADD_ONE:
        return _diffs_from_scalars(n, notion, norms_sq, dots_S, S_sq,
                                   pool_norms_sq=pool_norms_sq, pool_dots_S=P @ S)
    return _diffs_from_scalars(n, notion, norms_sq, dots_S, S_sq,
                               pool_norms_sq=pool_norms_sq, cross=G @ P.T, pairs=pairs)


def _resolve_loss(arch: NetArch, loss: LossKind | None) -> LossKind:
    if loss is None:
        return LossKind.LOGISTIC_SINGLE if arch.o == 1 else LossKind.CROSS_ENTROPY_MULTI
    if loss is LossKind.LOGISTIC_SINGLE and arch.o != 1:
        raise ValueError("logistic loss needs a single output")
    return loss


class _DnnStepStats:
    """Per-step gradient statistics for the full network.

    Per-example layer gradients are outer products delta_l h_{l-1}^T, so all
    norms and inner products factor into activation and delta Grams; the
    parameter-sized per-example matrix is never materialized.
    """

    def __init__(self, arch: NetArch, data: Dataset, neighbors: NeighborSet, loss: LossKind):
        self.arch = arch
        self.data = data
        self.neighbors = neighbors
        self.loss = loss
        self.need_pool = neighbors.notion is not Neighbor.REMOVE_ONE
        self.need_cross = neighbors.notion is Neighbor.REPLACE_ONE

    def __call__(self, W: ParamVector):
        arch = self.arch
        F, acts = forward_batch(W, self.data.X)
        if not np.all(np.isfinite(F)):
            return None
        deltas = backprop_deltas(W, acts, residual_batch(F, self.data.Y, self.loss))
        blocks = [deltas[l].T @ acts[l] for l in range(arch.L)]
        S_sq = sum(float(np.sum(B * B)) for B in blocks)
        norms_sq = np.zeros(self.data.n)
        dots_S = np.zeros(self.data.n)
        for l in range(arch.L):
            norms_sq += np.einsum("na,na->n", deltas[l], deltas[l]) * \
                np.einsum("nb,nb->n", acts[l], acts[l])
            dots_S += np.einsum("na,na->n", deltas[l], acts[l] @ blocks[l].T)
        mean_grad = np.concatenate([B.ravel() for B in blocks]) / self.data.n
        pool_norms_sq = pool_dots_S = cross = None
        if self.need_pool:
            pool = self.neighbors.pool
            Fp, acts_p = forward_batch(W, pool.X)
            if not np.all(np.isfinite(Fp)):
                return None
            deltas_p = backprop_deltas(W, acts_p, residual_batch(Fp, pool.Y, self.loss))
            pool_norms_sq = np.zeros(pool.n)
            pool_dots_S = np.zeros(pool.n)
            for l in range(arch.L):
                pool_norms_sq += np.einsum("na,na->n", deltas_p[l], deltas_p[l]) * \
                    np.einsum("nb,nb->n", acts_p[l], acts_p[l])
                pool_dots_S += np.einsum("na,na->n", deltas_p[l], acts_p[l] @ blocks[l].T)
            if self.need_cross:
                cross = np.zeros((self.data.n, pool.n))
                for l in range(arch.L):
                    cross += (deltas[l] @ deltas_p[l].T) * (acts[l] @ acts_p[l].T)
        return norms_sq, dots_S, S_sq, pool_norms_sq, pool_dots_S, cross, mean_grad


class _LinStepStats:
    """Per-step gradient statistics for the linearized model.

    Jacobian rows are frozen at the expansion point, so pool features are
    computed once and per-example gradients are small residual-weighted
    combinations of cached rows.
    """

    def __init__(self, model: LinearizedModel, data: Dataset, neighbors: NeighborSet,
                 loss: LossKind):
        self.features = model.features
        self.data = data
        self.neighbors = neighbors
        self.loss = loss
        self.need_pool = neighbors.notion is not Neighbor.REMOVE_ONE
        self.need_cross = neighbors.notion is Neighbor.REPLACE_ONE
        if self.need_pool:
            pool = neighbors.pool
            self.pool_f0, self.pool_jac = jacobian_rows(self.features.W0, pool.X)

    def _grads(self, preds, Y, jac) -> np.ndarray:
        R = residual_batch(preds, Y, self.loss)
        n, o = preds.shape
        return np.einsum("nop,no->np", jac.reshape(n, o, -1), R)

    def __call__(self, W: ParamVector):
        feats = self.features
        preds = lin_forward(feats, W)
        if not np.all(np.isfinite(preds)):
            return None
        G = self._grads(preds, self.data.Y, feats.jac)
        S = G.sum(axis=0)
        norms_sq = np.einsum("ip,ip->i", G, G)
        dots_S = G @ S
        S_sq = float(S @ S)
        mean_grad = S / self.data.n
        pool_norms_sq = pool_dots_S = cross = None
        if self.need_pool:
            shift = (self.pool_jac @ (W.flat - feats.W0.flat)).reshape(self.pool_f0.shape)
            Gp = self._grads(self.pool_f0 + shift, self.neighbors.pool.Y, self.pool_jac)
            pool_norms_sq = np.einsum("ip,ip->i", Gp, Gp)
            pool_dots_S = Gp @ S
            if self.need_cross:
                cross = G @ Gp.T
        return norms_sq, dots_S, S_sq, pool_norms_sq, pool_dots_S, cross, mean_grad


def _recorded_steps(steps: int, record_every: int) -> np.ndarray:
    recorded = [k for k in range(1, steps + 1) if k % record_every == 0]
    if steps > 0 and (not recorded or recorded[-1] != steps):
        recorded.append(steps)
    return np.array(recorded, dtype=int)


def run_kl_estimation(model, data: Dataset, neighbors: NeighborSet,
                      cfg: TrainConfig) -> KLEstimationResult:
    """Estimate the KL privacy loss of noisy GD against worst-case neighbors.

    Each run trains on ``data`` alone; the per-step squared gradient
    differences against every neighbor candidate accumulate into per-neighbor
    KL estimates, and the running maximum over neighbors is recorded.  Runs
    differ in initialization (full network) and injected noise; all streams
    derive deterministically from ``cfg.seed``.

    Returns:
        Result with one trace per run and mean/std across runs of the
        worst-neighbor cumulative estimate at each recorded step.
    """
    if not isinstance(model, (DnnModel, LinearizedModel)):
        raise TypeError("model must be DnnModel or LinearizedModel")
    arch = model.arch
    if data.d != arch.d:
        raise ValueError("dataset dimension does not match the architecture")
    if data.num_outputs != arch.o:
        raise ValueError("label width does not match the architecture")
    loss = _resolve_loss(arch, cfg.loss)
    if neighbors.notion is Neighbor.REMOVE_ONE and data.n < 2:
        raise ValueError("remove-one estimation needs at least two records")
    if isinstance(model, DnnModel):
        betas = init_betas(model.scheme, arch)
        make_stats = _DnnStepStats(arch, data, neighbors, loss)
    else:
        betas = None
        make_stats = _LinStepStats(model, data, neighbors, loss)
    pairs = list(neighbors.indices) if neighbors.notion is Neighbor.REPLACE_ONE else None
    num_neighbors = neighbors.count
    recorded = _recorded_steps(cfg.steps, cfg.record_every)
    scale = cfg.eta / (cfg.kl_constant.denominator_factor * cfg.sigma2)

    traces: list[KLTrace] = []
    for run in range(cfg.runs):
        init_stream, noise_stream = run_streams(cfg.seed, run)
        if isinstance(model, DnnModel):
            W = sample_init(arch, betas, init_stream)
        else:
            W = model.features.W0.copy()
        sq_rows = []
        cum = np.zeros(num_neighbors)
        worst = []
        diverged = False
        for k in range(cfg.steps):
            stats = make_stats(W)
            if stats is None:
                diverged = True
                break
            norms_sq, dots_S, S_sq, pn, pd, cross, mean_grad = stats
            if not np.isfinite(S_sq) or np.linalg.norm(mean_grad) > cfg.divergence_threshold:
                diverged = True
                break
            diffs = _diffs_from_scalars(data.n, neighbors.notion, norms_sq, dots_S, S_sq,
                                        pool_norms_sq=pn, pool_dots_S=pd, cross=cross,
                                        pairs=pairs)
            sq_rows.append(diffs)
            cum += scale * diffs
            if (k + 1) % cfg.record_every == 0 or k + 1 == cfg.steps:
                worst.append(cum.max() if num_neighbors else 0.0)
            W = noisy_gd_step(W, ParamVector(arch, mean_grad), cfg.eta, cfg.sigma2,
                              noise_stream.child(k))
        worst = np.array(worst)
        if diverged:
            pad = len(recorded) - worst.size
            worst = np.concatenate([worst, np.full(pad, math.inf)])
            cum = np.full(num_neighbors, math.inf)
        traces.append(KLTrace(
            eta=cfg.eta, sigma2=cfg.sigma2, convention=cfg.kl_constant,
            recorded_steps=recorded.copy(),
            per_step_sq_diffs=(np.stack(sq_rows) if sq_rows
                               else np.zeros((0, num_neighbors))),
            cumulative_per_neighbor=cum, cumulative_worst=worst, diverged=diverged))

    worst_matrix = np.stack([t.cumulative_worst for t in traces])
    with np.errstate(invalid="ignore"):
        worst_mean = worst_matrix.mean(axis=0)
        worst_std = (worst_matrix.std(axis=0, ddof=1) if cfg.runs > 1
                     else np.zeros_like(worst_mean))
    return KLEstimationResult(traces=traces, recorded_steps=recorded,
                              worst_mean=worst_mean, worst_std=worst_std,
                              diverged_any=any(t.diverged for t in traces))


def replay_worst(trace: KLTrace, sigma2: float | None = None,
                 convention: KLConstant | None = None) -> np.ndarray:
    """Re-accumulate a trace's worst-neighbor KL under different constants.

    Only the accumulation constant changes; the recorded trajectory and its
    squared gradient differences are reused as is.
    """
    sigma2 = trace.sigma2 if sigma2 is None else sigma2
    convention = trace.convention if convention is None else convention
    if sigma2 <= 0:
        raise ValueError("noise variance must be positive")
    scale = trace.eta / (convention.denominator_factor * sigma2)
    completed = trace.per_step_sq_diffs.shape[0]
    if trace.per_step_sq_diffs.shape[1] == 0:
        return np.zeros(trace.recorded_steps.size)
    cum = np.cumsum(scale * trace.per_step_sq_diffs, axis=0)
    out = np.empty(trace.recorded_steps.size)
    for idx, step in enumerate(trace.recorded_steps):
        out[idx] = cum[step - 1].max() if step <= completed else math.inf
    return out


# ---------------------------------------------------------------------------
# Monte Carlo verification of the initialization moments.
# ---------------------------------------------------------------------------

def _mc_report(vals: np.ndarray, reference: float, kind: str, slack: float = 1.2) -> McReport:
    vals = np.asarray(vals, dtype=float)
    if vals.size < 2:
        raise ValueError("need at least two samples")
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size))
    if stderr == 0.0:
        z = 0.0 if mean == reference else math.copysign(math.inf, mean - reference)
    else:
        z = (mean - reference) / stderr
    if kind == "exact":
        violation = abs(z) > 4.0
    else:
        violation = mean > slack * reference
    return McReport(mean=mean, stderr=stderr, samples=vals.size, reference=reference,
                    z_score=z, reference_kind=kind, violation=violation)


def mc_grad_norm_at_init(arch: NetArch, scheme, x: np.ndarray, samples: int,
                         rng: RngStream) -> McReport:
    """Sample E ||df/dW||_F^2 over fresh initializations against the closed form."""
    from .accountant import expected_grad_norm_init

    betas = init_betas(scheme, arch)
    x = np.asarray(x, dtype=float)
    vals = np.empty(samples)
    for s in range(samples):
        W = sample_init(arch, betas, rng.child(s))
        J = output_jacobian(W, x)
        vals[s] = float(np.sum(J * J))
    ref = expected_grad_norm_init(arch, betas, float(x @ x))
    return _mc_report(vals, ref, "exact")


def mc_output_sqnorm(arch: NetArch, scheme, x: np.ndarray, samples: int,
                     rng: RngStream) -> McReport:
    """Sample E ||f(x)||^2 over fresh initializations against the closed form."""
    from .accountant import expected_output_sqnorm_init

    betas = init_betas(scheme, arch)
    x = np.asarray(x, dtype=float)
    vals = np.empty(samples)
    for s in range(samples):
        W = sample_init(arch, betas, rng.child(s))
        f, _ = forward(W, x)
        vals[s] = float(f @ f)
    ref = expected_output_sqnorm_init(arch, betas, float(x @ x))
    return _mc_report(vals, ref, "exact")


def mc_linearized_grad_diff(arch: NetArch, scheme, record_a, record_b, n: int,
                            samples: int, rng: RngStream, slack: float = 1.2) -> McReport:
    """Sample the replace-one squared gradient difference at initialization.

    For single-output logistic records (x, y) and (x', y'), the mean of
    ||grad l(f_W(x); y) - grad l(f_W(x'); y')||^2 / n^2 over fresh
    initializations is compared against the uniform bound 4 B / n^2.
    """
    if arch.o != 1:
        raise ValueError("the gradient-difference bound is for single-output models")
    if n < 1:
        raise ValueError("dataset size must be positive")
    betas = init_betas(scheme, arch)
    xa, ya = np.asarray(record_a[0], dtype=float), float(record_a[1])
    xb, yb = np.asarray(record_b[0], dtype=float), float(record_b[1])
    vals = np.empty(samples)
    for s in range(samples):
        W = sample_init(arch, betas, rng.child(s))
        ga = _single_logistic_grad(W, xa, ya)
        gb = _single_logistic_grad(W, xb, yb)
        d = ga - gb
        vals[s] = float(d @ d) / n ** 2
    ref = 4.0 * gradient_norm_constant_B(arch, betas) / n ** 2
    return _mc_report(vals, ref, "upper_bound", slack=slack)


def _single_logistic_grad(W: ParamVector, x: np.ndarray, y: float) -> np.ndarray:
    f, _ = forward(W, x)
    J = output_jacobian(W, x)
    r = residual_batch(f[None, :], np.array([y]), LossKind.LOGISTIC_SINGLE)
    return r[0, 0] * J[0]


def estimate_rank_MT(gradient_samples, tol: float = 1e-10) -> int:
    """Numerical rank of the span of sampled gradients via their Gram matrix."""
    G = _as_matrix(gradient_samples)
    gram = G @ G.T
    _, rank, _ = psd_spectrum(gram, tol=tol)
    return rank
