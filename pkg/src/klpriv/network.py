"""Fully connected ReLU networks without biases.

Layer l maps h_{l-1} to h_l = relu(W_l h_{l-1}) for l < L; the last layer is
linear, f = W_L h_{L-1}.  The ReLU derivative at exactly zero is taken to be
zero everywhere, so gradient masks are recoverable from the activations.
Parameters travel as one flat float64 vector with layers concatenated in
order and each layer matrix flattened row-major.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .numerics import RngStream, gaussian_matrix

SCHEME_NAMES = ("lecun", "he", "ntk", "xavier")


@dataclass(frozen=True)
class NetArch:
    """Widths of a depth-L network: input d, hidden widths, output o."""

    d: int
    hidden: tuple[int, ...]
    o: int

    def __post_init__(self):
        if self.d < 1 or self.o < 1:
            raise ValueError("input and output widths must be positive")
        if len(self.hidden) == 0:
            raise ValueError("need at least one hidden layer (depth >= 2)")
        if any(m < 1 for m in self.hidden):
            raise ValueError("hidden widths must be positive")

    @classmethod
    def uniform(cls, d: int, m: int, L: int, o: int) -> "NetArch":
        """Depth-L architecture with all L-1 hidden layers of width m."""
        if L < 2:
            raise ValueError("depth must be at least 2")
        return cls(d=d, hidden=(m,) * (L - 1), o=o)

    @property
    def L(self) -> int:
        return len(self.hidden) + 1

    @property
    def widths(self) -> tuple[int, ...]:
        """(m_0, ..., m_L) with m_0 = d and m_L = o."""
        return (self.d, *self.hidden, self.o)

    @cached_property
    def layer_shapes(self) -> tuple[tuple[int, int], ...]:
        w = self.widths
        return tuple((w[l], w[l - 1]) for l in range(1, self.L + 1))

    @cached_property
    def layer_offsets(self) -> tuple[int, ...]:
        offs = [0]
        for rows, cols in self.layer_shapes:
            offs.append(offs[-1] + rows * cols)
        return tuple(offs)

    @property
    def num_params(self) -> int:
        return self.layer_offsets[-1]


@dataclass(frozen=True)
class InitScheme:
    """Initialization scheme: per-layer Gaussian entry variances beta_l.

    The named schemes derive beta_l from the architecture; ``custom`` carries
    explicit variances for all L layers.
    """

    kind: str
    betas: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_NAMES + ("custom",):
            raise ValueError(f"unknown scheme {self.kind!r}")
        if self.kind == "custom" and self.betas is None:
            raise ValueError("custom scheme needs explicit betas")
        if self.kind != "custom" and self.betas is not None:
            raise ValueError("named schemes derive betas from the architecture")

    @classmethod
    def custom(cls, betas) -> "InitScheme":
        return cls("custom", tuple(float(b) for b in betas))


def as_scheme(scheme: "InitScheme | str") -> InitScheme:
    if isinstance(scheme, InitScheme):
        return scheme
    return InitScheme(str(scheme))


def init_betas(scheme: "InitScheme | str", arch: NetArch) -> tuple[float, ...]:
    """Per-layer entry variances (beta_1, ..., beta_L) for a scheme."""
    scheme = as_scheme(scheme)
    w = arch.widths
    L = arch.L
    if scheme.kind == "custom":
        betas = scheme.betas
        if len(betas) != L:
            raise ValueError(f"custom betas must have length {L}")
        # variance 0 is allowed for custom schemes (degenerate init at zero)
        if any(b < 0 for b in betas):
            raise ValueError("layer variances must be non-negative")
        return betas
    elif scheme.kind == "lecun":
        betas = tuple(1.0 / w[l - 1] for l in range(1, L + 1))
    elif scheme.kind == "he":
        betas = tuple(2.0 / w[l - 1] for l in range(1, L + 1))
    elif scheme.kind == "ntk":
        betas = tuple(2.0 / w[l] for l in range(1, L)) + (1.0 / arch.o,)
    else:  # xavier
        betas = tuple(2.0 / (w[l - 1] + w[l]) for l in range(1, L + 1))
    return betas


@dataclass
class ParamVector:
    """Flat parameter vector with layer views for a fixed architecture."""

    arch: NetArch
    flat: np.ndarray

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=float)
        if self.flat.shape != (self.arch.num_params,):
            raise ValueError(
                f"expected {self.arch.num_params} parameters, got {self.flat.shape}"
            )

    @classmethod
    def zeros(cls, arch: NetArch) -> "ParamVector":
        return cls(arch, np.zeros(arch.num_params))

    @classmethod
    def from_layers(cls, arch: NetArch, mats) -> "ParamVector":
        flat = np.concatenate([np.asarray(M, dtype=float).ravel() for M in mats])
        return cls(arch, flat)

    def layer(self, l: int) -> np.ndarray:
        """Weight matrix of layer l (1-based) as a view into the flat vector."""
        if not 1 <= l <= self.arch.L:
            raise ValueError(f"layer index must be in 1..{self.arch.L}")
        offs = self.arch.layer_offsets
        rows, cols = self.arch.layer_shapes[l - 1]
        return self.flat[offs[l - 1]:offs[l]].reshape(rows, cols)

    def layers(self) -> list[np.ndarray]:
        return [self.layer(l) for l in range(1, self.arch.L + 1)]

    def copy(self) -> "ParamVector":
        return ParamVector(self.arch, self.flat.copy())


class LossKind(enum.Enum):
    """Per-example losses; labels are +-1 scalars or one-hot vectors."""

    LOGISTIC_SINGLE = "logistic"
    CROSS_ENTROPY_MULTI = "cross-entropy"


def sample_init(arch: NetArch, betas, rng: RngStream) -> ParamVector:
    """Draw W_l with iid N(0, beta_l) entries, one substream per layer."""
    betas = tuple(betas)
    if len(betas) != arch.L:
        raise ValueError(f"need {arch.L} layer variances, got {len(betas)}")
    mats = []
    for l, (rows, cols) in enumerate(arch.layer_shapes, start=1):
        mats.append(gaussian_matrix(rows, cols, betas[l - 1], rng.child(l)))
    return ParamVector.from_layers(arch, mats)


def forward(params: ParamVector, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Network output and all activations (h_0 = x, ..., h_{L-1}).

    Returns:
        ``(f, acts)`` with ``f`` of shape (o,) and ``acts`` a list of the L
        activation vectors feeding each layer.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (params.arch.d,):
        raise ValueError(f"input must have shape ({params.arch.d},)")
    acts = [x]
    h = x
    for l in range(1, params.arch.L):
        h = np.maximum(params.layer(l) @ h, 0.0)
        acts.append(h)
    f = params.layer(params.arch.L) @ h
    return f, acts


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def loss_value(f: np.ndarray, y, loss: LossKind) -> float:
    """Per-example loss at network output f."""
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if loss is LossKind.LOGISTIC_SINGLE:
        if f.shape != (1,):
            raise ValueError("logistic loss needs a single output")
        yv = float(np.asarray(y).reshape(()))
        if yv not in (-1.0, 1.0):
            raise ValueError("logistic labels must be +-1")
        return float(np.logaddexp(0.0, -yv * f[0]))
    y = np.asarray(y, dtype=float)
    if y.shape != f.shape:
        raise ValueError("one-hot label must match the output shape")
    m = np.max(f)
    return float(m + np.log(np.sum(np.exp(f - m))) - f @ y)


def loss_residual(f: np.ndarray, y, loss: LossKind) -> np.ndarray:
    """Derivative of the per-example loss with respect to the output f."""
    f = np.atleast_1d(np.asarray(f, dtype=float))
    if loss is LossKind.LOGISTIC_SINGLE:
        if f.shape != (1,):
            raise ValueError("logistic loss needs a single output")
        yv = float(np.asarray(y).reshape(()))
        if yv not in (-1.0, 1.0):
            raise ValueError("logistic labels must be +-1")
        return -yv * _sigmoid(np.array([-yv * f[0]]))
    y = np.asarray(y, dtype=float)
    if y.shape != f.shape:
        raise ValueError("one-hot label must match the output shape")
    z = f - np.max(f)
    p = np.exp(z)
    return p / p.sum() - y


def per_example_grad(params: ParamVector, x: np.ndarray, y, loss: LossKind) -> ParamVector:
    """Gradient of the per-example loss by reverse accumulation."""
    f, acts = forward(params, x)
    if not np.all(np.isfinite(f)):
        raise ValueError("forward pass produced non-finite outputs")
    delta = loss_residual(f, y, loss)
    L = params.arch.L
    blocks: list[np.ndarray] = [np.empty(0)] * L
    blocks[L - 1] = np.outer(delta, acts[L - 1])
    for l in range(L - 1, 0, -1):
        # masks use acts > 0, which equals preactivation > 0 under relu'(0)=0
        delta = (params.layer(l + 1).T @ delta) * (acts[l] > 0)
        blocks[l - 1] = np.outer(delta, acts[l - 1])
    return ParamVector.from_layers(params.arch, blocks)


def output_jacobian(params: ParamVector, x: np.ndarray) -> np.ndarray:
    """Jacobian of the network output with respect to the flat parameters.

    Row j holds the gradient of output coordinate j, laid out in the same
    order as :class:`ParamVector`.
    """
    f, acts = forward(params, x)
    arch = params.arch
    L, o = arch.L, arch.o
    jac = np.empty((o, arch.num_params))
    offs = arch.layer_offsets
    # M holds df/dh_l; start at the linear top layer and walk down.
    M = params.layer(L).copy()
    jac[:, offs[L - 1]:offs[L]] = np.einsum("ja,b->jab", np.eye(o), acts[L - 1]).reshape(o, -1)
    for l in range(L - 1, 0, -1):
        D = M * (acts[l] > 0)
        jac[:, offs[l - 1]:offs[l]] = np.einsum("ja,b->jab", D, acts[l - 1]).reshape(o, -1)
        if l > 1:
            M = D @ params.layer(l)
    return jac


def empirical_grad(params: ParamVector, X: np.ndarray, Y, loss: LossKind) -> ParamVector:
    """Mean per-example gradient over a dataset."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) design matrix")
    G = per_example_grad_batch(params, X, Y, loss)
    return ParamVector(params.arch, G.mean(axis=0))


# ---------------------------------------------------------------------------
# Batched internals.  These match the single-example ops exactly and exist so
# the estimator can train at width a few hundred without a Python-level loop.
# ---------------------------------------------------------------------------

def forward_batch(params: ParamVector, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Vectorized forward pass; returns (n, o) outputs and per-layer activations."""
    X = np.asarray(X, dtype=float)
    acts = [X]
    H = X
    for l in range(1, params.arch.L):
        H = np.maximum(H @ params.layer(l).T, 0.0)
        acts.append(H)
    F = H @ params.layer(params.arch.L).T
    return F, acts


def residual_batch(F: np.ndarray, Y, loss: LossKind) -> np.ndarray:
    """Loss derivatives for a batch of outputs, shape (n, o)."""
    F = np.asarray(F, dtype=float)
    if loss is LossKind.LOGISTIC_SINGLE:
        y = np.asarray(Y, dtype=float).reshape(-1)
        z = y * F[:, 0]
        return (-y * _sigmoid(-z))[:, None]
    Y = np.asarray(Y, dtype=float)
    Z = F - F.max(axis=1, keepdims=True)
    P = np.exp(Z)
    P /= P.sum(axis=1, keepdims=True)
    return P - Y


def loss_batch(F: np.ndarray, Y, loss: LossKind) -> np.ndarray:
    """Per-example losses for a batch of outputs."""
    F = np.asarray(F, dtype=float)
    if loss is LossKind.LOGISTIC_SINGLE:
        y = np.asarray(Y, dtype=float).reshape(-1)
        return np.logaddexp(0.0, -y * F[:, 0])
    Y = np.asarray(Y, dtype=float)
    m = F.max(axis=1)
    return m + np.log(np.exp(F - m[:, None]).sum(axis=1)) - np.einsum("no,no->n", F, Y)


def backprop_deltas(params: ParamVector, acts: list[np.ndarray], R: np.ndarray) -> list[np.ndarray]:
    """Per-layer delta vectors (n, m_l) from output residuals R of shape (n, o).

    The per-example gradient of layer l is the outer product of delta_l and
    h_{l-1}; callers exploit that rank-1 structure instead of materializing it.
    """
    L = params.arch.L
    deltas: list[np.ndarray] = [np.empty(0)] * L
    deltas[L - 1] = R
    D = R
    for l in range(L - 1, 0, -1):
        D = (D @ params.layer(l + 1)) * (acts[l] > 0)
        deltas[l - 1] = D
    return deltas


def per_example_grad_batch(params: ParamVector, X: np.ndarray, Y, loss: LossKind) -> np.ndarray:
    """All per-example loss gradients stacked into an (n, P) array."""
    F, acts = forward_batch(params, X)
    if not np.all(np.isfinite(F)):
        raise ValueError("forward pass produced non-finite outputs")
    deltas = backprop_deltas(params, acts, residual_batch(F, Y, loss))
    n = X.shape[0]
    offs = params.arch.layer_offsets
    G = np.empty((n, params.arch.num_params))
    for l in range(1, params.arch.L + 1):
        block = G[:, offs[l - 1]:offs[l]]
        np.einsum("na,nb->nab", deltas[l - 1], acts[l - 1],
                  out=block.reshape(n, *params.arch.layer_shapes[l - 1]))
    return G
