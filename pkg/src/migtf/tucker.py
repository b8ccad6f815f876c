"""Shared-factor Tucker scorer with manual forward/backward passes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


def mode_n_product(G, M, mode: int) -> np.ndarray:
    """Contract axis ``mode`` (1-based) of ``G`` with the first axis of ``M``.

    The contracted axis is replaced in place by ``M``'s second axis.
    """
    G = np.asarray(G)
    M = np.asarray(M)
    axis = mode - 1
    if not 0 <= axis < G.ndim:
        raise ShapeError(f"mode {mode} out of range for a {G.ndim}-way tensor")
    if M.ndim != 2 or M.shape[0] != G.shape[axis]:
        raise ShapeError(f"matrix of shape {M.shape} cannot contract mode {mode} of {G.shape}")
    out = np.tensordot(G, M, axes=([axis], [0]))
    return np.moveaxis(out, -1, axis)


@dataclass(frozen=True)
class DropoutSpec:
    """Probabilities at the input embedding, after ``G x1 u`` and after the relation contraction."""

    p1: float = 0.0
    p2: float = 0.0
    p3: float = 0.0

    def __post_init__(self):
        for p in (self.p1, self.p2, self.p3):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout probability {p} outside [0, 1)")


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5

    @classmethod
    def fresh(cls, dim, dtype=np.float64):
        return cls(np.ones(dim, dtype), np.zeros(dim, dtype), np.zeros(dim, dtype), np.ones(dim, dtype))


@dataclass
class TuckerParams:
    core: np.ndarray  # (d_e, d_e, d_r)
    E: np.ndarray  # (n_e, d_e)
    R: np.ndarray  # (n_r, d_r)
    bn0: BatchNormParams | None = None
    bn1: BatchNormParams | None = None

    def __post_init__(self):
        d_e, d_e2, d_r = self.core.shape
        if d_e != d_e2 or self.E.shape[1] != d_e or self.R.shape[1] != d_r:
            raise ShapeError(
                f"inconsistent shapes core={self.core.shape} E={self.E.shape} R={self.R.shape}")

    @property
    def n_entities(self):
        return self.E.shape[0]

    @property
    def n_relations(self):
        return self.R.shape[0]

    @property
    def dims(self):
        return self.core.shape[0], self.core.shape[2]

    def n_parameters(self) -> int:
        return self.core.size + self.E.size + self.R.size


def init_tucker(n_e: int, n_r: int, d_e: int, d_r: int, seed: int = 0,
                dtype=np.float32, batch_norm: bool = False) -> TuckerParams:
    """Glorot-normal factors and a uniform ``[-1, 1]`` core."""
    if min(n_e, n_r, d_e, d_r) < 1:
        raise ValueError("all dimensions must be positive")
    rng = np.random.default_rng(seed)
    E = rng.normal(0.0, np.sqrt(2.0 / (n_e + d_e)), size=(n_e, d_e))
    R = rng.normal(0.0, np.sqrt(2.0 / (n_r + d_r)), size=(n_r, d_r))
    core = rng.uniform(-1.0, 1.0, size=(d_e, d_e, d_r))
    bn0 = BatchNormParams.fresh(d_e, dtype) if batch_norm else None
    bn1 = BatchNormParams.fresh(d_e, dtype) if batch_norm else None
    return TuckerParams(core.astype(dtype), E.astype(dtype), R.astype(dtype), bn0, bn1)


def _dropout(x, p, rng):
    if p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def _bn_forward(x, bn: BatchNormParams, training: bool):
    gamma = np.asarray(bn.gamma, np.float64)
    shift = np.asarray(bn.beta, np.float64)
    if training:
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        n = x.shape[0]
        unbiased = var * n / (n - 1) if n > 1 else var
        bn.running_mean[...] = (1 - bn.momentum) * bn.running_mean + bn.momentum * mean
        bn.running_var[...] = (1 - bn.momentum) * bn.running_var + bn.momentum * unbiased
    else:
        mean = np.asarray(bn.running_mean, np.float64)
        var = np.asarray(bn.running_var, np.float64)
    inv_std = 1.0 / np.sqrt(var + bn.eps)
    xhat = (x - mean) * inv_std
    return gamma * xhat + shift, (xhat, inv_std, gamma, training)


def _bn_backward(dy, cache):
    xhat, inv_std, gamma, training = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if not training:
        return dxhat * inv_std, dgamma, dbeta
    n = dy.shape[0]
    dx = inv_std / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def _f64(x):
    return np.asarray(x, dtype=np.float64)


class TuckerModel:
    """Batched 1-N Tucker scoring ``sum G_abc u_a (E_i)_b t_c`` with manual gradients."""

    kind = "tucker"
    prefix = "tucker."

    def __init__(self, params: TuckerParams, dropout: DropoutSpec = DropoutSpec()):
        self.params = params
        self.dropout = dropout
        self._frozen = None

    def freeze(self) -> "TuckerModel":
        """Cache float64 copies of the factors; the caller promises not to update them."""
        p = self.params
        self._frozen = (_f64(p.E), _f64(p.R), _f64(p.core))
        return self

    def _factors(self):
        if self._frozen is not None:
            return self._frozen
        p = self.params
        return _f64(p.E), _f64(p.R), _f64(p.core)

    @property
    def n_entities(self):
        return self.params.n_entities

    @property
    def n_relations(self):
        return self.params.n_relations

    def tensors(self) -> dict[str, np.ndarray]:
        p = self.params
        out = {"tucker.E": p.E, "tucker.R": p.R, "tucker.core": p.core}
        for name in ("bn0", "bn1"):
            bn = getattr(p, name)
            if bn is not None:
                out[f"tucker.{name}.gamma"] = bn.gamma
                out[f"tucker.{name}.beta"] = bn.beta
                out[f"tucker.{name}.running_mean"] = bn.running_mean
                out[f"tucker.{name}.running_var"] = bn.running_var
        return out

    def trainable(self) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.tensors().items() if "running" not in k}

    def forward(self, heads, rels, training: bool = False, rng: np.random.Generator | None = None):
        p = self.params
        heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
        rels = np.atleast_1d(np.asarray(rels, dtype=np.int64))
        if heads.size and (heads.min() < 0 or heads.max() >= p.n_entities):
            raise IndexError("head index out of range")
        if rels.size and (rels.min() < 0 or rels.max() >= p.n_relations):
            raise IndexError("relation index out of range")
        if training and rng is None:
            rng = np.random.default_rng()
        drop = self.dropout if training else DropoutSpec()
        E, R, G = self._factors()
        d_e, _, d_r = G.shape
        b = len(heads)

        u = E[heads]
        bn0_cache = None
        if p.bn0 is not None:
            u, bn0_cache = _bn_forward(u, p.bn0, training)
        u_d, m1 = _dropout(u, drop.p1, rng)
        M = (u_d @ G.reshape(d_e, d_e * d_r)).reshape(b, d_e, d_r)  # G x1 u
        M_d, m2 = _dropout(M, drop.p2, rng)
        t = R[rels]
        w = np.einsum("ibc,ic->ib", M_d, t)
        bn1_cache = None
        if p.bn1 is not None:
            w, bn1_cache = _bn_forward(w, p.bn1, training)
        w_d, m3 = _dropout(w, drop.p3, rng)
        scores = w_d @ E.T
        cache = dict(heads=heads, rels=rels, u_d=u_d, m1=m1, M_d=M_d, m2=m2, t=t,
                     w_d=w_d, m3=m3, bn0=bn0_cache, bn1=bn1_cache)
        return scores, cache

    def backward(self, cache, g) -> dict[str, np.ndarray]:
        p = self.params
        E, _, G = self._factors()
        d_e, _, d_r = G.shape
        b = g.shape[0]
        grads = {}

        gE = g.T @ cache["w_d"]
        g_w = g @ E
        if cache["m3"] is not None:
            g_w = g_w * cache["m3"]
        if cache["bn1"] is not None:
            g_w, grads["tucker.bn1.gamma"], grads["tucker.bn1.beta"] = _bn_backward(g_w, cache["bn1"])
        g_M = g_w[:, :, None] * cache["t"][:, None, :]
        g_t = np.einsum("ibc,ib->ic", cache["M_d"], g_w)
        if cache["m2"] is not None:
            g_M = g_M * cache["m2"]
        g_M = g_M.reshape(b, d_e * d_r)
        grads["tucker.core"] = (cache["u_d"].T @ g_M).reshape(d_e, d_e, d_r)
        g_u = g_M @ G.reshape(d_e, d_e * d_r).T
        if cache["m1"] is not None:
            g_u = g_u * cache["m1"]
        if cache["bn0"] is not None:
            g_u, grads["tucker.bn0.gamma"], grads["tucker.bn0.beta"] = _bn_backward(g_u, cache["bn0"])
        np.add.at(gE, cache["heads"], g_u)
        gR = np.zeros((p.n_relations, d_r))
        np.add.at(gR, cache["rels"], g_t)
        grads["tucker.E"] = gE
        grads["tucker.R"] = gR
        return grads

    def scores(self, heads, rels) -> np.ndarray:
        return self.forward(heads, rels, training=False)[0]


def score_se_batch(params: TuckerParams, head, rel, dropout: DropoutSpec = DropoutSpec(),
                   rng: np.random.Generator | None = None, training: bool = False) -> np.ndarray:
    """Scores of every entity as the tail of ``(head, rel)``; a batch when given arrays."""
    single = np.ndim(head) == 0
    scores, _ = TuckerModel(params, dropout).forward(head, rel, training=training, rng=rng)
    return scores[0] if single else scores
