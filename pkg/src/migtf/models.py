"""Hyperbolic TPTF model, the mixed-geometry composition and the BCE loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import NumericError, ShapeError
from .lorentz import lift, sh_batch_terms
from .tucker import TuckerModel


@dataclass
class TptfParams:
    E: np.ndarray  # (n_e, d_h) Euclidean coordinates, lifted on use
    T: np.ndarray  # (n_r, d_h)
    beta: float = 1.0
    init_std_e: float = 0.001
    init_std_r: float = 0.001
    dropout_e: float = 0.0
    dropout_r: float = 0.0

    def __post_init__(self):
        if self.E.ndim != 2 or self.T.ndim != 2 or self.E.shape[1] != self.T.shape[1]:
            raise ShapeError(f"inconsistent shapes E={self.E.shape} T={self.T.shape}")
        if not self.beta > 0:
            raise NumericError("curvature must be positive")
        for p in (self.dropout_e, self.dropout_r):
            if not 0.0 <= p < 1.0:
                raise ValueError(f"dropout probability {p} outside [0, 1)")

    @property
    def dim(self):
        return self.E.shape[1]

    def n_parameters(self) -> int:
        return self.E.size + self.T.size


def init_tptf(n_e: int, n_r: int, d_h: int, beta: float = 1.0, rho_e: float = 0.001,
              rho_r: float = 0.001, seed: int = 0, dropout_e: float = 0.0,
              dropout_r: float = 0.0, dtype=np.float32) -> TptfParams:
    rng = np.random.default_rng(seed)
    E = rng.normal(0.0, rho_e, size=(n_e, d_h)).astype(dtype)
    T = rng.normal(0.0, rho_r, size=(n_r, d_h)).astype(dtype)
    return TptfParams(E, T, beta, rho_e, rho_r, dropout_e, dropout_r)


@dataclass
class QRResult:
    Q: np.ndarray  # row form: row r replaces relation embedding r
    R: np.ndarray  # upper triangular, non-negative diagonal
    rows_orthonormal: bool  # False when d_h < n_r (only the columns are orthonormal then)

    def orthonormality_error(self) -> float:
        Q = self.Q
        gram = Q @ Q.T if self.rows_orthonormal else Q.T @ Q
        return float(np.abs(gram - np.eye(gram.shape[0])).max())

    def reconstruct(self) -> np.ndarray:
        """Rebuild the relation matrix from the factors."""
        if self.rows_orthonormal:
            return (self.Q.T @ self.R).T
        return self.Q @ self.R


def _positive_qr(A):
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None]


def qr_orthogonalize(T_h) -> QRResult:
    """Orthogonalize relation embeddings through the QR factorization of ``T_h^T``.

    With ``d_h >= n_r`` the returned rows are orthonormal.  Otherwise the thin
    QR of ``T_h`` itself is used and only the ``d_h`` columns are orthonormal,
    which is reported through ``rows_orthonormal``.
    """
    T_h = np.asarray(T_h, dtype=np.float64)
    if T_h.ndim != 2 or T_h.shape[0] < 1:
        raise ShapeError("relation matrix must be 2-D with at least one row")
    n_r, d_h = T_h.shape
    if d_h >= n_r:
        Qt, R = _positive_qr(T_h.T)
        return QRResult(Qt.T, R, True)
    Q, R = _positive_qr(T_h)
    return QRResult(Q, R, False)


def _copyltu(M):
    return np.tril(M) + np.tril(M, -1).T


def qr_backward(qr: QRResult, gQ: np.ndarray) -> np.ndarray:
    """Pull a gradient on the row-form ``Q`` back to the relation matrix.

    Differentiates the thin QR ``A = QR`` (``A`` tall, full column rank):
    ``dA = (dQ + Q copyltu(-dQ^T Q)) R^{-T}``.
    """
    if qr.rows_orthonormal:
        Q, dQ = qr.Q.T, gQ.T
    else:
        Q, dQ = qr.Q, gQ
    M = -dQ.T @ Q
    B = dQ + Q @ _copyltu(M)
    dA = np.linalg.solve(qr.R, B.T).T  # B R^{-T}
    return dA.T if qr.rows_orthonormal else dA


def _dropout(x, p, rng):
    if p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


class TptfModel:
    """Tetrahedron-pooling scorer on the hyperboloid, trained in Euclidean coordinates."""

    kind = "tptf"

    def __init__(self, params: TptfParams, qr_enabled: bool = False, record_qr: bool = False):
        self.params = params
        self.qr_enabled = qr_enabled
        self.record_qr = record_qr
        self.qr_log: list[tuple[float, float]] = []

    @property
    def n_entities(self):
        return self.params.E.shape[0]

    @property
    def n_relations(self):
        return self.params.T.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"tptf.E": self.params.E, "tptf.T": self.params.T}

    def trainable(self) -> dict[str, np.ndarray]:
        return self.tensors()

    def relation_table(self):
        T = np.asarray(self.params.T, dtype=np.float64)
        if not self.qr_enabled:
            return T, None
        qr = qr_orthogonalize(T)
        if self.record_qr:
            recon = float(np.abs(qr.reconstruct() - T).max())
            self.qr_log.append((qr.orthonormality_error(), recon))
        return qr.Q, qr

    def forward(self, heads, rels, training: bool = False, rng: np.random.Generator | None = None):
        p = self.params
        heads = np.atleast_1d(np.asarray(heads, dtype=np.int64))
        rels = np.atleast_1d(np.asarray(rels, dtype=np.int64))
        if heads.size and (heads.min() < 0 or heads.max() >= self.n_entities):
            raise IndexError("head index out of range")
        if rels.size and (rels.min() < 0 or rels.max() >= self.n_relations):
            raise IndexError("relation index out of range")
        if training and rng is None:
            rng = np.random.default_rng()
        E = np.asarray(p.E, dtype=np.float64)
        table, qr = self.relation_table()
        u_e, t_e = E[heads], table[rels]
        m_u = m_t = None
        if training:
            u_e, m_u = _dropout(u_e, p.dropout_e, rng)
            t_e, m_t = _dropout(t_e, p.dropout_r, rng)
        U, T, V = lift(u_e, p.beta), lift(t_e, p.beta), lift(E, p.beta)
        num, den = sh_batch_terms(U, V, T, p.beta)
        cache = dict(heads=heads, rels=rels, U=U, T=T, V=V, num=num, den=den,
                     m_u=m_u, m_t=m_t, qr=qr)
        return num / den, cache

    def backward(self, cache, g) -> dict[str, np.ndarray]:
        beta = self.params.beta
        sb = np.sqrt(beta)
        U, T, V = cache["U"], cache["T"], cache["V"]
        num, den = cache["num"], cache["den"]
        gN = g / den
        gD = -g * num / (den * den)

        u0, t0, v0 = U[:, :1], T[:, :1], V[:, 0][None, :]
        us, ts, vs = U[:, 1:], T[:, 1:], V[:, 1:]
        g_u0 = (gN * (v0 - sb - t0)).sum(axis=1) + beta * (gD * (v0 + t0)).sum(axis=1)
        g_t0 = (gN * (sb - u0 - v0)).sum(axis=1) + beta * (gD * (v0 + u0)).sum(axis=1)
        g_v0 = -(gN * (sb + t0 - u0)).sum(axis=0) + beta * (gD * (u0 + t0)).sum(axis=0)
        gN_rows = gN.sum(axis=1)[:, None]
        gN_V = gN @ vs
        g_us = gN_rows * ts - gN_V
        g_ts = gN_rows * us + gN_V
        g_vs = gN.T @ (ts - us)

        # chain through x0 = sqrt(beta + |x|^2)
        g_u = g_us + g_u0[:, None] * us / u0
        g_t = g_ts + g_t0[:, None] * ts / t0
        gE = g_vs + g_v0[:, None] * vs / V[:, :1]
        if cache["m_u"] is not None:
            g_u = g_u * cache["m_u"]
        if cache["m_t"] is not None:
            g_t = g_t * cache["m_t"]
        np.add.at(gE, cache["heads"], g_u)
        gT = np.zeros((self.n_relations, self.params.dim))
        np.add.at(gT, cache["rels"], g_t)
        if cache["qr"] is not None:
            gT = qr_backward(cache["qr"], gT)
        return {"tptf.E": gE, "tptf.T": gT}

    def scores(self, heads, rels) -> np.ndarray:
        return self.forward(heads, rels, training=False)[0]


def tptf_score_batch(params: TptfParams, head, rel, training: bool = False,
                     rng: np.random.Generator | None = None) -> np.ndarray:
    single = np.ndim(head) == 0
    scores, _ = TptfModel(params).forward(head, rel, training=training, rng=rng)
    return scores[0] if single else scores


class MigTfModel:
    """Frozen Tucker term plus a trainable hyperbolic correction.

    Scores are ``2 (mu S_E + (1 - mu) S_H)``; ``mu = 0.5`` gives the plain sum.
    """

    kind = "migtf"

    def __init__(self, tucker: TuckerModel, tptf: TptfModel, mu: float = 0.5):
        if not 0.0 <= mu <= 1.0:
            raise ValueError("mu must lie in [0, 1]")
        if tucker.n_entities != tptf.n_entities or tucker.n_relations != tptf.n_relations:
            raise ShapeError("Tucker and TPTF components disagree on vocabulary sizes")
        self.tucker = tucker.freeze()
        self.tptf = tptf
        self.mu = mu

    @property
    def qr_enabled(self):
        return self.tptf.qr_enabled

    @property
    def n_entities(self):
        return self.tptf.n_entities

    @property
    def n_relations(self):
        return self.tptf.n_relations

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.tucker.tensors(), **self.tptf.tensors()}

    def trainable(self) -> dict[str, np.ndarray]:
        return self.tptf.trainable()

    def combine(self, s_e, s_h, mu: float | None = None):
        mu = self.mu if mu is None else mu
        return 2.0 * (mu * s_e + (1.0 - mu) * s_h)

    def component_scores(self, heads, rels):
        s_e = self.tucker.forward(heads, rels, training=False)[0]
        s_h = self.tptf.forward(heads, rels, training=False)[0]
        return s_e, s_h

    def forward(self, heads, rels, training: bool = False, rng: np.random.Generator | None = None):
        # the Euclidean term is always evaluated frozen: no dropout, running BN stats
        s_e = self.tucker.forward(heads, rels, training=False)[0]
        s_h, cache = self.tptf.forward(heads, rels, training=training, rng=rng)
        return self.combine(s_e, s_h), cache

    def backward(self, cache, g) -> dict[str, np.ndarray]:
        return self.tptf.backward(cache, 2.0 * (1.0 - self.mu) * g)

    def scores(self, heads, rels) -> np.ndarray:
        return self.forward(heads, rels, training=False)[0]


def migtf_score_batch(model: MigTfModel, head, rel, training: bool = False,
                      rng: np.random.Generator | None = None) -> np.ndarray:
    single = np.ndim(head) == 0
    scores, _ = model.forward(head, rel, training=training, rng=rng)
    return scores[0] if single else scores


def bce_loss(scores, labels):
    """Mean binary cross-entropy on logits and its gradient with respect to the logits."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.shape != y.shape:
        raise ShapeError(f"scores {s.shape} and labels {y.shape} differ")
    n = s.size
    # -y log sig(s) - (1-y) log(1-sig(s)) = max(s,0) - s y + log(1 + exp(-|s|))
    loss = np.maximum(s, 0.0) - s * y + np.log1p(np.exp(-np.abs(s)))
    return float(loss.sum() / n), (expit(s) - y) / n
