"""Loss families, their component gradients and the problem constants.

Two component families share the same full objective
``F(w) = (1/n) sum_i loss_i(w) + (lam/2)||w||^2``:

``dense``
    ``f_i(w) = loss_i(w) + (lam/2)||w||^2``.  The regularizer makes every
    gradient dense, so the support of ``grad f_i`` is every coordinate.
``support``
    ``f_i(w) = loss_i(w) + (lam/2) sum_{j in supp(x_i)} w_j^2 / p_j`` where
    ``p_j`` is the fraction of examples touching coordinate ``j``.  Gradients
    live on ``supp(x_i)`` and still average to ``grad F`` exactly, which is what
    sparse filtered updates need.  (A coordinate no example touches carries
    only the regularizer; its optimum is 0 and engines started there never move it.)
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .data import Dataset

log = logging.getLogger(__name__)

LOGISTIC = 0
LEAST_SQUARES = 1
_KINDS = {"logistic": LOGISTIC, "least_squares": LEAST_SQUARES}
FAMILIES = ("support", "dense")


class NotStronglyConvex(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, best_w: np.ndarray, grad_norm: float):
        super().__init__(message)
        self.best_w = best_w
        self.grad_norm = grad_norm


class EngineData(NamedTuple):
    """Flat arrays consumed by the numba kernels."""
    indptr: np.ndarray
    idx: np.ndarray
    xv: np.ndarray
    y: np.ndarray
    rw: np.ndarray  # per-coordinate regularizer weight
    lam: float
    kind: int
    n: int
    dim: int


@dataclass(frozen=True)
class ProblemConstants:
    mu: float
    L: float
    N: float | None = None
    w_star: np.ndarray | None = None
    w_star_F: float | None = None
    info: dict = field(default_factory=dict, compare=False)

    @property
    def kappa(self) -> float:
        return self.L / self.mu


class Objective:
    """Regularized logistic or least-squares empirical risk over a :class:`Dataset`.

    ``lam`` defaults to ``1/n``.
    """

    def __init__(self, kind: str, dataset: Dataset, lam: float | None = None,
                 family: str = "support"):
        if kind not in _KINDS:
            raise ValueError(f"unknown loss kind {kind!r}")
        if family not in FAMILIES:
            raise ValueError(f"unknown component family {family!r}")
        if lam is None:
            lam = 1.0 / dataset.n
        if lam < 0:
            raise ValueError("lam must be nonnegative")
        self.kind = kind
        self.dataset = dataset
        self.lam = float(lam)
        self.family = family
        self._X = dataset.to_csr()
        self._pattern = sp.csr_matrix((np.ones_like(dataset.values), dataset.indices,
                                       dataset.indptr), shape=self._X.shape)
        freq = dataset.coordinate_frequency()
        self._inv_freq = np.divide(1.0, freq, out=np.zeros_like(freq), where=freq > 0)
        self._row_sq = np.asarray(self._X.multiply(self._X).sum(axis=1)).ravel()

    def __repr__(self):
        return (f"Objective({self.kind!r}, n={self.n}, dim={self.dim}, "
                f"lam={self.lam:g}, family={self.family!r})")

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def dim(self) -> int:
        return self.dataset.dim

    @property
    def kind_code(self) -> int:
        return _KINDS[self.kind]

    def with_family(self, family: str) -> "Objective":
        return Objective(self.kind, self.dataset, self.lam, family)

    def _check(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.dim,):
            raise ValueError(f"expected vector of length {self.dim}, got shape {w.shape}")
        return w

    # -- vectorized pieces -------------------------------------------------

    def _coefs(self, margins, y):
        if self.kind == "logistic":
            return -y * expit(-y * margins)
        return 2.0 * (margins - y)

    def _data_losses(self, margins, y):
        if self.kind == "logistic":
            return np.logaddexp(0.0, -y * margins)
        return (margins - y) ** 2

    def full_objective(self, w) -> float:
        w = self._check(w)
        m = self._X @ w
        return float(np.mean(self._data_losses(m, self.dataset.labels))
                     + 0.5 * self.lam * (w @ w))

    def full_grad(self, w) -> np.ndarray:
        w = self._check(w)
        c = self._coefs(self._X @ w, self.dataset.labels)
        return self._X.T @ c / self.n + self.lam * w

    def component_loss(self, w, i: int) -> float:
        """Loss of the dense-regularizer component ``f_i``."""
        w = self._check(w)
        e = self.dataset[i]
        m = float(e.values @ w[e.indices])
        return float(self._data_losses(np.array([m]), np.array([e.label]))[0]
                     + 0.5 * self.lam * (w @ w))

    def component_grad(self, w, i: int) -> np.ndarray:
        """Dense gradient of ``f_i(w) = loss_i(w) + (lam/2)||w||^2``."""
        w = self._check(w)
        e = self.dataset[i]
        m = float(e.values @ w[e.indices])
        c = float(self._coefs(np.array([m]), np.array([e.label]))[0])
        g = self.lam * w
        g[e.indices] += c * e.values
        return g

    def support_grad(self, w, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Gradient of this objective's engine component, as (indices, values)."""
        if self.family == "dense":
            return np.arange(self.dim), self.component_grad(w, i)
        w = self._check(w)
        e = self.dataset[i]
        m = float(e.values @ w[e.indices])
        c = float(self._coefs(np.array([m]), np.array([e.label]))[0])
        rw = self._inv_freq[e.indices]
        return e.indices.copy(), c * e.values + (self.lam * rw) * w[e.indices]

    def engine_component_grad(self, w, i: int) -> np.ndarray:
        """Dense view of :meth:`support_grad`."""
        idx, vals = self.support_grad(w, i)
        g = np.zeros(self.dim)
        g[idx] = vals
        return g

    def batch_grad(self, w, batch) -> np.ndarray:
        """Mean of the dense component gradients over ``batch`` (repeats allowed)."""
        w = self._check(w)
        batch = np.asarray(batch, dtype=np.int64)
        Xb = self._X[batch]
        c = self._coefs(Xb @ w, self.dataset.labels[batch])
        return Xb.T @ c / len(batch) + self.lam * w

    def second_moment(self, w, family: str | None = None) -> float:
        """``(1/n) sum_i ||grad f_i(w)||^2`` for the given component family."""
        w = self._check(w)
        family = family or self.family
        m = self._X @ w
        c = self._coefs(m, self.dataset.labels)
        if family == "dense":
            per = c * c * self._row_sq + 2 * self.lam * c * m + self.lam ** 2 * (w @ w)
        else:
            rw = self._inv_freq
            cross = self._X @ (rw * w)
            quad = self._pattern @ (rw * rw * w * w)
            per = c * c * self._row_sq + 2 * self.lam * c * cross + self.lam ** 2 * quad
        return float(np.mean(per))

    def component_grad_norms_sq(self, w, family: str | None = None) -> np.ndarray:
        """Per-example ``||grad f_i(w)||^2`` by direct enumeration."""
        family = family or self.family
        obj = self if family == self.family else self.with_family(family)
        out = np.empty(self.n)
        for i in range(self.n):
            _, g = obj.support_grad(w, i)
            out[i] = g @ g
        return out

    def engine_view(self) -> EngineData:
        d = self.dataset
        if self.family == "dense":
            X = self._X.toarray()
            indptr = np.arange(0, (d.n + 1) * d.dim, d.dim, dtype=np.int64)
            idx = np.tile(np.arange(d.dim, dtype=np.int64), d.n)
            xv = X.ravel()
            rw = np.ones(d.dim)
        else:
            indptr, idx, xv = d.indptr, d.indices, d.values
            rw = self._inv_freq
        return EngineData(np.ascontiguousarray(indptr), np.ascontiguousarray(idx),
                          np.ascontiguousarray(xv), np.ascontiguousarray(d.labels),
                          np.ascontiguousarray(rw), self.lam, self.kind_code, d.n, d.dim)

    def supports(self) -> list[np.ndarray]:
        """Gradient support of every engine component."""
        if self.family == "dense":
            full = np.arange(self.dim)
            return [full] * self.n
        return [self.dataset[i].indices for i in range(self.n)]


def _curvature_scale(kind: str) -> float:
    return 0.25 if kind == "logistic" else 2.0


def estimate_L(obj: Objective, family: str | None = None) -> float:
    """Certified componentwise smoothness constant (max row-norm bound)."""
    family = family or obj.family
    c = _curvature_scale(obj.kind)
    if family == "dense" or obj.dataset.indices.size == 0:
        return float(c * obj._row_sq.max() + obj.lam)
    max_rw = np.maximum.reduceat(obj._inv_freq[obj.dataset.indices],
                                 obj.dataset.indptr[:-1][obj.dataset.support_sizes() > 0])
    row_sq = obj._row_sq[obj.dataset.support_sizes() > 0]
    return float(np.max(c * row_sq + obj.lam * max_rw))


def estimate_mu(obj: Objective) -> float:
    """Strong-convexity constant of F certified by the regularizer alone."""
    if obj.lam <= 0:
        raise NotStronglyConvex("lam = 0: objective is not certified strongly convex")
    return obj.lam


def _full_smoothness(obj: Objective) -> float:
    c = _curvature_scale(obj.kind)
    bound = estimate_L(obj, "dense")
    if obj.dim <= 4096:
        G = (obj._X.T @ obj._X).toarray() / obj.n
        bound = min(bound, c * float(np.linalg.eigvalsh(G)[-1]) * (1 + 1e-12) + obj.lam)
    return bound


def solve_reference(obj: Objective, tol: float = 1e-10, max_iter: int = 200_000,
                    w0=None) -> tuple[np.ndarray, float]:
    """Minimize F by accelerated full-gradient descent until ``||grad F|| <= tol``.

    Uses Nesterov's constant-momentum scheme for strongly convex functions with a
    function-value restart.  Raises :class:`ConvergenceError` carrying the best
    iterate when ``max_iter`` is exhausted.
    """
    L = _full_smoothness(obj)
    mu = obj.lam if obj.lam > 0 else 0.0
    q = np.sqrt(mu / L) if mu > 0 else 0.0
    beta = (1 - q) / (1 + q)
    w = np.zeros(obj.dim) if w0 is None else np.array(w0, dtype=np.float64)
    y = w.copy()
    f_prev = obj.full_objective(w)
    best_w, best_g = w.copy(), np.inf
    for k in range(max_iter):
        g = obj.full_grad(y)
        w_next = y - g / L
        f_next = obj.full_objective(w_next)
        if f_next > f_prev:
            # restart momentum from the last accepted point
            y = w.copy()
            g = obj.full_grad(y)
            w_next = y - g / L
            f_next = obj.full_objective(w_next)
        y = w_next + beta * (w_next - w)
        w, f_prev = w_next, f_next
        gn = float(np.linalg.norm(obj.full_grad(w)))
        if gn < best_g:
            best_w, best_g = w.copy(), gn
        if gn <= tol:
            log.debug("solve_reference converged in %d iterations", k + 1)
            return w, obj.full_objective(w)
    raise ConvergenceError(f"no convergence to {tol:g} in {max_iter} iterations "
                           f"(best grad norm {best_g:.3e})", best_w, best_g)


def estimate_N(obj: Objective, w_star, family: str | None = None) -> float:
    """``N = (2/n) sum_i ||grad f_i(w*)||^2`` for the given component family."""
    return 2.0 * obj.second_moment(w_star, family)


def problem_constants(obj: Objective, tol: float = 1e-10, family: str | None = None,
                      w_star=None) -> ProblemConstants:
    family = family or obj.family
    if w_star is None:
        w_star, F_star = solve_reference(obj, tol)
    else:
        w_star = np.asarray(w_star, dtype=np.float64)
        F_star = obj.full_objective(w_star)
    return ProblemConstants(mu=estimate_mu(obj), L=estimate_L(obj, family),
                            N=estimate_N(obj, w_star, family), w_star=w_star,
                            w_star_F=F_star)
