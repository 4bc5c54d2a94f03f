"""One-class SVM with an RBF kernel, solved by SMO.

The dual is minimize 0.5 * a'Ka subject to 0 <= a_i <= 1/(nu*n), sum(a) = 1.
Internally the solver works with a' = nu*n*a (box [0, 1], sum nu*n), the
scaling libsvm uses, so ``tol`` means the same thing it does there. Working
pairs are picked with second-order information (Fan, Chen & Lin 2005).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch, PreconditionViolation

NU = 0.5
TOL = 1e-3
MAX_ITER = 1_000_000
_TAU = 1e-12


def scale_gamma(x: np.ndarray) -> float:
    """1 / (n_features * X.var()), falling back to 1 for constant data."""
    var = float(np.var(x))
    return 1.0 / (x.shape[1] * var) if var > 0 else 1.0


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * a @ b.T
    return np.exp(-gamma * np.clip(sq, 0.0, None))


@dataclass
class SmoResult:
    alpha: np.ndarray      # libsvm scaling, box [0, 1]
    rho: float             # libsvm scaling
    gap: float             # final max violating-pair gap
    iterations: int
    converged: bool


def solve_one_class_dual(K: np.ndarray, nu: float, tol: float = TOL, max_iter: int = MAX_ITER) -> SmoResult:
    n = K.shape[0]
    total = nu * n
    # uniform start is feasible and symmetric in the data
    a = np.full(n, total / n)
    G = K @ a
    diag = np.diag(K).copy()
    gap = np.inf
    it = 0
    while it < max_iter:
        up = a < 1.0
        low = a > 0.0
        neg = -G
        m_val = np.max(np.where(up, neg, -np.inf))
        M_val = np.min(np.where(low, neg, np.inf))
        gap = m_val - M_val
        if gap < tol:
            break
        i = int(np.argmax(np.where(up, neg, -np.inf)))
        b = m_val + G  # b_ij = -G_i + G_j for candidate j
        quad = diag[i] + diag - 2.0 * K[i]
        quad = np.where(quad > 0, quad, _TAU)
        cand = low & (neg < m_val)
        gain = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(gain))
        step = b[j] / quad[j]
        step = min(step, 1.0 - a[i], a[j])
        a[i] += step
        a[j] -= step
        G += step * (K[:, i] - K[:, j])
        it += 1
    a = np.clip(a, 0.0, 1.0)
    free = (a > 0.0) & (a < 1.0)
    if np.any(free):
        rho = float(np.mean(G[free]))
    else:
        ub = np.min(np.where(a <= 0.0, G, np.inf))
        lb = np.max(np.where(a >= 1.0, G, -np.inf))
        rho = float(0.5 * (ub + lb))
    return SmoResult(a, rho, float(gap), it, bool(gap < tol))


def kkt_residual(K: np.ndarray, alpha: np.ndarray, rho: float, upper: float) -> float:
    """Largest KKT violation of a unit-sum dual solution (box [0, upper], sum 1)."""
    g = K @ alpha - rho
    at_low = alpha <= 0.0
    at_up = alpha >= upper
    viol = np.where(at_low, np.maximum(0.0, -g), np.where(at_up, np.maximum(0.0, g), np.abs(g)))
    return float(np.max(viol))


def dual_objective(K: np.ndarray, alpha: np.ndarray) -> float:
    return float(0.5 * alpha @ K @ alpha)


class OneClassSVM:
    kind = "ocsvm"

    def __init__(self, nu: float = NU, tol: float = TOL, gamma: float | None = None, max_iter: int = MAX_ITER):
        if not 0.0 < nu <= 1.0:
            raise PreconditionViolation(f"nu must lie in (0, 1], got {nu}")
        self.nu = nu
        self.tol = tol
        self.gamma = gamma
        self.max_iter = max_iter
        self.support_vectors = None
        self.dual_coefs = None
        self.rho = 0.0
        self.converged = True
        self.train_alpha = None

    def config(self) -> dict:
        return {"nu": self.nu, "tol": self.tol, "max_iter": self.max_iter}

    def fit(self, x) -> "OneClassSVM":
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise PreconditionViolation("OCSVM needs at least 2 training vectors")
        n = x.shape[0]
        if self.gamma is None:
            self.gamma = scale_gamma(x)
        K = rbf_kernel(x, x, self.gamma)
        res = solve_one_class_dual(K, self.nu, self.tol, self.max_iter)
        self.converged = res.converged
        if not res.converged:
            warnings.warn(f"SMO stopped at the iteration cap with gap {res.gap:.3g}", RuntimeWarning, stacklevel=2)
        scale = self.nu * n
        alpha = res.alpha / scale
        self.train_alpha = alpha
        sv = alpha > 0.0
        self.support_vectors = x[sv]
        self.dual_coefs = alpha[sv]
        self.rho = res.rho / scale
        self.iterations = res.iterations
        return self

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.support_vectors.shape[1]:
            raise DimensionMismatch(f"expected {self.support_vectors.shape[1]}-dim input, got {x.shape[1]}")
        return rbf_kernel(x, self.support_vectors, self.gamma) @ self.dual_coefs - self.rho

    def score(self, x, seed: int = 0) -> np.ndarray:
        return self.decision_function(x)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "support_vectors": self.support_vectors,
            "dual_coefs": self.dual_coefs,
            "scalars": np.array([self.rho, self.gamma, float(self.converged)]),
        }

    @classmethod
    def from_arrays(cls, config: dict, arrays: dict) -> "OneClassSVM":
        m = cls(nu=config["nu"], tol=config["tol"], max_iter=config.get("max_iter", MAX_ITER))
        m.support_vectors = arrays["support_vectors"]
        m.dual_coefs = arrays["dual_coefs"]
        rho, gamma, conv = arrays["scalars"]
        m.rho, m.gamma, m.converged = float(rho), float(gamma), bool(conv)
        return m
