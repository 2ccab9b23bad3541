"""RBF-kernel support vector classification and regression via SMO.

Both problems are posed as the box-constrained dual

    min  1/2 a'Qa + p'a   s.t.  s'a = 0,  0 <= a <= C

with ``Q[t, u] = s[t] s[u] K(x[row[t]], x[row[u]])``. Classification uses
one variable per row (``s = y``, ``p = -1``); epsilon-regression uses two
per row (``s = +1`` then ``-1``, ``p = eps -/+ z``). Pairs are chosen by
maximal violation with second-order gain and the two-variable subproblem
is solved in closed form.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..dataset import Dataset, ScalingParams, fit_scaling

KKT_TOL = 1e-3
SV_THRESHOLD = 1e-8
# dense kernel up to this many rows; larger problems compute rows on demand
DENSE_KERNEL_MAX = 3000

_TAU = 1e-12


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SvmModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    gamma: float
    cost: float
    epsilon: float
    scaling: ScalingParams
    task: str
    converged: bool = True

    @property
    def params(self) -> dict:
        out = {"cost": self.cost, "gamma": self.gamma}
        if self.task == "regression":
            out["epsilon"] = self.epsilon
        return out

    def decision_function(self, rows) -> np.ndarray:
        z = self.scaling.apply(rows)
        if len(self.dual_coefs) == 0:
            return np.full(z.shape[0], self.bias)
        return rbf_kernel(z, self.support_vectors, self.gamma) @ self.dual_coefs + self.bias

    def predict(self, rows) -> np.ndarray:
        f = self.decision_function(rows)
        if self.task == "classification":
            return (f > 0).astype(float)
        return f

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "bias": self.bias,
            "gamma": self.gamma,
            "cost": self.cost,
            "epsilon": self.epsilon,
            "scaling": self.scaling.to_dict(),
            "task": self.task,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SvmModel":
        sv = np.asarray(doc["support_vectors"], dtype=float)
        width = len(doc["scaling"]["mean"])
        return cls(
            sv.reshape(-1, width),
            np.asarray(doc["dual_coefs"], dtype=float),
            float(doc["bias"]),
            float(doc["gamma"]),
            float(doc["cost"]),
            float(doc["epsilon"]),
            ScalingParams.from_dict(doc["scaling"]),
            doc["task"],
            bool(doc.get("converged", True)),
        )


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-gamma * d2)


@njit(cache=True, nogil=True)
def _kernel_row(x, sq, gamma, i, out):
    n, p = x.shape
    for t in range(n):
        d = sq[i] + sq[t]
        for c in range(p):
            d -= 2.0 * x[i, c] * x[t, c]
        if d < 0.0:
            d = 0.0
        out[t] = np.exp(-gamma * d)


@njit(cache=True, nogil=True)
def _smo(kmat, x, gamma, row, sign, p, cost, eps, max_iter):
    l = sign.shape[0]
    n = x.shape[0]
    dense = kmat.shape[0] > 0
    sq = np.empty(n)
    for t in range(n):
        s = 0.0
        for c in range(x.shape[1]):
            s += x[t, c] * x[t, c]
        sq[t] = s
    krow_i = np.empty(n)
    krow_j = np.empty(n)

    alpha = np.zeros(l)
    grad = p.copy()
    it = 0
    converged = False
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(l):
            if sign[t] > 0:
                if alpha[t] < cost and -grad[t] >= gmax:
                    gmax = -grad[t]
                    i = t
            else:
                if alpha[t] > 0.0 and grad[t] >= gmax:
                    gmax = grad[t]
                    i = t
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        if i >= 0:
            if dense:
                for t in range(n):
                    krow_i[t] = kmat[row[i], t]
            else:
                _kernel_row(x, sq, gamma, row[i], krow_i)
            kii = krow_i[row[i]]
        for t in range(l):
            if sign[t] > 0:
                if alpha[t] > 0.0:
                    if grad[t] >= gmax2:
                        gmax2 = grad[t]
                    diff = gmax + grad[t]
                    if i >= 0 and diff > 0.0:
                        quad = kii + 1.0 - 2.0 * krow_i[row[t]]
                        if quad <= 0.0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
            else:
                if alpha[t] < cost:
                    if -grad[t] >= gmax2:
                        gmax2 = -grad[t]
                    diff = gmax - grad[t]
                    if i >= 0 and diff > 0.0:
                        quad = kii + 1.0 - 2.0 * krow_i[row[t]]
                        if quad <= 0.0:
                            quad = _TAU
                        obj = -(diff * diff) / quad
                        if obj <= obj_min:
                            obj_min = obj
                            j = t
        if gmax + gmax2 < eps or j < 0:
            converged = True
            break
        it += 1

        if dense:
            for t in range(n):
                krow_j[t] = kmat[row[j], t]
        else:
            _kernel_row(x, sq, gamma, row[j], krow_j)
        kjj = krow_j[row[j]]
        qij = sign[i] * sign[j] * krow_i[row[j]]
        old_i = alpha[i]
        old_j = alpha[j]
        if sign[i] != sign[j]:
            quad = kii + kjj + 2.0 * qij
            if quad <= 0.0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0.0:
                if alpha[i] > cost:
                    alpha[i] = cost
                    alpha[j] = cost - diff
            else:
                if alpha[j] > cost:
                    alpha[j] = cost
                    alpha[i] = cost + diff
        else:
            quad = kii + kjj - 2.0 * qij
            if quad <= 0.0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > cost:
                if alpha[i] > cost:
                    alpha[i] = cost
                    alpha[j] = total - cost
                if alpha[j] > cost:
                    alpha[j] = cost
                    alpha[i] = total - cost
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = total
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = total

        di = (alpha[i] - old_i) * sign[i]
        dj = (alpha[j] - old_j) * sign[j]
        for t in range(l):
            grad[t] += sign[t] * (di * krow_i[row[t]] + dj * krow_j[row[t]])

    # bias from free variables, or the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    nfree = 0
    sfree = 0.0
    for t in range(l):
        yg = sign[t] * grad[t]
        if alpha[t] >= cost:
            if sign[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0.0:
            if sign[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sfree += yg
    if nfree > 0:
        rho = sfree / nfree
    else:
        rho = 0.5 * (ub + lb)
    return alpha, rho, it, converged


def _solve(z, row, sign, p, cost, gamma, max_iter):
    n = z.shape[0]
    kmat = rbf_kernel(z, z, gamma) if n <= DENSE_KERNEL_MAX else np.zeros((0, 0))
    if max_iter is None:
        max_iter = max(1_000_000, 100 * len(sign))
    alpha, rho, iters, converged = _smo(
        kmat, np.ascontiguousarray(z), float(gamma), row, sign.astype(np.float64),
        p, float(cost), KKT_TOL, int(max_iter),
    )
    if not converged:
        warnings.warn(
            f"SMO stopped after {iters} iterations without meeting tolerance "
            f"(cost={cost}, gamma={gamma})",
            ConvergenceWarning,
            stacklevel=3,
        )
    return alpha, rho, converged


def _check(cost, gamma):
    if not cost > 0:
        raise ValueError(f"cost must be positive, got {cost}")
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")


def fit_svc(ds: Dataset, cost: float, gamma: float, max_iter: int | None = None) -> SvmModel:
    """Soft-margin binary SVM with kernel exp(-gamma * ||x - z||^2)."""
    if not ds.is_classification:
        raise ValueError("fit_svc needs a binary classification dataset")
    _check(cost, gamma)
    scaling = fit_scaling(ds.features, ds.columns)
    z = scaling.apply(ds.features)
    n = ds.n_rows
    sign = np.where(ds.response == 1.0, 1.0, -1.0)
    alpha, rho, converged = _solve(
        z, np.arange(n, dtype=np.int64), sign, -np.ones(n), cost, gamma, max_iter
    )
    coef = alpha * sign
    keep = np.abs(alpha) > SV_THRESHOLD
    return SvmModel(z[keep], coef[keep], -rho, float(gamma), float(cost), 0.0,
                    scaling, "classification", converged)


def fit_svr(ds: Dataset, cost: float, gamma: float, epsilon: float,
            max_iter: int | None = None) -> SvmModel:
    """Epsilon-insensitive support vector regression with an RBF kernel."""
    if ds.is_classification:
        raise ValueError("fit_svr needs a regression dataset")
    _check(cost, gamma)
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    scaling = fit_scaling(ds.features, ds.columns)
    z = scaling.apply(ds.features)
    n = ds.n_rows
    y = ds.response.astype(float)
    row = np.concatenate([np.arange(n), np.arange(n)]).astype(np.int64)
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    alpha, rho, converged = _solve(z, row, sign, p, cost, gamma, max_iter)
    coef = alpha[:n] - alpha[n:]
    keep = np.abs(coef) > SV_THRESHOLD
    return SvmModel(z[keep], coef[keep], -rho, float(gamma), float(cost), float(epsilon),
                    scaling, "regression", converged)
