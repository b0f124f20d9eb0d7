"""Halo-MNL: multinomial logit with pairwise interaction terms.

The utility of product ``i`` on offer set ``S`` is ``u[i, i]`` plus
``u[k, i]`` for every product ``k`` missing from ``S``. A negative ``u[k, i]``
therefore means that offering ``k`` lifts ``i``.
"""

from __future__ import annotations

import io
import warnings
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .core import EmpiricalDistribution, ModelError, OfferSet


class HaloConvergenceWarning(RuntimeWarning):
    """Likelihood maximization stopped before the gradient tolerance was met."""


@dataclass(frozen=True)
class InteractionMatrix:
    """``u[i, i]`` item utilities; ``u[k, i]`` effect on ``i`` when ``k`` is absent."""

    u: np.ndarray

    def __post_init__(self) -> None:
        u = np.array(self.u, dtype=float)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise ModelError(f"interaction matrix must be square, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ModelError("interaction matrix has non-finite entries")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n_products(self) -> int:
        return self.u.shape[0]

    @classmethod
    def zeros(cls, n_products: int) -> InteractionMatrix:
        return cls(np.zeros((n_products, n_products)))

    @classmethod
    def mnl(cls, utilities: Sequence[float]) -> InteractionMatrix:
        return cls(np.diag(np.asarray(utilities, dtype=float)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"{self.n_products}\n")
        for row in self.u:
            buf.write(",".join(repr(float(x)) for x in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> InteractionMatrix:
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        n = int(lines[0])
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
        if len(rows) != n or any(len(r) != n for r in rows):
            raise ModelError(f"interaction CSV does not hold a {n}x{n} matrix")
        return cls(np.array(rows))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> InteractionMatrix:
        return cls.from_csv(Path(path).read_text())


def _membership(offer_sets: Sequence[OfferSet], n: int) -> np.ndarray:
    mask = np.zeros((len(offer_sets), n), dtype=bool)
    for m, s in enumerate(offer_sets):
        mask[m, list(s.items)] = True
    return mask


def _log_probs(u: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """``(M, N)`` log-probabilities; ``-inf`` off the offer sets."""
    absent = (~mask).astype(float)
    z = np.diag(u)[None, :] + absent @ u
    z = np.where(mask, z, -np.inf)
    return z - logsumexp(z, axis=1, keepdims=True)


def halo_probabilities(u: InteractionMatrix, offer_sets: Sequence[OfferSet]) -> np.ndarray:
    """Choice probabilities on several offer sets as an ``(M, N)`` array."""
    for s in offer_sets:
        if len(s) == 0:
            raise ModelError("offer set is empty")
        s.validate(u.n_products, require_no_purchase=False)
    return np.exp(_log_probs(u.u, _membership(offer_sets, u.n_products)))


def halo_probability(u: InteractionMatrix, offer_set: OfferSet) -> dict[int, float]:
    """Halo-MNL choice distribution over one offer set.

    >>> m = InteractionMatrix(np.array([[0.0, 0, 0], [0, 0, -1], [0, 0, 0]]))
    >>> round(halo_probability(m, OfferSet.of([0, 2]))[2], 4)
    0.2689
    """
    p = halo_probabilities(u, [offer_set])[0]
    return {j: float(p[j]) for j in offer_set}


class _Objective:
    """Transaction log-likelihood and its gradient for one empirical dataset."""

    def __init__(self, emp: EmpiricalDistribution):
        self.mask = emp.membership()
        self.absent = (~self.mask).astype(float)
        self.target = emp.counts[:, None] * emp.freq
        self.totals = emp.counts.astype(float)

    def value(self, u: np.ndarray) -> float:
        logp = _log_probs(u, self.mask)
        return float(np.sum(self.target[self.mask] * logp[self.mask]))

    def gradient(self, u: np.ndarray) -> np.ndarray:
        p = np.exp(_log_probs(u, self.mask))
        resid = self.target - self.totals[:, None] * p
        grad = self.absent.T @ resid
        grad[np.diag_indices_from(grad)] += resid.sum(axis=0)
        # u[0, 0] anchors the utility scale.
        grad[0, 0] = 0.0
        return grad

    def hessian(self, u: np.ndarray) -> np.ndarray:
        """``(N^2, N^2)`` Hessian in row-major ``u`` order, ``u[0, 0]`` fixed."""
        n = u.shape[0]
        p = np.exp(_log_probs(u, self.mask))
        # dz[m, i, (k, i)] = 1 when k == i or k is absent from set m.
        dz = np.zeros((len(p), n, n, n))
        for i in range(n):
            dz[:, i, :, i] = self.absent
            dz[:, i, i, i] = 1.0
        dz = dz.reshape(len(p), n, n * n)
        cov = np.einsum("mi,ij->mij", p, np.eye(n)) - p[:, :, None] * p[:, None, :]
        hess = -np.einsum("m,mia,mij,mjb->ab", self.totals, dz, cov, dz)
        hess[0, :] = hess[:, 0] = 0.0
        return hess


def loglik_gradient(u: InteractionMatrix, emp: EmpiricalDistribution) -> np.ndarray:
    """Gradient of ``sum_S T_S sum_j v_jS log P(j|S; u)`` with ``u[0, 0]`` held fixed."""
    return _Objective(emp).gradient(u.u)


def halo_loglik(u: InteractionMatrix, emp: EmpiricalDistribution) -> float:
    return _Objective(emp).value(u.u)


@dataclass(frozen=True)
class HaloFit:
    matrix: InteractionMatrix
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool
    history: tuple[float, ...] = ()


def fit_halo_detailed(emp: EmpiricalDistribution, grad_tol: float = 1e-6,
                      max_iter: int = 5_000) -> HaloFit:
    """Maximum-likelihood Halo-MNL starting from ``u = 0``.

    Uses L-BFGS with a Wolfe line search, so each accepted iterate improves
    the log-likelihood, then a few Newton steps when round-off stalls it
    short of the gradient tolerance. ``u[0, 0]`` is pinned at 0.
    """
    obj = _Objective(emp)
    n = emp.n_products
    history: list[float] = [obj.value(np.zeros((n, n)))]

    def negated(x: np.ndarray) -> tuple[float, np.ndarray]:
        u = x.reshape(n, n)
        return -obj.value(u), -obj.gradient(u).ravel()

    bounds = [(0.0, 0.0)] + [(None, None)] * (n * n - 1)
    res = minimize(
        negated,
        np.zeros(n * n),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=lambda x: history.append(obj.value(x.reshape(n, n))),
        options={"maxiter": max_iter, "gtol": grad_tol, "ftol": 0.0, "maxcor": 20},
    )
    u = res.x.reshape(n, n)
    steps = _newton_polish(obj, u, grad_tol, min(20, max_iter - int(res.nit)))
    u = steps[-1] if steps else u
    history.extend(obj.value(x) for x in steps)
    gnorm = float(np.abs(obj.gradient(u)).max())
    return HaloFit(InteractionMatrix(u), obj.value(u), gnorm, int(res.nit) + len(steps),
                   gnorm < grad_tol, tuple(history))


def _newton_polish(obj: _Objective, u: np.ndarray, grad_tol: float,
                   max_steps: int = 20) -> list[np.ndarray]:
    """Newton steps for the last digits of the gradient.

    With many transactions the log-likelihood is large and its last few
    gains fall below floating-point resolution, which stalls line searches
    driven by function values. A step is accepted if it raises the
    log-likelihood, or leaves it unchanged within round-off and shrinks the
    gradient.
    """
    n = u.shape[0]
    out: list[np.ndarray] = []
    f = obj.value(u)
    g = obj.gradient(u).ravel()
    for _ in range(max_steps):
        gnorm = float(np.abs(g).max())
        if gnorm < grad_tol:
            break
        step = np.linalg.lstsq(-obj.hessian(u), g, rcond=1e-12)[0]
        step[0] = 0.0
        accepted = False
        t = 1.0
        for _ in range(30):
            trial = u + t * step.reshape(n, n)
            ft = obj.value(trial)
            gt = obj.gradient(trial).ravel()
            flat = abs(ft - f) <= 1e-13 * max(abs(f), 1.0)
            if ft > f or (flat and np.abs(gt).max() < gnorm):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        u, f, g = trial, max(ft, f), gt
        out.append(u)
    return out


def fit_halo(emp: EmpiricalDistribution, grad_tol: float = 1e-6,
             max_iter: int = 5_000) -> InteractionMatrix:
    """Fitted interaction matrix; warns with the final gradient norm if not converged."""
    fit = fit_halo_detailed(emp, grad_tol, max_iter)
    if not fit.converged:
        warnings.warn(
            f"Halo-MNL ascent stopped after {fit.iterations} iterations with gradient "
            f"max-norm {fit.grad_norm:.3e}",
            HaloConvergenceWarning,
            stacklevel=2,
        )
    return fit.matrix


__all__ = [
    "HaloConvergenceWarning",
    "HaloFit",
    "InteractionMatrix",
    "fit_halo",
    "fit_halo_detailed",
    "halo_loglik",
    "halo_probabilities",
    "halo_probability",
    "loglik_gradient",
]
