"""Restricted master problem: fit mixture weights over a fixed set of columns.

Two losses are supported. ``L1`` is solved as a linear program (HiGHS through
:func:`scipy.optimize.linprog`) and its equality-constraint marginals are the
pricing duals. ``KL`` is the transaction-weighted Kullback-Leibler divergence,
minimized by an active-set Newton method (or, optionally, accelerated EM
updates); its duals are the negative loss gradient with respect to the fitted
probabilities.
"""

from __future__ import annotations

import enum
import os
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, minimize_scalar

from .choice_matrix import CellIndex, ChoiceColumn, ChoiceMatrixView
from .core import NO_PURCHASE, Behavior, EmpiricalDistribution, ModelError

EPS = 1e-10


def _env_float(name: str, default: float) -> float:
    raw = os.environ.get(name)
    return float(raw) if raw else default


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    return int(raw) if raw else default


class LossKind(str, enum.Enum):
    L1 = "l1"
    KL = "kl"


class SolverError(RuntimeError):
    """The master solver failed to reach an optimal solution."""

    def __init__(self, message: str, iterations: int | None = None):
        super().__init__(message if iterations is None else f"{message} (after {iterations} iterations)")
        self.iterations = iterations


@dataclass(frozen=True)
class DualSolution:
    """Pricing duals.

    ``alpha[m, j]`` prices cell ``(j, S_m)`` and is zero for products not in
    ``S_m``; ``nu`` prices the simplex constraint.
    """

    alpha: np.ndarray
    nu: float


@dataclass(frozen=True)
class MasterSolution:
    weights: np.ndarray
    fitted: np.ndarray
    objective: float
    duals: DualSolution
    loss_kind: LossKind
    iterations: int = 0


def l1_loss(fitted: np.ndarray, emp: EmpiricalDistribution) -> float:
    return float(np.abs(fitted - emp.freq).sum())


def kl_loss(fitted: np.ndarray, emp: EmpiricalDistribution, eps: float = EPS) -> float:
    """Transaction-weighted KL divergence of the fitted from the observed shares."""
    w = emp.set_weights[:, None] * emp.freq
    mask = emp.freq > 0
    ratio = np.maximum(fitted[mask], eps) / emp.freq[mask]
    return max(float(-np.sum(w[mask] * np.log(ratio))), 0.0)


class RestrictedMaster:
    """Master problem over a growing list of columns.

    Columns are kept as a dense ``(cells, K)`` matrix; only offered
    ``(product, set)`` cells get a row.
    """

    def __init__(self, emp: EmpiricalDistribution, loss: LossKind | str = LossKind.KL, *,
                 eps: float = EPS, kl_tol: float | None = None, kl_max_iter: int | None = None,
                 kl_gap_tol: float | None = None, accelerate: bool = True,
                 kl_method: str | None = None):
        self.emp = emp
        self.loss = LossKind(loss)
        self.cells = CellIndex(emp.offer_sets, emp.n_products)
        self.v = self.cells.flatten(emp.freq)
        self.w = self.cells.flatten(emp.set_weights[:, None] * emp.freq)
        self.eps = eps
        self.kl_tol = kl_tol if kl_tol is not None else _env_float("GSPCHOICE_KL_TOL", 1e-9)
        self.kl_max_iter = kl_max_iter if kl_max_iter is not None else _env_int("GSPCHOICE_KL_MAX_ITER", 10_000)
        self.kl_gap_tol = kl_gap_tol if kl_gap_tol is not None else _env_float("GSPCHOICE_KL_GAP_TOL", 1e-10)
        self.accelerate = accelerate
        self.kl_method = kl_method or os.environ.get("GSPCHOICE_KL_METHOD", "newton")
        if self.kl_method not in ("newton", "em"):
            raise ModelError(f"unknown KL solver {self.kl_method!r}")
        self.columns: list[ChoiceColumn] = []
        self._blocks: list[np.ndarray] = []
        self._matrix = np.zeros((len(self.cells), 0))

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def matrix(self) -> np.ndarray:
        if self._blocks:
            self._matrix = np.hstack([self._matrix, *self._blocks])
            self._blocks = []
        return self._matrix

    def add_columns(self, columns: Sequence[ChoiceColumn]) -> None:
        if not columns:
            return
        block = np.empty((len(self.cells), len(columns)))
        for k, col in enumerate(columns):
            if col.n_sets != self.emp.n_sets:
                raise ModelError("column is not aligned with the training offer sets")
            block[:, k] = self.cells.column_vector(col)
        self.columns.extend(columns)
        self._blocks.append(block)

    def add_behaviors(self, behaviors: Sequence[Behavior]) -> None:
        from .choice_matrix import behavior_column

        self.add_columns([behavior_column(b, self.emp.offer_sets) for b in behaviors])

    def solve(self, warm_start: np.ndarray | None = None) -> MasterSolution:
        if not self.columns:
            raise ModelError("the restricted master needs at least one column")
        if self.loss is LossKind.L1:
            return self._solve_l1()
        if self.kl_method == "em":
            return self._solve_kl(warm_start)
        return self._solve_kl_newton(warm_start)

    # -- L1 -------------------------------------------------------------

    def _solve_l1(self) -> MasterSolution:
        a = self.matrix
        n_cells, k = a.shape
        eye = sparse.identity(n_cells, format="csr")
        top = sparse.hstack([sparse.csr_matrix(a), -eye, eye])
        bottom = sparse.hstack([sparse.csr_matrix(np.ones((1, k))),
                                sparse.csr_matrix((1, 2 * n_cells))])
        a_eq = sparse.vstack([top, bottom]).tocsc()
        b_eq = np.concatenate([self.v, [1.0]])
        c = np.concatenate([np.zeros(k), np.ones(2 * n_cells)])
        res = linprog(c, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        if res.status != 0:
            raise SolverError(f"L1 master LP failed: {res.message}", int(res.nit))
        lam = np.clip(res.x[:k], 0.0, None)
        lam = lam / lam.sum()
        x = a @ lam
        marg = res.eqlin.marginals
        alpha = self.cells.unflatten(marg[:n_cells])
        return MasterSolution(
            weights=lam,
            fitted=self.cells.unflatten(x),
            objective=float(np.abs(x - self.v).sum()),
            duals=DualSolution(alpha, float(marg[n_cells])),
            loss_kind=LossKind.L1,
            iterations=int(res.nit),
        )

    # -- KL -------------------------------------------------------------

    def _kl_objective(self, x: np.ndarray) -> float:
        mask = self.w > 0
        return float(-np.sum(self.w[mask] * np.log(np.maximum(x[mask], self.eps) / self.v[mask])))

    def _em_step(self, a: np.ndarray, lam: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        x = a @ lam
        g = a.T @ (self.w / np.maximum(x, self.eps))
        new = lam * g
        return new / new.sum(), g

    def _solve_kl(self, warm_start: np.ndarray | None) -> MasterSolution:
        a = self.matrix
        k = a.shape[1]
        lam = self._initial_weights(warm_start, k)
        obj = self._kl_objective(a @ lam)
        it = 0
        while it < self.kl_max_iter:
            it += 1
            lam1, g = self._em_step(a, lam)
            if g.max() - 1.0 <= self.kl_gap_tol:
                break
            lam2, _ = self._em_step(a, lam1)
            cand = self._extrapolate(lam, lam1, lam2) if self.accelerate else lam2
            new, _ = self._em_step(a, cand)
            new_obj = self._kl_objective(a @ new)
            obj2 = self._kl_objective(a @ lam2)
            if new_obj > obj2:
                new, new_obj = lam2, obj2
            change = obj - new_obj
            lam, obj = new, new_obj
            if change <= self.kl_tol * max(abs(obj), 1e-12):
                break
        x = a @ lam
        g = a.T @ (self.w / np.maximum(x, self.eps))
        alpha_flat = self.w / np.maximum(x, self.eps)
        nu = -float(g.max())
        return MasterSolution(
            weights=lam,
            fitted=self.cells.unflatten(x),
            objective=max(self._kl_objective(x), 0.0),
            duals=DualSolution(self.cells.unflatten(alpha_flat), nu),
            loss_kind=LossKind.KL,
            iterations=it,
        )

    def _kl_solution(self, lam: np.ndarray, iterations: int) -> MasterSolution:
        x = self.matrix @ lam
        alpha_flat = self.w / np.maximum(x, self.eps)
        g = self.matrix.T @ alpha_flat
        return MasterSolution(
            weights=lam,
            fitted=self.cells.unflatten(x),
            objective=max(self._kl_objective(x), 0.0),
            duals=DualSolution(self.cells.unflatten(alpha_flat), -float(g.max())),
            loss_kind=LossKind.KL,
            iterations=iterations,
        )

    def _solve_kl_newton(self, warm_start: np.ndarray | None) -> MasterSolution:
        """Active-set Newton method on the simplex.

        Newton steps on the current support keep the weights summing to one;
        a step that would make a weight negative is shortened and that column
        leaves the support. When Newton makes no progress, a pairwise step with
        an exact line search moves weight from the support column with the
        smallest gradient ``g_k = sum_c a_ck w_c / x_c`` to the column with the
        largest one. The run stops once that spread is below the gap
        tolerance, which also bounds ``max_k g_k - lambda^T g``, the distance
        to the optimum.
        """
        full = self.matrix
        k = full.shape[1]
        # Cells no column can reach only add a constant to the objective.
        rows = (self.w > 0) & (full.max(axis=1) > 0)
        a, w = full[rows], self.w[rows]

        def value(lam: np.ndarray) -> float:
            x = a @ lam
            if np.any(x <= 0.0):
                return np.inf
            return float(-w @ np.log(x))

        lam = np.zeros(k)
        if warm_start is not None and len(warm_start):
            prev = np.clip(np.asarray(warm_start, dtype=float), 0.0, None)
            if prev.size > k:
                raise ModelError("warm start is longer than the column list")
            lam[: prev.size] = prev
        if lam.sum() <= 0 or not np.isfinite(value(lam / lam.sum())):
            lam = np.full(k, 1.0 / k)
        lam /= lam.sum()
        f = value(lam)
        round_off = 1e-14 * max(abs(f), 1.0)
        support = lam > 0
        it = 0
        while it < self.kl_max_iter:
            it += 1
            x = a @ lam
            g = a.T @ (w / x)
            level = float(g @ lam)
            idx = np.flatnonzero(support)
            ga = g[idx]
            curv = w / (x * x)
            hess = (a[:, idx] * curv[:, None]).T @ a[:, idx]
            n_f = idx.size
            kkt = np.zeros((n_f + 1, n_f + 1))
            kkt[:n_f, :n_f] = hess
            kkt[:n_f, n_f] = kkt[n_f, :n_f] = 1.0
            step_dir = np.linalg.lstsq(kkt, np.append(ga, 0.0), rcond=None)[0][:n_f]
            decrement = float(ga @ step_dir)
            moved = False
            if decrement > 1e-20:
                neg = step_dir < 0
                t_max = min(1.0, float(np.min(-lam[idx][neg] / step_dir[neg]))) if neg.any() else 1.0
                t = t_max
                for _ in range(60):
                    trial = lam.copy()
                    trial[idx] += t * step_dir
                    trial = np.clip(trial, 0.0, None)
                    ft = value(trial)
                    if ft <= f - 1e-4 * t * decrement:
                        break
                    # A blocked step that only removes a negligible weight may
                    # be invisible in floating point; take it anyway.
                    if t == t_max < 1.0 and ft <= f + round_off:
                        break
                    t *= 0.5
                else:
                    t = 0.0
                blocked = t == t_max < 1.0
                if t > 0.0 and (ft < f or (blocked and ft <= f + round_off)):
                    cleaned = trial.copy()
                    if blocked:
                        blocking = idx[neg][np.argmin(-lam[idx][neg] / step_dir[neg])]
                        cleaned[blocking] = 0.0
                    cleaned[cleaned < 1e-15] = 0.0
                    # Zeroing must not strip the last support of an observed cell.
                    if np.isfinite(value(cleaned / cleaned.sum())):
                        trial = cleaned
                    lam = trial / trial.sum()
                    support = lam > 0
                    f = value(lam)
                    # Past this decrement the next step only polishes round-off,
                    # so check for entering columns instead.
                    moved = blocked or decrement > 1e-12
            if moved:
                continue
            x = a @ lam
            g = a.T @ (w / x)
            idx = np.flatnonzero(support)
            j = int(np.argmax(g))
            i = int(idx[np.argmin(g[idx])])
            if g[j] - g[i] <= self.kl_gap_tol:
                break
            # Pairwise step: shift weight from the worst support column to the
            # best column. This both admits entering columns and rebalances a
            # support the Newton step could not settle.
            toward = np.zeros(k)
            toward[j] += 1.0
            toward[i] -= 1.0
            cap = float(lam[i])
            res = minimize_scalar(lambda t: value(lam + t * toward), bounds=(0.0, cap),
                                  method="bounded", options={"xatol": 1e-14})
            t = float(res.x)
            f_cap = value(lam + cap * toward)
            if f_cap <= value(lam + t * toward) or (cap < 1e-12 and f_cap <= f + round_off):
                t = cap
            f_t = value(lam + t * toward)
            if not t > 0.0 or not (f_t < f or (t == cap and f_t <= f + round_off)):
                break
            lam = np.clip(lam + t * toward, 0.0, None)
            if t == cap:
                lam[i] = 0.0
            lam /= lam.sum()
            support = lam > 0
            f = value(lam)
        return self._kl_solution(lam, it)

    def _initial_weights(self, warm_start: np.ndarray | None, k: int) -> np.ndarray:
        if warm_start is None or len(warm_start) == 0:
            return np.full(k, 1.0 / k)
        prev = np.clip(np.asarray(warm_start, dtype=float), 0.0, None)
        n_new = k - prev.size
        if n_new < 0:
            raise ModelError("warm start is longer than the column list")
        # Multiplicative updates never revive a zero weight: every column,
        # old or new, gets a small positive floor.
        floor = 1e-3 / k
        lam = np.concatenate([prev / prev.sum(), np.zeros(n_new)])
        lam = (lam + floor) / (1.0 + floor * k)
        return lam / lam.sum()

    @staticmethod
    def _extrapolate(lam0: np.ndarray, lam1: np.ndarray, lam2: np.ndarray) -> np.ndarray:
        r = lam1 - lam0
        v = lam2 - lam1 - r
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return lam2
        step = min(-np.linalg.norm(r) / nv, -1.0)
        for _ in range(30):
            cand = lam0 - 2.0 * step * r + step * step * v
            if np.all(cand[lam2 > 0] > 0) and np.all(cand >= 0):
                return cand / cand.sum()
            step = (step - 1.0) / 2.0
            if step > -1.0 + 1e-12:
                break
        return lam2


def _master_for(columns: ChoiceMatrixView, emp: EmpiricalDistribution, loss: LossKind,
                **kwargs) -> RestrictedMaster:
    if tuple(columns.offer_sets) != tuple(emp.offer_sets):
        raise ModelError("columns are not aligned with the empirical offer sets")
    master = RestrictedMaster(emp, loss, **kwargs)
    master.add_columns(list(columns.columns))
    return master


def solve_l1(columns: ChoiceMatrixView, emp: EmpiricalDistribution) -> MasterSolution:
    """Least-absolute-deviation fit of the mixture weights."""
    return _master_for(columns, emp, LossKind.L1).solve()


def solve_kl(columns: ChoiceMatrixView, emp: EmpiricalDistribution,
             warm_start: np.ndarray | None = None, **kwargs) -> MasterSolution:
    """Maximum-likelihood (KL) fit of the mixture weights."""
    return _master_for(columns, emp, LossKind.KL, **kwargs).solve(warm_start)


def cost_terms(column: ChoiceColumn, duals: DualSolution) -> np.ndarray:
    """Per-offer-set contribution ``sum_j alpha[m, j] a[j, m]``."""
    return np.array([duals.alpha[m, list(items)].mean() for m, items in enumerate(column.support)])


def reduced_cost(column: ChoiceColumn, duals: DualSolution) -> float:
    """Pricing value ``-alpha^T a - nu``; negative columns improve the master."""
    return -float(np.sum(cost_terms(column, duals))) - duals.nu


@dataclass(frozen=True)
class CostProfile:
    """Per-offer-set summary of a node ``(P, I)`` under fixed duals.

    Holds, for every training set, the duals of the available ranked items in
    ranked order, plus the sum and count of duals over the available
    indifference items. Any level's cost terms follow in O(M), and so does a
    child's profile.
    """

    behavior: Behavior
    membership: np.ndarray
    alpha: np.ndarray
    ranked_alpha: np.ndarray
    ranked_len: np.ndarray
    indiff_sum: np.ndarray
    indiff_count: np.ndarray
    terms: np.ndarray

    @classmethod
    def build(cls, behavior: Behavior, duals: DualSolution, membership: np.ndarray) -> CostProfile:
        alpha = duals.alpha
        n_sets = membership.shape[0]
        ranked_alpha = np.zeros((n_sets, max(len(behavior.ranked), 1)))
        ranked_len = np.zeros(n_sets, dtype=np.intp)
        rows = np.arange(n_sets)
        for j in behavior.ranked:
            on = membership[:, j]
            ranked_alpha[rows[on], ranked_len[on]] = alpha[on, j]
            ranked_len += on
        indiff = sorted(behavior.indifference)
        if indiff:
            indiff_sum = (alpha[:, indiff] * membership[:, indiff]).sum(axis=1)
            indiff_count = membership[:, indiff].sum(axis=1).astype(np.intp)
        else:
            indiff_sum = np.zeros(n_sets)
            indiff_count = np.zeros(n_sets, dtype=np.intp)
        terms = _level_terms(ranked_alpha, ranked_len, indiff_sum, indiff_count, alpha, behavior.level)
        return cls(behavior, membership, alpha, ranked_alpha, ranked_len, indiff_sum, indiff_count, terms)

    def cost(self, nu: float) -> float:
        return -float(np.sum(self.terms)) - nu

    def terms_for_level(self, level: int) -> np.ndarray:
        if level == self.behavior.level:
            return self.terms
        return _level_terms(self.ranked_alpha, self.ranked_len, self.indiff_sum,
                            self.indiff_count, self.alpha, level)

    def child(self, ell: int, level: int = 1) -> CostProfile:
        """Profile of the sub-behavior that moves ``ell`` to the end of the ranking."""
        b = self.behavior
        if ell not in b.indifference:
            raise ModelError(f"product {ell} is not in the indifference set of {b}")
        child = Behavior(b.ranked + (ell,), b.indifference - {ell}, level)
        on = self.membership[:, ell]
        width = len(child.ranked)
        ranked_alpha = np.zeros((on.size, width))
        ranked_alpha[:, : self.ranked_alpha.shape[1]] = self.ranked_alpha[:, :width]
        rows = np.flatnonzero(on)
        ranked_alpha[rows, self.ranked_len[rows]] = self.alpha[rows, ell]
        ranked_len = self.ranked_len + on
        indiff_sum = self.indiff_sum - np.where(on, self.alpha[:, ell], 0.0)
        indiff_count = self.indiff_count - on
        # Only sets that offer ell, or all sets when the level changes,
        # can choose differently from the parent.
        changed = on if level == b.level else np.ones_like(on)
        terms = self.terms.copy()
        if changed.any():
            fresh = _level_terms(ranked_alpha[changed], ranked_len[changed], indiff_sum[changed],
                                 indiff_count[changed], self.alpha[changed], level)
            terms[changed] = fresh
        return CostProfile(child, self.membership, self.alpha, ranked_alpha, ranked_len,
                           indiff_sum, indiff_count, terms)


def _level_terms(ranked_alpha, ranked_len, indiff_sum, indiff_count, alpha, level) -> np.ndarray:
    n_sets = ranked_len.size
    out = alpha[:, NO_PURCHASE].astype(float).copy()
    if level <= ranked_alpha.shape[1]:
        pick = ranked_len >= level
        out[pick] = ranked_alpha[pick, level - 1]
    else:
        pick = np.zeros(n_sets, dtype=bool)
    uni = ~pick & (indiff_count > 0) & (level <= ranked_len + indiff_count)
    out[uni] = indiff_sum[uni] / indiff_count[uni]
    return out


def incremental_reduced_cost(parent: CostProfile, child: Behavior, duals: DualSolution) -> float:
    """Reduced cost of ``child`` derived from its parent's profile in O(M)."""
    extra = child.ranked[len(parent.behavior.ranked):]
    if child.ranked[: len(parent.behavior.ranked)] != parent.behavior.ranked or len(extra) != 1:
        raise ModelError(f"{child} does not extend {parent.behavior} by one ranked product")
    return parent.child(extra[0], child.level).cost(duals.nu)
