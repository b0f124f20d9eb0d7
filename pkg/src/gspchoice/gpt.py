"""Growing Preference Tree column generation.

The tree holds one node per ``(ranked prefix, indifference set)`` pair. A node
may carry several behaviors that differ only in their level. Each iteration
samples nodes by their aggregate weight, expands them into sub-behaviors
(move one indifference item to the end of the prefix, at every admissible
level), prices the candidates incrementally from the parent's cost profile,
and lets a selection rule pick the entering columns.
"""

from __future__ import annotations

import enum
import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np
from scipy.stats import chi2

from .choice_matrix import behavior_column
from .core import Behavior, ChoiceModel, EmpiricalDistribution, ModelError, ProductCatalog
from .master import (
    CostProfile,
    LossKind,
    MasterSolution,
    RestrictedMaster,
    SolverError,
    reduced_cost,
)

log = logging.getLogger(__name__)

NodeKey = tuple[tuple[int, ...], frozenset[int]]

NEGATIVE_COST_TOL = 1e-9


class Selection(str, enum.Enum):
    COST = "cost"
    DOMINANCE = "dominance"


@dataclass(frozen=True)
class GptConfig:
    gamma: int = 10
    delta: int = 20
    loss_kind: LossKind = LossKind.KL
    selection: Selection = Selection.COST
    allow_irrational: bool = True
    significance: float = 0.05
    max_iterations: int = 200
    rng_seed: int = 0
    audit_costs: bool = False

    def __post_init__(self) -> None:
        if self.gamma < 1 or self.delta < 1:
            raise ValueError("gamma and delta must be positive")
        if not 0.0 < self.significance < 1.0:
            raise ValueError("significance must lie in (0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        object.__setattr__(self, "loss_kind", LossKind(self.loss_kind))
        object.__setattr__(self, "selection", Selection(self.selection))

    @classmethod
    def preset(cls, method: str, **overrides: Any) -> GptConfig:
        """Named variants: ``gpt-r`` (rational), ``gpt-i`` (cost rule), ``gpt-ic`` (dominance rule)."""
        base = {
            "gpt-r": dict(allow_irrational=False, selection=Selection.COST),
            "gpt-i": dict(allow_irrational=True, selection=Selection.COST),
            "gpt-ic": dict(allow_irrational=True, selection=Selection.DOMINANCE),
        }
        try:
            return cls(**{**base[method], **overrides})
        except KeyError:
            raise ValueError(f"unknown GPT variant {method!r}") from None


@dataclass
class TreeNode:
    ranked: tuple[int, ...]
    indifference: frozenset[int]
    levels: set[int] = field(default_factory=set)
    children: dict[int, TreeNode] = field(default_factory=dict)
    pruned: bool = False

    @property
    def key(self) -> NodeKey:
        return self.ranked, self.indifference

    def behaviors(self) -> list[Behavior]:
        return [Behavior(self.ranked, self.indifference, i) for i in sorted(self.levels)]


class PreferenceTree:
    """Forest of preference prefixes rooted at single-product rankings."""

    def __init__(self) -> None:
        self.roots: dict[int, TreeNode] = {}
        self.nodes: dict[NodeKey, TreeNode] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, key: object) -> bool:
        return key in self.nodes

    def get(self, key: NodeKey) -> TreeNode | None:
        return self.nodes.get(key)

    def add_root(self, product: int, indifference: Iterable[int]) -> TreeNode:
        node = TreeNode((product,), frozenset(indifference), {1})
        self.roots[product] = node
        self.nodes[node.key] = node
        return node

    def child_of(self, parent: TreeNode, ell: int) -> TreeNode:
        node = parent.children.get(ell)
        if node is None:
            node = TreeNode(parent.ranked + (ell,), parent.indifference - {ell})
            parent.children[ell] = node
            self.nodes[node.key] = node
        return node

    def leaves(self, include_pruned: bool = False) -> list[TreeNode]:
        return [n for n in self.nodes.values()
                if not any(not c.pruned for c in n.children.values())
                and (include_pruned or not n.pruned)]

    def behaviors(self) -> list[Behavior]:
        return [b for n in self.nodes.values() for b in n.behaviors()]

    def check_invariants(self) -> None:
        for root_product, root in self.roots.items():
            if root.ranked != (root_product,):
                raise AssertionError(f"root {root.key} is not keyed by {root_product}")
            stack = [root]
            while stack:
                node = stack.pop()
                if not all(1 <= i <= len(node.ranked) + 1 for i in node.levels):
                    raise AssertionError(f"node {node.key} has out-of-range levels {node.levels}")
                for ell, child in node.children.items():
                    if child.ranked != node.ranked + (ell,) or child.indifference != node.indifference - {ell}:
                        raise AssertionError(f"child {child.key} does not extend {node.key} by {ell}")
                    if ell not in node.indifference:
                        raise AssertionError(f"child product {ell} not in parent's indifference set")
                    stack.append(child)


@dataclass(frozen=True)
class Candidate:
    behavior: Behavior
    cost: float
    label: str = ""

    @property
    def n_ranked(self) -> int:
        return len(self.behavior.ranked)


def initialize(catalog: ProductCatalog) -> PreferenceTree:
    """One rational root per product, the no-purchase option included."""
    tree = PreferenceTree()
    everything = set(catalog.products)
    for k in catalog.products:
        tree.add_root(k, everything - {k})
    return tree


def node_weights(tree: PreferenceTree, weights: Mapping[Behavior, float]) -> dict[NodeKey, float]:
    """Aggregate behavior weights by node; absent behaviors count as zero."""
    agg = {key: 0.0 for key in tree.nodes}
    for b, w in weights.items():
        if b.node_key in agg:
            agg[b.node_key] += float(w)
    return agg


def sample_nodes(tree: PreferenceTree, model: ChoiceModel | Mapping[Behavior, float], gamma: int,
                 rng: np.random.Generator) -> list[TreeNode]:
    """Draw ``gamma`` nodes with replacement by aggregate weight, then deduplicate.

    Falls back to uniform draws over unpruned leaves when no node carries weight.
    """
    weights = dict(zip(model.behaviors, model.weights)) if isinstance(model, ChoiceModel) else dict(model)
    agg = node_weights(tree, weights)
    keys = sorted(agg, key=lambda k: (len(k[0]), k[0]))
    p = np.array([agg[k] for k in keys])
    p = np.where(p > 0, p, 0.0)
    if p.sum() <= 0:
        pool = sorted(tree.leaves(), key=lambda n: (len(n.ranked), n.ranked))
        if not pool:
            return []
        picks = rng.integers(len(pool), size=gamma)
        chosen = [pool[i] for i in picks]
    else:
        picks = rng.choice(len(keys), size=gamma, replace=True, p=p / p.sum())
        chosen = [tree.nodes[keys[i]] for i in picks]
    seen: dict[NodeKey, TreeNode] = {}
    for node in chosen:
        seen.setdefault(node.key, node)
    return list(seen.values())


def expand(node: TreeNode, allow_irrational: bool = True, tree: PreferenceTree | None = None,
           in_model: set[Behavior] | None = None) -> list[Behavior]:
    """Sub-behaviors of ``node``: each indifference item appended to the prefix.

    Levels run over ``1..|P|+1`` of the parent (``1`` only when rational).
    Pruned children and behaviors already in the model are skipped.
    """
    if node.pruned:
        return []
    in_model = in_model or set()
    top = len(node.ranked) + 1 if allow_irrational else 1
    out = []
    for ell in sorted(node.indifference):
        child = node.children.get(ell) if tree is None else tree.get((node.ranked + (ell,), node.indifference - {ell}))
        if child is not None and child.pruned:
            continue
        for level in range(1, top + 1):
            b = Behavior(node.ranked + (ell,), node.indifference - {ell}, level)
            if b not in in_model:
                out.append(b)
    return out


def _tie_key(c: Candidate) -> tuple:
    return len(c.behavior.ranked), c.behavior.ranked, c.behavior.level


def select_cost(candidates: Sequence[Candidate], delta: int) -> list[Candidate]:
    """The ``delta`` cheapest candidates."""
    ranked = sorted(candidates, key=lambda c: (c.cost, *_tie_key(c)))
    return ranked[:delta]


def select_dominance(candidates: Sequence[Candidate], delta: int) -> list[Candidate]:
    """Shortest prefixes first, cost second; start the window at the first negative cost."""
    ranked = sorted(candidates, key=lambda c: (c.n_ranked, c.cost, c.behavior.ranked, c.behavior.level))
    first = next((r for r, c in enumerate(ranked) if c.cost < -NEGATIVE_COST_TOL), None)
    if first is None:
        return []
    return ranked[first:first + delta]


def candidate_bound(node: TreeNode, allow_irrational: bool = True) -> int:
    """Most sub-behaviors one node can produce: ``|I| (|P| + 1)``, or ``|I|`` if rational."""
    return len(node.indifference) * (len(node.ranked) + 1 if allow_irrational else 1)


def update_tree(tree: PreferenceTree, candidates: Sequence[Candidate],
                entering: Sequence[Candidate]) -> list[TreeNode]:
    """Record entering behaviors as node levels and prune nodes that got none.

    Every priced candidate gets a node; a node none of whose levels entered is
    pruned and never expanded again. Returns the newly pruned nodes.
    """
    chosen = {c.behavior for c in entering}
    touched: dict[NodeKey, TreeNode] = {}
    for cand in candidates:
        b = cand.behavior
        parent = tree.get((b.ranked[:-1], b.indifference | {b.ranked[-1]}))
        if parent is None:
            raise ModelError(f"candidate {b} has no parent node in the tree")
        node = tree.child_of(parent, b.ranked[-1])
        if b in chosen:
            node.levels.add(b.level)
        touched[node.key] = node
    pruned = []
    for node in touched.values():
        if not node.levels and not node.pruned:
            node.pruned = True
            pruned.append(node)
    return pruned


def stop_check(loglik_prev: float, loglik_new: float, params_added: int, significance: float = 0.05) -> bool:
    """Likelihood-ratio test: stop when the gain is not significant."""
    if params_added <= 0:
        return True
    stat = -2.0 * (loglik_prev - loglik_new)
    return bool(stat < chi2.ppf(1.0 - significance, params_added))


@dataclass
class IterationRecord:
    iteration: int
    n_sampled: int
    n_candidates: int
    candidate_bound: int
    n_entering: int
    min_cost: float
    objective: float
    loglik: float
    audit_error: float = 0.0
    n_frontier_candidates: int = 0


@dataclass
class GptResult:
    model: ChoiceModel
    solution: MasterSolution
    tree: PreferenceTree
    history: list[IterationRecord]
    stop_reason: str
    behaviors: list[Behavior]

    @property
    def objective(self) -> float:
        return self.solution.objective

    @property
    def iterations(self) -> int:
        return len(self.history)


def _price_node(node: TreeNode, profile: CostProfile, nu: float, tree: PreferenceTree,
                in_model: set[Behavior], allow_irrational: bool) -> list[tuple[Candidate, CostProfile]]:
    out = []
    for b in expand(node, allow_irrational, tree, in_model):
        ell = b.ranked[-1]
        child = profile.child(ell, b.level)
        out.append((Candidate(b, child.cost(nu)), child))
    return out


def _price_nodes(nodes: Sequence[TreeNode], sol: MasterSolution, membership: np.ndarray,
                 tree: PreferenceTree, in_model: set[Behavior], config: GptConfig,
                 emp: EmpiricalDistribution) -> tuple[list[Candidate], float]:
    candidates: list[Candidate] = []
    audit = 0.0
    for node in nodes:
        level = min(node.levels) if node.levels else 1
        profile = CostProfile.build(Behavior(node.ranked, node.indifference, level), sol.duals, membership)
        for cand, _ in _price_node(node, profile, sol.duals.nu, tree, in_model, config.allow_irrational):
            candidates.append(cand)
            if config.audit_costs:
                direct = reduced_cost(behavior_column(cand.behavior, emp.offer_sets), sol.duals)
                audit = max(audit, abs(direct - cand.cost))
    return candidates, audit


def fit_with_trace(emp: EmpiricalDistribution, config: GptConfig | None = None) -> GptResult:
    config = config or GptConfig()
    rng = np.random.default_rng(config.rng_seed)
    catalog = ProductCatalog(emp.n_products)
    tree = initialize(catalog)
    membership = emp.membership()
    master = RestrictedMaster(emp, config.loss_kind)
    behaviors = [b for node in sorted(tree.roots.values(), key=lambda n: n.ranked) for b in node.behaviors()]
    in_model = set(behaviors)
    master.add_behaviors(behaviors)
    sol = master.solve()
    loglik = emp.loglik(sol.fitted)
    history: list[IterationRecord] = []
    stop_reason = "max_iterations"

    for it in range(1, config.max_iterations + 1):
        weights = dict(zip(behaviors, sol.weights))
        sampled = sample_nodes(tree, weights, config.gamma, rng)
        sampled = [n for n in sampled if n.indifference and not n.pruned]
        bound = sum(candidate_bound(n, config.allow_irrational) for n in sampled)
        candidates, audit = _price_nodes(sampled, sol, membership, tree, in_model, config, emp)
        n_sampled_candidates = len(candidates)
        n_frontier = 0
        min_cost = min((c.cost for c in candidates), default=float("inf"))
        if min_cost >= -NEGATIVE_COST_TOL:
            # Sampling found nothing; only stop if no unpruned node anywhere
            # has an improving sub-behavior.
            frontier = [n for n in tree.nodes.values() if n.indifference and not n.pruned]
            candidates, audit = _price_nodes(frontier, sol, membership, tree, in_model, config, emp)
            n_frontier = len(candidates)
            min_cost = min((c.cost for c in candidates), default=float("inf"))
        if min_cost >= -NEGATIVE_COST_TOL:
            history.append(IterationRecord(it, len(sampled), n_sampled_candidates, bound, 0, min_cost,
                                           sol.objective, loglik, audit, n_frontier))
            stop_reason = "no_negative_cost"
            break
        select = select_cost if config.selection is Selection.COST else select_dominance
        entering = select(candidates, config.delta)
        if not entering:
            stop_reason = "no_negative_cost"
            break
        update_tree(tree, candidates, entering)
        new = [c.behavior for c in entering]
        behaviors.extend(new)
        in_model.update(new)
        master.add_behaviors(new)
        try:
            new_sol = master.solve(warm_start=sol.weights)
        except SolverError as exc:
            raise SolverError(f"GPT iteration {it}: {exc}", exc.iterations) from exc
        new_loglik = emp.loglik(new_sol.fitted)
        history.append(IterationRecord(it, len(sampled), n_sampled_candidates, bound, len(new), min_cost,
                                       new_sol.objective, new_loglik, audit, n_frontier))
        log.debug("iteration %d: %d candidates, %d entering, objective %.6g", it, len(candidates),
                  len(new), new_sol.objective)
        prev_loglik = loglik
        sol, loglik = new_sol, new_loglik
        if config.loss_kind is LossKind.KL and stop_check(prev_loglik, loglik, len(new), config.significance):
            stop_reason = "likelihood_test"
            break

    full = ChoiceModel.from_unnormalized(behaviors, sol.weights)
    model = full.pruned(1e-9)
    meta = {
        "method": _method_name(config),
        "rng_seed": config.rng_seed,
        "iterations": len(history),
        "stop_reason": stop_reason,
        "objective": sol.objective,
        "loss": config.loss_kind.value,
    }
    model = replace(model, metadata=meta)
    return GptResult(model, sol, tree, history, stop_reason, behaviors)


def fit(emp: EmpiricalDistribution, config: GptConfig | None = None) -> ChoiceModel:
    """Estimate a partially-ranked mixture by growing preference trees."""
    return fit_with_trace(emp, config).model


def _method_name(config: GptConfig) -> str:
    if not config.allow_irrational:
        return "gpt-r"
    return "gpt-ic" if config.selection is Selection.DOMINANCE else "gpt-i"


__all__ = [
    "Candidate",
    "GptConfig",
    "GptResult",
    "IterationRecord",
    "PreferenceTree",
    "Selection",
    "TreeNode",
    "expand",
    "fit",
    "fit_with_trace",
    "candidate_bound",
    "initialize",
    "node_weights",
    "sample_nodes",
    "select_cost",
    "select_dominance",
    "stop_check",
    "update_tree",
]
