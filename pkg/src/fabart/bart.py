"""Sum-of-trees regression: priors, proposal moves, backfitting MCMC.

Each measurement equation gets a forest of ``n_trees`` regression trees
plus a residual standard deviation. Trees are updated one at a time
against the partial residual left by the others (Bayesian backfitting),
with Metropolis-Hastings steps over tree structures whose terminal-node
values are integrated out in closed form.

The dependent variable is rescaled to [-0.5, 0.5] before fitting (see
:func:`target_scale`); the terminal-node prior standard deviation is set
so that roughly 95% of the prior-predictive forest mass stays inside
that interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._kernels import leaf_stats, marginal_from_stats, route_rows
from .trees import ABSENT, LEAF, RegressionTree, SplitRule, dump_tree, parse_tree, predict_forest

MOVE_NAMES = ("grow", "prune", "change", "swap")
MOVE_PROBS = np.array([0.25, 0.25, 0.40, 0.10])


@dataclass(frozen=True)
class BartPrior:
    """Hyperparameters shared by every tree in one equation's forest.

    ``nu`` and ``xi`` parameterize the inverse-chi-square prior on the
    residual variance; ``nu`` defaults to T/2 at chain setup and ``xi``
    is calibrated from a preliminary linear-regression residual scale via
    :func:`calibrate_xi`.
    """

    alpha: float = 0.95
    beta: float = 2.0
    kappa: float = 2.0
    n_trees: int = 250
    nu: float | None = None
    quantile_v: float = 0.75
    xi: float | None = None
    leaf_scale_rule: str = "range-kappa"

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if not 0.0 < self.quantile_v < 1.0:
            raise ValueError(f"quantile_v must be in (0,1), got {self.quantile_v}")
        if self.n_trees < 1:
            raise ValueError("need at least one tree")
        if self.leaf_scale_rule not in ("range-kappa", "range-gamma"):
            raise ValueError(f"unknown leaf_scale_rule {self.leaf_scale_rule!r}")

    @property
    def leaf_sd(self) -> float:
        """Terminal-node prior standard deviation on the [-0.5, 0.5] scale."""
        if self.leaf_scale_rule == "range-gamma":
            return 1.0 / (2.0 * math.sqrt(2.0 * self.n_trees))
        return 0.5 / (self.kappa * math.sqrt(self.n_trees))


@dataclass
class Forest:
    """One equation's sum-of-trees state: S trees plus residual sd."""

    trees: list[RegressionTree]
    sigma: float
    equation_index: int = 0

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not self.trees:
            raise ValueError("empty forest")

    def predict(self, rows: np.ndarray) -> np.ndarray:
        return predict_forest(self.trees, rows)

    @classmethod
    def stumps(cls, n_trees: int, sigma: float, equation_index: int = 0) -> "Forest":
        return cls([RegressionTree.stump() for _ in range(n_trees)], sigma, equation_index)


def node_split_probability(depth: int, prior: BartPrior) -> float:
    """Probability that a node at the given depth is internal."""
    if depth < 0:
        raise ValueError("depth must be non-negative")
    return prior.alpha * (1.0 + depth) ** (-prior.beta)


def target_scale(y: np.ndarray) -> tuple[float, float]:
    """(offset, span) mapping y into [-0.5, 0.5]: y' = (y - offset)/span - 0.5."""
    lo, hi = float(np.min(y)), float(np.max(y))
    span = hi - lo
    if span <= 0:
        raise ValueError("target is constant; cannot rescale to [-0.5, 0.5]")
    return lo, span


def to_unit_interval(y, offset, span):
    return (np.asarray(y, dtype=float) - offset) / span - 0.5


def from_unit_interval(y, offset, span):
    return (np.asarray(y, dtype=float) + 0.5) * span + offset


def partial_residual(target: np.ndarray, forest: Forest, exclude: int, rows: np.ndarray) -> np.ndarray:
    """Target minus the fit of every tree except ``exclude``."""
    if not 0 <= exclude < len(forest.trees):
        raise IndexError(f"tree index {exclude} out of range")
    resid = np.asarray(target, dtype=float).copy()
    for s, tree in enumerate(forest.trees):
        if s != exclude:
            resid -= tree.predict(rows)
    return resid


def column_spans(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-column (min, max) of the regressor matrix, for threshold proposals."""
    return rows.min(axis=0), rows.max(axis=0)


def log_tree_prior(tree: RegressionTree, prior: BartPrior, spans: tuple[np.ndarray, np.ndarray]) -> float:
    """Log prior of a tree: split/stop probabilities times uniform rule densities."""
    mins, maxs = spans
    total = 0.0
    for i in np.flatnonzero(tree.var != ABSENT):
        i = int(i)
        p = node_split_probability(tree.depth_of(i), prior)
        if tree.var[i] == LEAF:
            total += math.log1p(-p)
        else:
            k = int(tree.var[i])
            width = max(float(maxs[k] - mins[k]), 1e-300)
            total += math.log(p) - math.log(len(mins)) - math.log(width)
    return total


@dataclass(frozen=True)
class Proposal:
    """Outcome of one proposal draw; ``tree`` is None when infeasible.

    ``log_q_ratio`` is log q(candidate->current) - log q(current->candidate),
    rule-selection densities included. ``node_depth`` and
    ``log_rule_density`` record what the structural-prior ratio needs (see
    :func:`structural_log_prior_ratio`); the rule-density terms cancel
    between the two ratios, which is what makes grow/prune acceptance
    independent of the threshold range.
    """

    move: str
    tree: RegressionTree | None
    log_q_ratio: float
    node_depth: int = 0
    log_rule_density: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.tree is not None


def _pick_move(rng) -> str:
    u = rng.random()
    if u < 0.25:
        return "grow"
    if u < 0.50:
        return "prune"
    if u < 0.90:
        return "change"
    return "swap"


def propose_move(tree, rows, rng, spans=None, move=None) -> Proposal:
    """Draw a grow/prune/change/swap candidate from the current tree.

    The move label is drawn with probabilities (0.25, 0.25, 0.40, 0.10)
    regardless of feasibility; infeasible draws (e.g. prune on a
    root-only tree) come back with ``tree=None`` and count as rejected
    iterations. Grow picks a uniform leaf, a uniform column, and a
    threshold uniform over that column's observed range.
    """
    if spans is None:
        spans = column_spans(rows)
    mins, maxs = spans
    n_cols = len(mins)
    if move is None:
        move = _pick_move(rng)

    log_pg, log_pp = math.log(MOVE_PROBS[0]), math.log(MOVE_PROBS[1])

    if move == "grow":
        leaves = tree.leaf_indices()
        target = int(leaves[rng.integers(len(leaves))])
        k = int(rng.integers(n_cols))
        log_width = math.log(max(float(maxs[k] - mins[k]), 1e-300))
        c = float(rng.uniform(mins[k], maxs[k]))
        cand = tree.copy()
        cand.grow(target, SplitRule(k, c))
        log_q = (log_pp - math.log(len(cand.prunable_indices()))) - (
            log_pg - math.log(len(leaves)) - math.log(n_cols) - log_width
        )
        rule_density = -math.log(n_cols) - log_width
        return Proposal(move, cand, log_q, tree.depth_of(target), rule_density)

    if move == "prune":
        prunable = tree.prunable_indices()
        if len(prunable) == 0:
            return Proposal(move, None, 0.0)
        target = int(prunable[rng.integers(len(prunable))])
        k_old = int(tree.var[target])
        log_width = math.log(max(float(maxs[k_old] - mins[k_old]), 1e-300))
        cand = tree.copy()
        cand.prune(target)
        log_q = (log_pg - math.log(cand.n_leaves) - math.log(n_cols) - log_width) - (
            log_pp - math.log(len(prunable))
        )
        rule_density = -math.log(n_cols) - log_width
        return Proposal(move, cand, log_q, tree.depth_of(target), rule_density)

    if move == "change":
        internal = tree.internal_indices()
        if len(internal) == 0:
            return Proposal(move, None, 0.0)
        target = int(internal[rng.integers(len(internal))])
        k_old = int(tree.var[target])
        log_width_old = math.log(max(float(maxs[k_old] - mins[k_old]), 1e-300))
        k = int(rng.integers(n_cols))
        log_width_new = math.log(max(float(maxs[k] - mins[k]), 1e-300))
        cand = tree.copy()
        cand.set_rule(target, SplitRule(k, float(rng.uniform(mins[k], maxs[k]))))
        return Proposal(move, cand, log_width_new - log_width_old, 0, log_width_old - log_width_new)

    if move == "swap":
        pairs = tree.swap_pairs()
        if not pairs:
            return Proposal(move, None, 0.0)
        parent, child = pairs[rng.integers(len(pairs))]
        cand = tree.copy()
        cand.swap_rules(parent, child)
        return Proposal(move, cand, 0.0)

    raise ValueError(f"unknown move {move!r}")


def structural_log_prior_ratio(proposal: Proposal, prior: BartPrior) -> float:
    """log p(candidate) - log p(current), from the proposal's move metadata.

    Equals the difference of :func:`log_tree_prior` evaluations without
    touching nodes the move left alone.
    """
    if proposal.move in ("grow", "prune"):
        p_d = node_split_probability(proposal.node_depth, prior)
        p_child = node_split_probability(proposal.node_depth + 1, prior)
        delta = (
            math.log(p_d)
            + 2.0 * math.log1p(-p_child)
            - math.log1p(-p_d)
            + proposal.log_rule_density
        )
        return delta if proposal.move == "grow" else -delta
    if proposal.move == "change":
        return proposal.log_rule_density
    return 0.0


def log_marginal_likelihood(residuals, tree, rows, sigma, prior) -> float:
    """Log density of the residuals with terminal-node values integrated out.

    Each leaf with n assigned residuals contributes a mean-zero Gaussian
    with covariance sigma^2 I + leaf_sd^2 11'. A leaf with no assigned
    rows returns -inf (the proposal is then auto-rejected).
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    residuals = np.ascontiguousarray(residuals, dtype=float)
    leaf_idx = tree.route(rows)
    counts, sums, sumsq = leaf_stats(leaf_idx, residuals, len(tree.var))
    value, _empty = marginal_from_stats(
        tree.var, counts, sums, sumsq, sigma * sigma, prior.leaf_sd**2
    )
    return float(value)


def mh_accept(current, candidate, log_q_ratio, residuals, rows, sigma, prior, rng,
              spans=None, current_logml=None, log_prior_ratio=None):
    """Metropolis-Hastings accept/reject between two tree structures.

    Acceptance ratio = proposal ratio x marginal-likelihood ratio x
    tree-prior ratio, evaluated in log space. Returns the surviving tree.
    A candidate with an empty leaf has marginal likelihood -inf and is
    never accepted.
    """
    if current_logml is None:
        current_logml = log_marginal_likelihood(residuals, current, rows, sigma, prior)
    cand_logml = log_marginal_likelihood(residuals, candidate, rows, sigma, prior)
    if cand_logml == -np.inf:
        return current
    if current_logml == -np.inf:
        return candidate
    if log_prior_ratio is None:
        if spans is None:
            spans = column_spans(rows)
        log_prior_ratio = log_tree_prior(candidate, prior, spans) - log_tree_prior(current, prior, spans)
    log_a = log_q_ratio + cand_logml - current_logml + log_prior_ratio
    if log_a >= 0 or math.log(rng.uniform()) < log_a:
        return candidate
    return current


def sample_leaf_values(tree, residuals, rows, sigma, prior, rng) -> RegressionTree:
    """Draw each terminal-node value from its conjugate Gaussian posterior.

    Prior N(0, leaf_sd^2) against the mean of the leaf's residuals; a leaf
    that happens to hold no rows falls back to a pure prior draw.
    """
    residuals = np.ascontiguousarray(residuals, dtype=float)
    leaf_idx = tree.route(rows)
    counts, sums, _ = leaf_stats(leaf_idx, residuals, len(tree.var))
    out = tree.copy()
    leaves = out.leaf_indices()
    n = counts[leaves].astype(float)
    prec = n / sigma**2 + 1.0 / prior.leaf_sd**2
    post_var = 1.0 / prec
    post_mean = post_var * sums[leaves] / sigma**2
    out.leaf_value[leaves] = post_mean + np.sqrt(post_var) * rng.standard_normal(len(leaves))
    return out


def calibrate_xi(sigma_hat: float, nu: float, quantile_v: float = 0.75) -> float:
    """Scale of the inverse-chi-square prior so P(sigma < sigma_hat) = quantile_v."""
    if sigma_hat <= 0:
        raise ValueError("sigma_hat must be positive")
    return sigma_hat**2 * stats.chi2.ppf(1.0 - quantile_v, nu) / nu


def sample_sigma(full_residuals, prior: BartPrior, rng) -> float:
    """Posterior draw of the residual sd under the nu*xi/chi2_nu prior."""
    if prior.nu is None or prior.xi is None:
        raise ValueError("prior.nu and prior.xi must be set (see calibrate_xi)")
    resid = np.asarray(full_residuals, dtype=float)
    ssr = float(resid @ resid)
    draw = rng.chisquare(prior.nu + resid.size)
    return math.sqrt((prior.nu * prior.xi + ssr) / draw)


def _draw_leaf_values(tree, counts, sums, sigma, prior, rng):
    leaves = tree.leaf_indices()
    n = counts[leaves].astype(float)
    post_var = 1.0 / (n / sigma**2 + 1.0 / prior.leaf_sd**2)
    post_mean = post_var * sums[leaves] / sigma**2
    tree.leaf_value[leaves] = post_mean + np.sqrt(post_var) * rng.standard_normal(len(leaves))


def backfit_sweep(forest: Forest, target, rows, prior: BartPrior, rng,
                  spans=None) -> Forest:
    """One full backfitting pass over the forest.

    For each tree: partial residual, proposal, MH accept, leaf redraw;
    afterwards the residual sd is redrawn from the full residuals. Leaf
    assignments are threaded through so each tree is routed at most twice
    per update.
    """
    target = np.ascontiguousarray(target, dtype=float)
    rows = np.ascontiguousarray(rows, dtype=float)
    if spans is None:
        spans = column_spans(rows)
    sigma = forest.sigma
    sigma2 = sigma * sigma
    smu2 = prior.leaf_sd**2

    trees = list(forest.trees)
    n_trees = len(trees)
    leaf_idx = [route_rows(t.var, t.threshold, rows) for t in trees]
    fits = np.empty((n_trees, len(target)))
    for s in range(n_trees):
        fits[s] = trees[s].leaf_value[leaf_idx[s]]
    total = fits.sum(axis=0)

    for s in range(n_trees):
        tree = trees[s]
        resid = target - total + fits[s]
        idx = leaf_idx[s]
        counts, sums, _sumsq = leaf_stats(idx, resid, len(tree.var))
        cur_logml, _ = marginal_from_stats(tree.var, counts, sums, _sumsq, sigma2, smu2)

        prop = propose_move(tree, rows, rng, spans=spans)
        if prop.feasible:
            cand = prop.tree
            cand_idx = route_rows(cand.var, cand.threshold, rows)
            c_counts, c_sums, c_sumsq = leaf_stats(cand_idx, resid, len(cand.var))
            cand_logml, _ = marginal_from_stats(cand.var, c_counts, c_sums, c_sumsq, sigma2, smu2)
            if cand_logml > -np.inf:
                if cur_logml == -np.inf:
                    accept = True
                else:
                    log_a = (
                        prop.log_q_ratio
                        + structural_log_prior_ratio(prop, prior)
                        + cand_logml
                        - cur_logml
                    )
                    accept = log_a >= 0 or math.log(rng.uniform()) < log_a
                if accept:
                    tree, idx, counts, sums = cand, cand_idx, c_counts, c_sums

        if tree is trees[s]:
            tree = tree.copy()
        _draw_leaf_values(tree, counts, sums, sigma, prior, rng)
        trees[s], leaf_idx[s] = tree, idx
        new_fit = tree.leaf_value[idx]
        total += new_fit - fits[s]
        fits[s] = new_fit

    new_sigma = sample_sigma(target - total, prior, rng)
    return Forest(trees, new_sigma, forest.equation_index)


def sample_prior_tree(prior: BartPrior, spans, rng, draw_leaves=True, max_depth=12) -> RegressionTree:
    """Generate a tree from the structural prior (used for prior checks)."""
    mins, maxs = spans
    tree = RegressionTree.stump()

    def build(index, depth):
        p = node_split_probability(depth, prior) if depth < max_depth else 0.0
        if rng.uniform() < p:
            k = int(rng.integers(len(mins)))
            tree._ensure_capacity(2 * index + 2)
            tree.var[index] = k
            tree.threshold[index] = rng.uniform(mins[k], maxs[k])
            for child in (2 * index + 1, 2 * index + 2):
                tree.var[child] = LEAF
            build(2 * index + 1, depth + 1)
            build(2 * index + 2, depth + 1)
        elif draw_leaves:
            tree.leaf_value[index] = prior.leaf_sd * rng.standard_normal()

    build(0, 0)
    return tree


def dump_forest(forest: Forest) -> str:
    """Structured text dump: topologies, depths, leaf values per tree."""
    parts = [f"forest equation={forest.equation_index} sigma={float(forest.sigma)!r} trees={len(forest.trees)}"]
    for s, tree in enumerate(forest.trees):
        parts.append(f"tree {s}")
        parts.append(dump_tree(tree))
    return "\n".join(parts) + "\n"


def parse_forest(text: str) -> Forest:
    """Inverse of :func:`dump_forest`."""
    lines = text.strip().splitlines()
    header = lines[0].split()
    eq = int(header[1].split("=")[1])
    sigma = float(header[2].split("=")[1])
    trees, block = [], []
    for line in lines[1:]:
        if line.startswith("tree "):
            if block:
                trees.append(parse_tree("\n".join(block)))
                block = []
        else:
            block.append(line)
    if block:
        trees.append(parse_tree("\n".join(block)))
    return Forest(trees, sigma, eq)
