"""Population density scoring and best-of-N selection.

Per-step scoring averages the manifold kernel over every trajectory's action
at one step (the self term included). Whole-trajectory scoring factorizes the
trajectory density into the first-step density times per-transition
conditionals, each a ratio of a joint to a marginal kernel estimate over the
population. All sums run in the log domain.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptySupport, StepOutOfRange
from .kernel import DEFAULT_BANDWIDTHS, Action, Bandwidths, log_kernel, log_kernel_matrix
from .population import Population, default_scored_step


class Method(enum.Enum):
    """Selection policies over a scored population."""

    KDPE = "kdpe"          # argmax of log-density
    KDPE_OOD = "kdpe_ood"  # argmin of log-density (outlier seeker)
    UNIFORM = "uniform"    # seeded uniform draw, densities still reported
    TR_KDPE = "tr_kdpe"    # argmax of whole-trajectory log-density

    @classmethod
    def parse(cls, name: str) -> "Method":
        try:
            return cls(name.replace("-", "_"))
        except ValueError:
            raise ValueError(f"unknown method {name!r}") from None


def logsumexp(values: np.ndarray) -> float:
    """log(sum(exp(values))), finite for any finite inputs.

    Max-subtracted so no intermediate overflows; an all-(-inf) input returns
    -inf rather than raising.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("logsumexp of an empty array")
    m = float(np.max(arr))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(arr - m))))


def _logsumexp_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp of a 2D array."""
    m = np.max(mat, axis=-1, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(mat - m), axis=-1)) + m[:, 0]
    return out


def kde_log_density(query: Action, support: Sequence[Action],
                    h: Bandwidths = DEFAULT_BANDWIDTHS) -> float:
    """Log of the average kernel value between the query and the support set."""
    n = len(support)
    if n == 0:
        raise EmptySupport("density needs at least one support action")
    logs = np.array([log_kernel(query, a, h) for a in support])
    return logsumexp(logs) - math.log(n)


def _resolve_step(pop: Population, step: int | None) -> int:
    if step is None:
        return default_scored_step(pop.t)
    if not 0 <= step < pop.t:
        raise StepOutOfRange(f"step {step} outside [0, {pop.t})")
    return step


def score_population(pop: Population, step: int | None = None,
                     h: Bandwidths = DEFAULT_BANDWIDTHS,
                     include_normalizer: bool = True) -> np.ndarray:
    """Log-density of every trajectory's action at one step, shape (N,).

    Each trajectory's own kernel self-term is part of the sum, so every
    log-density is bounded below by log C - log N and the result is finite
    for any finite population. ``include_normalizer=False`` drops the
    constant log C from every entry; argmax and argmin are unaffected.
    """
    step = _resolve_step(pop, step)
    packed = pop.packed_step(step)
    k = log_kernel_matrix(packed, packed, h, include_normalizer)
    return _logsumexp_rows(k) - math.log(pop.n)


def tr_score_population(pop: Population, h: Bandwidths = DEFAULT_BANDWIDTHS,
                        include_normalizer: bool = True) -> np.ndarray:
    """Whole-trajectory log-density of every trajectory, shape (N,).

    Factorizes log p(a_1..a_T) as the first-step log-density plus, per
    transition, the log ratio of the joint estimate over steps (t-1, t) to
    the marginal estimate over step t-1. The per-estimate 1/N factors cancel
    in each ratio, leaving the single log N from the first step.
    """
    prev_step = pop.packed_step(0)
    prev = log_kernel_matrix(prev_step, prev_step, h, include_normalizer)
    scores = _logsumexp_rows(prev) - math.log(pop.n)
    for step in range(1, pop.t):
        packed = pop.packed_step(step)
        cur = log_kernel_matrix(packed, packed, h, include_normalizer)
        scores += _logsumexp_rows(prev + cur) - _logsumexp_rows(prev)
        prev = cur
    return scores


def tr_kde_log_density(traj_index: int, pop: Population,
                       h: Bandwidths = DEFAULT_BANDWIDTHS) -> float:
    """Whole-trajectory log-density of one trajectory.

    Same factorization as ``tr_score_population`` but evaluated on a single
    kernel row per step, so scoring one candidate against a large population
    stays O(N * T) rather than O(N^2 * T).
    """
    if not 0 <= traj_index < pop.n:
        raise IndexError(f"trajectory index {traj_index} outside [0, {pop.n})")

    def row(step: int) -> np.ndarray:
        pos, rot, grip = pop.packed_step(step)
        query = (pos[traj_index:traj_index + 1],
                 rot[traj_index:traj_index + 1],
                 grip[traj_index:traj_index + 1])
        return log_kernel_matrix(query, (pos, rot, grip), h)[0]

    prev = row(0)
    total = logsumexp(prev) - math.log(pop.n)
    for step in range(1, pop.t):
        cur = row(step)
        total += logsumexp(prev + cur) - logsumexp(prev)
        prev = cur
    return total


@dataclass(frozen=True)
class DensityReport:
    """Outcome of scoring and selecting over one population."""

    log_densities: np.ndarray
    selected_index: int
    method: Method
    scored_step: int  # -1 when the whole trajectory was scored
    bandwidths: Bandwidths

    def __post_init__(self):
        if not 0 <= self.selected_index < len(self.log_densities):
            raise ValueError("selected index outside the population")

    def to_dict(self) -> dict:
        return {
            "log_densities": [float(x) for x in self.log_densities],
            "selected_index": int(self.selected_index),
            "method": self.method.value,
            "scored_step": int(self.scored_step),
            "bandwidths": self.bandwidths.to_dict(),
        }


def select(pop: Population, method: Method | str = Method.KDPE,
           step: int | None = None, h: Bandwidths = DEFAULT_BANDWIDTHS,
           seed: int = 0, include_normalizer: bool = True) -> DensityReport:
    """Score a population and pick one trajectory.

    kdpe takes the argmax of the per-step log-densities, kdpe_ood the argmin,
    tr_kdpe the argmax of whole-trajectory log-densities (the step argument
    is ignored and reported as -1), and uniform draws the index from a PCG64
    generator seeded with ``seed`` while still reporting the densities. Ties
    resolve to the lowest index.
    """
    if isinstance(method, str):
        method = Method.parse(method)
    if method is Method.TR_KDPE:
        scores = tr_score_population(pop, h, include_normalizer)
        scored_step = -1
    else:
        scored_step = _resolve_step(pop, step)
        scores = score_population(pop, scored_step, h, include_normalizer)

    if method is Method.KDPE_OOD:
        selected = int(np.argmin(scores))
    elif method is Method.UNIFORM:
        rng = np.random.Generator(np.random.PCG64(seed))
        selected = int(rng.integers(pop.n))
    else:
        selected = int(np.argmax(scores))
    return DensityReport(log_densities=scores, selected_index=selected,
                         method=method, scored_step=scored_step, bandwidths=h)


def select_tr(pop: Population, h: Bandwidths = DEFAULT_BANDWIDTHS) -> DensityReport:
    """Whole-trajectory selection: argmax of tr_kde_log_density, lowest-index ties."""
    return select(pop, Method.TR_KDPE, h=h)
