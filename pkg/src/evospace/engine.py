"""Mutator loop: tolerance-gated selection over a signed step neighborhood.

Each step draws a fresh condition sample, scores the current organism and all
2 dF single-step mutants on it, and splits the mutants into a beneficial set
(gain at least tol, inclusive) and a neutral set (absolute gain strictly
below tol).  Offspring are drawn uniformly from the beneficial set when it is
nonempty, else from the neutral set, else the run either halts (strict
policy) or picks uniformly from the whole neighborhood (forced policy).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import ConfigError, ModelError
from .model import (BregmanGenerator, ConditionSampler, GenePanel, MutationSet,
                    Organism, Sample, TraceStep, empirical_performance, rng_for)

FAILURE_POLICIES = ("strict", "forced_uniform")


@dataclass
class Mutant:
    index: int       # mutation column
    polarity: int    # +1 or -1
    coords: np.ndarray


def neighborhood(coords, mutations: MutationSet, alpha: float) -> List[Mutant]:
    """All 2 dF single-step mutants of the given coordinates.

    The organism itself is not a member.  Order is fixed: mutation 0 with
    polarity +1, then -1, then mutation 1, and so on; selection code relies
    on this layout.
    """
    if alpha <= 0:
        raise ConfigError("alpha must be positive")
    c = np.asarray(coords, dtype=float)
    out = []
    for i in range(mutations.dF):
        step = alpha * mutations.column(i)
        out.append(Mutant(i, +1, c + step))
        out.append(Mutant(i, -1, c - step))
    return out


def _signed_steps(mutations: MutationSet, alpha: float) -> np.ndarray:
    """(2 dF, dG) matrix of signed steps in neighborhood order."""
    steps = np.empty((2 * mutations.dF, mutations.dG))
    steps[0::2] = alpha * mutations.vectors.T
    steps[1::2] = -alpha * mutations.vectors.T
    return steps


def classify_mutants(perf_current: float, mutant_perfs, tol: float) -> tuple:
    """Positional indices of the beneficial and neutral mutants.

    Beneficial: perf gain >= tol (inclusive).  Neutral: |gain| < tol
    (strict).  A gain of exactly -tol lands in neither class.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    diffs = np.asarray(mutant_perfs, dtype=float) - perf_current
    bene = np.nonzero(diffs >= tol)[0]
    neut = np.nonzero(np.abs(diffs) < tol)[0]
    return bene, neut


def classify_sampled(coords, mutants: List[Mutant], sample: Sample, tol: float,
                     perf: Callable) -> tuple:
    """Spec-shaped wrapper: classify using a perf(coords, sample) closure."""
    base = perf(np.asarray(coords, dtype=float), sample)
    perfs = [perf(m.coords, sample) for m in mutants]
    return classify_mutants(base, perfs, tol)


# ---------------------------------------------------------------------------
# performance models


class PerformanceModel:
    """Per-step scoring interface consumed by the mutator loop."""

    def draw(self, step: int, m: int):
        raise NotImplementedError

    def perf(self, stats, coords) -> float:
        raise NotImplementedError

    def perf_batch(self, stats, coords_matrix) -> np.ndarray:
        return np.array([self.perf(stats, c) for c in coords_matrix])

    def true_perf(self, coords, step: int) -> Optional[float]:
        return None


class QuadraticPerfModel(PerformanceModel):
    """Model whose empirical performance is an exact quadratic in the genome.

    ``stats_fn(sample, step)`` maps a condition sample to a triple
    (quad, cross, const) with performance -(c^T quad c - 2 c . cross + const);
    ``true_stats`` (or ``true_stats_fn(step)``) provides the distribution
    counterpart for oracle scoring.
    """

    def __init__(self, sampler: ConditionSampler, stats_fn: Callable,
                 true_stats=None, true_stats_fn: Callable = None):
        self.sampler = sampler
        self.stats_fn = stats_fn
        self.true_stats = true_stats
        self.true_stats_fn = true_stats_fn

    def draw(self, step: int, m: int):
        return self.stats_fn(self.sampler.draw(step, m), step)

    @staticmethod
    def _eval(stats, C: np.ndarray) -> np.ndarray:
        quad, cross, const = stats
        q = np.einsum("ij,jk,ik->i", C, quad, C)
        return -(q - 2.0 * (C @ cross) + const)

    def perf(self, stats, coords) -> float:
        return float(self._eval(stats, np.asarray(coords, float)[None, :])[0])

    def perf_batch(self, stats, coords_matrix) -> np.ndarray:
        return self._eval(stats, np.asarray(coords_matrix, dtype=float))

    def true_perf(self, coords, step: int) -> Optional[float]:
        stats = self.true_stats_fn(step) if self.true_stats_fn else self.true_stats
        if stats is None:
            return None
        return float(self._eval(stats, np.asarray(coords, float)[None, :])[0])


def quadratic_stats_for(panel: GenePanel, gen: BregmanGenerator,
                        target_fn: Callable) -> Callable:
    """stats_fn for a quadratic generator and per-condition target outputs.

    ``target_fn(points) -> (n, d)`` supplies the target outputs for a batch
    of conditions.  The returned closure reduces a sample to the quadratic
    moments of the empirical performance.
    """
    if not gen.is_quadratic:
        raise ConfigError("quadratic stats need a quadratic generator")
    M = gen.quadratic_matrix(panel.d)

    def stats_fn(sample: Sample, step: int):
        pts, w = sample.points, sample.weights
        t = np.asarray(target_fn(pts), dtype=float)
        if t.ndim == 1:
            t = t.reshape(-1, 1)
        quad = panel.second_moment(pts, M=M, weights=w)
        cross = panel.cross_moment(pts, t, M=M, weights=w)
        const = float(w @ np.einsum("ij,jk,ik->i", t, M, t))
        return (quad, cross, const)

    return stats_fn


class GeneralPerfModel(PerformanceModel):
    """Fallback model scoring via the full per-condition divergence sum."""

    def __init__(self, sampler: ConditionSampler, panel: GenePanel,
                 gen: BregmanGenerator, target_fn: Callable,
                 true_perf_fn: Callable = None):
        self.sampler = sampler
        self.panel = panel
        self.gen = gen
        self.target_fn = target_fn
        self.true_perf_fn = true_perf_fn

    def draw(self, step: int, m: int):
        sample = self.sampler.draw(step, m)
        return (sample, np.asarray(self.target_fn(sample.points), dtype=float))

    def perf(self, stats, coords) -> float:
        sample, targets = stats
        return empirical_performance(coords, targets, self.panel, sample, self.gen)

    def true_perf(self, coords, step: int) -> Optional[float]:
        if self.true_perf_fn is None:
            return None
        return float(self.true_perf_fn(coords, step))


# ---------------------------------------------------------------------------
# the loop


@dataclass
class EvolutionConfig:
    mutations: MutationSet
    alpha: float
    tol: float
    m: int
    t_steps: int
    seed: int = 0
    failure_policy: str = "strict"
    epsilon: Optional[float] = None       # for in-target trace flags
    renewal_period: Optional[int] = None  # draw a new mutation set every k steps
    renewal_fn: Optional[Callable] = None  # (rng, step) -> MutationSet
    f0: Optional[np.ndarray] = None
    record_path: bool = False

    def __post_init__(self):
        if self.failure_policy not in FAILURE_POLICIES:
            raise ConfigError(f"failure policy must be one of {FAILURE_POLICIES}")
        if self.alpha <= 0 or self.tol <= 0:
            raise ConfigError("alpha and tol must be positive")
        if self.m < 1 or self.t_steps < 1:
            raise ConfigError("m and t_steps must be >= 1")
        if (self.renewal_period is None) != (self.renewal_fn is None):
            raise ConfigError("renewal needs both a period and a callback")


@dataclass
class EvolutionResult:
    organism: Organism
    trace: List[TraceStep]
    failed: bool
    failure_step: Optional[int]
    forced_steps: int
    bene_steps: int
    neut_steps: int
    initial_true_perf: Optional[float]
    final_true_perf: Optional[float]
    path: Optional[np.ndarray] = None


def mutator_step(model: PerformanceModel, organism: Organism, config: EvolutionConfig,
                 step: int, selection_rng: np.random.Generator,
                 steps_matrix: np.ndarray) -> TraceStep:
    """One selection round; mutates ``organism`` in place unless it fails."""
    hook = getattr(model, "pre_step", None)
    if hook is not None:
        hook(step, organism.coords)
    stats = model.draw(step, config.m)
    perf_f = model.perf(stats, organism.coords)
    cand = organism.coords[None, :] + steps_matrix
    perfs = model.perf_batch(stats, cand)
    bene, neut = classify_mutants(perf_f, perfs, config.tol)

    forced = False
    if bene.size:
        j = int(bene[selection_rng.integers(0, bene.size)])
    elif neut.size:
        j = int(neut[selection_rng.integers(0, neut.size)])
    elif config.failure_policy == "forced_uniform":
        j = int(selection_rng.integers(0, cand.shape[0]))
        forced = True
    else:
        return TraceStep(step=step, perf_before=perf_f, perf_after=perf_f,
                         bene_size=0, neut_size=0, chosen_index=None,
                         chosen_polarity=None, forced=False, failed=True)

    organism.apply(j // 2, +1 if j % 2 == 0 else -1)
    rec = TraceStep(step=step, perf_before=perf_f, perf_after=float(perfs[j]),
                    bene_size=int(bene.size), neut_size=int(neut.size),
                    chosen_index=j // 2, chosen_polarity=+1 if j % 2 == 0 else -1,
                    forced=forced, failed=False)
    tp = model.true_perf(organism.coords, step + 1)
    if tp is not None:
        rec.perf_true = float(tp)
        if config.epsilon is not None:
            rec.in_target_set = bool(tp >= -config.epsilon)
    return rec


def run_evolution(model: PerformanceModel, config: EvolutionConfig) -> EvolutionResult:
    """Run the full mutator loop for the configured number of steps.

    Randomness is split into independent per-purpose streams derived from the
    run seed: mutant selection and basis renewal here, condition sampling
    inside the model's sampler (conventionally seeded with the same run seed
    by the caller).
    """
    selection_rng = rng_for((config.seed, "select"))
    renewal_rng = rng_for((config.seed, "renew"))

    mutations = config.mutations
    f0 = np.zeros(mutations.dG) if config.f0 is None else np.asarray(config.f0, float)
    organism = Organism(basis=mutations, base=f0, alpha=config.alpha)
    steps_matrix = _signed_steps(mutations, config.alpha)

    initial_tp = model.true_perf(organism.coords, 0)
    trace: List[TraceStep] = []
    path = [organism.coords.copy()] if config.record_path else None
    failed, failure_step = False, None
    forced_steps = bene_steps = neut_steps = 0

    for t in range(config.t_steps):
        if config.renewal_period and t % config.renewal_period == 0:
            new_basis = config.renewal_fn(renewal_rng, t)
            if not isinstance(new_basis, MutationSet):
                raise ModelError("renewal callback must return a MutationSet")
            organism.rebase(new_basis)
            steps_matrix = _signed_steps(new_basis, config.alpha)
        rec = mutator_step(model, organism, config, t, selection_rng, steps_matrix)
        trace.append(rec)
        if rec.failed:
            failed, failure_step = True, t
            break
        if rec.forced:
            forced_steps += 1
        elif rec.bene_size > 0:
            bene_steps += 1
        else:
            neut_steps += 1
        if path is not None:
            path.append(organism.coords.copy())

    final_tp = model.true_perf(organism.coords, len(trace))
    return EvolutionResult(
        organism=organism, trace=trace, failed=failed, failure_step=failure_step,
        forced_steps=forced_steps, bene_steps=bene_steps, neut_steps=neut_steps,
        initial_true_perf=None if initial_tp is None else float(initial_tp),
        final_true_perf=None if final_tp is None else float(final_tp),
        path=None if path is None else np.asarray(path))
