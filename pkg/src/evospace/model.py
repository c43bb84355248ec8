"""Core model: divergence generators, gene panels, condition samplers, organisms.

An organism is a vector in a finite-dimensional inner-product space H spanned
by a fixed panel of gene functions g_1..g_dG.  On a condition x the panel
evaluates to a d x dG matrix G_x whose columns are the gene outputs, and the
organism with gene coordinates ``f`` expresses the output ``G_x @ f``.
Performance against target outputs is the negated mean Bregman divergence
between expressed and target outputs.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigError, ModelError

# Sample sizes above this multiple of the dataset size are drawn as
# multinomial counts instead of explicit index lists.  The empirical mean of
# any per-condition statistic is identical in distribution either way; the
# counts form just avoids materialising huge index arrays.
_WEIGHTED_DRAW_FACTOR = 4


def _as_vector(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise ModelError(f"{name} must be a 1-d vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelError(f"{name} has non-finite entries")
    return a


def _as_matrix(m, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ModelError(f"{name} must be a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelError(f"{name} has non-finite entries")
    return a


def _seed_words(entry) -> list:
    # SeedSequence entropy takes integers only; strings are hashed with a
    # stable digest (builtin hash() is salted per process) and sequences are
    # flattened.
    if isinstance(entry, (int, np.integer)):
        return [int(entry) & 0xFFFFFFFFFFFFFFFF]
    if isinstance(entry, str):
        digest = hashlib.sha256(entry.encode()).digest()
        return [int.from_bytes(digest[:8], "little")]
    if isinstance(entry, (tuple, list)):
        out = []
        for e in entry:
            out.extend(_seed_words(e))
        return out
    raise ConfigError(f"seed components must be ints, strings, or sequences, "
                      f"got {type(entry).__name__}")


def rng_for(seed, index: int = 0) -> np.random.Generator:
    """Deterministic generator for (seed, draw index) pairs.

    ``seed`` may be an int, a string label, or a nested sequence of them;
    the derived streams are independent across distinct (seed, index) pairs.
    """
    words = _seed_words(seed) + _seed_words(index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


# ---------------------------------------------------------------------------
# divergence generators


class BregmanGenerator:
    """Divergence generator D(u || v) = phi(u) - phi(v) - <grad phi(v), u - v>.

    Three kinds are supported:

    * ``squared_euclidean``: phi(u) = <u, u>, so D(u || v) = ||u - v||^2 and
      the Hessian of phi is the constant 2 I.
    * ``mahalanobis``: phi(u) = <u, M u> for symmetric positive definite M,
      so D(u || v) = <u - v, M (u - v)> with constant Hessian 2 M.
    * ``custom``: caller supplies value and gradient callbacks together with
      declared Hessian eigenvalue bounds (h_min, h_max); the declaration is
      spot-checked by finite differences when check points are given.
    """

    def __init__(self, kind: str, *, matrix=None, value=None, gradient=None,
                 h_min: float = None, h_max: float = None):
        self.kind = kind
        self.matrix = None
        self._value = value
        self._gradient = gradient
        if kind == "squared_euclidean":
            self.h_min, self.h_max = 2.0, 2.0
        elif kind == "mahalanobis":
            m = _as_matrix(matrix, "mahalanobis matrix")
            if m.shape[0] != m.shape[1] or not np.allclose(m, m.T, atol=1e-12):
                raise ModelError("mahalanobis matrix must be symmetric square")
            eig = np.linalg.eigvalsh(m)
            if eig[0] <= 0:
                raise ModelError("mahalanobis matrix must be positive definite")
            self.matrix = 0.5 * (m + m.T)
            self.h_min, self.h_max = 2.0 * eig[0], 2.0 * eig[-1]
        elif kind == "custom":
            if value is None or gradient is None:
                raise ConfigError("custom generator needs value and gradient callbacks")
            if h_min is None or h_max is None or not (0 < h_min <= h_max):
                raise ConfigError("custom generator needs bounds 0 < h_min <= h_max")
            self.h_min, self.h_max = float(h_min), float(h_max)
        else:
            raise ConfigError(f"unknown generator kind {kind!r}")

    # constructors ---------------------------------------------------------

    @classmethod
    def squared_euclidean(cls) -> "BregmanGenerator":
        return cls("squared_euclidean")

    @classmethod
    def mahalanobis(cls, matrix) -> "BregmanGenerator":
        return cls("mahalanobis", matrix=matrix)

    @classmethod
    def custom(cls, value: Callable, gradient: Callable, h_min: float,
               h_max: float, check_points: Optional[Sequence] = None,
               rel_margin: float = 0.01) -> "BregmanGenerator":
        gen = cls("custom", value=value, gradient=gradient, h_min=h_min, h_max=h_max)
        if check_points is not None:
            gen._check_hessian_bounds(check_points, rel_margin)
        return gen

    # properties -----------------------------------------------------------

    @property
    def is_quadratic(self) -> bool:
        return self.kind in ("squared_euclidean", "mahalanobis")

    def quadratic_matrix(self, d: int) -> np.ndarray:
        """M such that D(u || v) = <u - v, M (u - v)>; quadratic kinds only."""
        if self.kind == "squared_euclidean":
            return np.eye(d)
        if self.kind == "mahalanobis":
            if self.matrix.shape[0] != d:
                raise ModelError("mahalanobis matrix dimension mismatch")
            return self.matrix
        raise ModelError("custom generators have no constant divergence matrix")

    # evaluation -----------------------------------------------------------

    def value(self, u) -> float:
        u = np.asarray(u, dtype=float)
        if self.kind == "squared_euclidean":
            return float(u @ u)
        if self.kind == "mahalanobis":
            return float(u @ self.matrix @ u)
        return float(self._value(u))

    def gradient(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "squared_euclidean":
            return 2.0 * u
        if self.kind == "mahalanobis":
            return 2.0 * (self.matrix @ u)
        return np.asarray(self._gradient(u), dtype=float)

    def divergence(self, u, v) -> float:
        u = _as_vector(np.atleast_1d(u), "u")
        v = _as_vector(np.atleast_1d(v), "v")
        if u.shape != v.shape:
            raise ModelError("divergence arguments must share a shape")
        w = u - v
        if self.kind == "squared_euclidean":
            return float(w @ w)
        if self.kind == "mahalanobis":
            return float(w @ self.matrix @ w)
        out = self.value(u) - self.value(v) - float(self.gradient(v) @ w)
        if not math.isfinite(out):
            raise ModelError("custom divergence evaluated to a non-finite value")
        return out

    def divergence_rows(self, U: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Row-wise divergences for (n, d) stacks of outputs."""
        W = U - V
        if self.kind == "squared_euclidean":
            return np.einsum("ij,ij->i", W, W)
        if self.kind == "mahalanobis":
            return np.einsum("ij,jk,ik->i", W, self.matrix, W)
        return np.array([self.divergence(u, v) for u, v in zip(U, V)])

    # declared-bound validation ---------------------------------------------

    def _check_hessian_bounds(self, points, rel_margin: float) -> None:
        # Rayleigh quotients of the Hessian via second central differences of
        # phi along random directions; declared bounds must hold within the
        # relative margin at every check point.
        rng = rng_for("hessian-check")
        eps = 1e-4
        lo = self.h_min * (1.0 - rel_margin)
        hi = self.h_max * (1.0 + rel_margin)
        for p in points:
            p = _as_vector(np.atleast_1d(p), "check point")
            for _ in range(4):
                direc = rng.standard_normal(p.shape[0])
                direc /= np.linalg.norm(direc)
                second = (self.value(p + eps * direc) - 2.0 * self.value(p)
                          + self.value(p - eps * direc)) / (eps * eps)
                if not (lo <= second <= hi):
                    raise ModelError(
                        "declared Hessian bounds (%g, %g) violated at a check "
                        "point: observed curvature %g" % (self.h_min, self.h_max, second))
            # strict convexity spot check
            q = p + eps * np.ones_like(p)
            if self.divergence(q, p) <= 0:
                raise ModelError("custom generator is not strictly convex at a check point")


def bregman_divergence(u, v, gen: BregmanGenerator) -> float:
    """D(u || v) for the given generator.  Nonnegative for valid generators."""
    return gen.divergence(u, v)


# ---------------------------------------------------------------------------
# gene panels


class GenePanel:
    """Gene panel mapping a condition x to the d x dG output matrix G_x."""

    d: int
    dG: int

    def evaluate(self, x) -> np.ndarray:
        raise NotImplementedError

    def express(self, X: np.ndarray, coords: np.ndarray) -> np.ndarray:
        """Organism outputs on a stack of conditions: (n, d) array."""
        return np.stack([self.evaluate(x) @ coords for x in X])

    def second_moment(self, X: np.ndarray, M: Optional[np.ndarray] = None,
                      weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Weighted mean of G_x^T M G_x over the rows of X (M = I if omitted)."""
        n = X.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        acc = np.zeros((self.dG, self.dG))
        for x, wi in zip(X, w):
            if wi == 0.0:
                continue
            G = self.evaluate(x)
            GM = G if M is None else M @ G
            acc += wi * (G.T @ GM)
        return acc

    def cross_moment(self, X: np.ndarray, targets: np.ndarray,
                     M: Optional[np.ndarray] = None,
                     weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Weighted mean of G_x^T M t(x): the dG-vector pairing genes with targets."""
        n = X.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        acc = np.zeros(self.dG)
        for x, t, wi in zip(X, targets, w):
            if wi == 0.0:
                continue
            G = self.evaluate(x)
            acc += wi * (G.T @ (t if M is None else M @ t))
        return acc


class IdentityPanel(GenePanel):
    """dG = d genes; G_x = scale * I for every condition."""

    def __init__(self, d: int, scale: float = 1.0):
        if d < 1:
            raise ConfigError("identity panel needs d >= 1")
        self.d = self.dG = int(d)
        self.scale = float(scale)

    def evaluate(self, x) -> np.ndarray:
        return self.scale * np.eye(self.d)

    def express(self, X, coords):
        out = np.broadcast_to(self.scale * np.asarray(coords, dtype=float),
                              (np.asarray(X).shape[0], self.d))
        return np.array(out)

    def second_moment(self, X, M=None, weights=None):
        base = np.eye(self.d) if M is None else np.asarray(M, dtype=float)
        return (self.scale ** 2) * base

    def cross_moment(self, X, targets, M=None, weights=None):
        n = np.asarray(X).shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        tbar = w @ np.asarray(targets, dtype=float)
        return self.scale * (tbar if M is None else M @ tbar)


class DataColumnPanel(GenePanel):
    """Scalar outputs (d = 1); gene j reads one coordinate of the condition.

    G_x is a 1 x dG row of condition entries, so an organism is a linear
    functional of the condition.  ``columns`` restricts which entries the
    genes read (conditions may carry extra columns, e.g. labels).
    """

    def __init__(self, dG: int, columns=None):
        if dG < 1:
            raise ConfigError("data-column panel needs dG >= 1")
        self.d = 1
        self.dG = int(dG)
        if columns is not None and len(columns) != dG:
            raise ConfigError("columns selection must have dG entries")
        self.columns = None if columns is None else list(columns)

    def _take(self, X: np.ndarray) -> np.ndarray:
        return X if self.columns is None else X[..., self.columns]

    def evaluate(self, x) -> np.ndarray:
        x = self._take(np.asarray(x, dtype=float))
        if x.shape != (self.dG,):
            raise ModelError(f"condition shape {x.shape} does not match dG={self.dG}")
        return x.reshape(1, self.dG)

    def express(self, X, coords):
        X = self._take(np.asarray(X, dtype=float))
        return (X @ np.asarray(coords, dtype=float)).reshape(-1, 1)

    def second_moment(self, X, M=None, weights=None):
        X = self._take(np.asarray(X, dtype=float))
        n = X.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        scale = 1.0 if M is None else float(np.asarray(M).reshape(()))
        return scale * (X.T * w) @ X

    def cross_moment(self, X, targets, M=None, weights=None):
        X = self._take(np.asarray(X, dtype=float))
        t = np.asarray(targets, dtype=float).reshape(-1)
        n = X.shape[0]
        w = np.full(n, 1.0 / n) if weights is None else weights
        scale = 1.0 if M is None else float(np.asarray(M).reshape(()))
        return scale * (X.T @ (w * t))


class CallablePanel(GenePanel):
    """Panel defined by an arbitrary per-condition callback x -> (d, dG)."""

    def __init__(self, fn: Callable, d: int, dG: int):
        self.fn = fn
        self.d = int(d)
        self.dG = int(dG)

    def evaluate(self, x) -> np.ndarray:
        G = np.asarray(self.fn(x), dtype=float)
        if G.shape != (self.d, self.dG):
            raise ModelError(f"panel callback returned shape {G.shape}, "
                             f"expected {(self.d, self.dG)}")
        return G


# ---------------------------------------------------------------------------
# condition samplers


@dataclass
class Sample:
    """A drawn batch of conditions with relative weights summing to one.

    Plain draws carry one row per draw with uniform weights; large draws from
    an empirical sampler carry the dataset rows with multinomial weights.
    ``size`` is always the nominal number of draws.
    """

    points: np.ndarray
    weights: np.ndarray
    size: int

    def mean_point(self) -> np.ndarray:
        return self.weights @ self.points


class ConditionSampler:
    """Draws per-step condition batches, deterministically in (seed, index)."""

    def __init__(self, kind: str, *, data=None, fn=None, seed=0):
        if kind == "empirical":
            self.data = _as_matrix(data, "dataset")
            if self.data.shape[0] == 0:
                raise ModelError("empirical sampler needs a nonempty dataset")
            self.fn = None
        elif kind == "generator":
            if fn is None:
                raise ConfigError("generator sampler needs a callback rng, m -> (m, k)")
            self.fn = fn
            self.data = None
        else:
            raise ConfigError(f"unknown sampler kind {kind!r}")
        self.kind = kind
        self.seed = seed

    @classmethod
    def empirical(cls, data, seed=0) -> "ConditionSampler":
        return cls("empirical", data=data, seed=seed)

    @classmethod
    def from_callable(cls, fn, seed=0) -> "ConditionSampler":
        return cls("generator", fn=fn, seed=seed)

    def draw(self, index: int, m: int) -> Sample:
        """Sample m conditions i.i.d. (with replacement for empirical data)."""
        if m < 1:
            raise ConfigError("sample size must be >= 1")
        rng = rng_for(self.seed, index)
        if self.kind == "generator":
            pts = np.asarray(self.fn(rng, m), dtype=float)
            return Sample(pts, np.full(m, 1.0 / m), m)
        n = self.data.shape[0]
        if m > _WEIGHTED_DRAW_FACTOR * n:
            counts = rng.multinomial(m, np.full(n, 1.0 / n))
            return Sample(self.data, counts / float(m), m)
        idx = rng.integers(0, n, size=m)
        return Sample(self.data[idx], np.full(m, 1.0 / m), m)


# ---------------------------------------------------------------------------
# mutation sets and organisms


class MutationSet:
    """The available mutation vectors, columns of a dG x dF matrix.

    Each step perturbs the organism by +/- alpha times one column; offspring
    are drawn uniformly from whichever candidate class applies.
    """

    def __init__(self, vectors):
        B = _as_matrix(vectors, "mutation vectors")
        self.vectors = B
        self.dG, self.dF = B.shape
        norms = np.linalg.norm(B, axis=0)
        if np.any(norms == 0.0):
            raise ModelError("mutation vectors must be nonzero")
        self.norms = norms

    @classmethod
    def orthonormal(cls, dG: int) -> "MutationSet":
        return cls(np.eye(dG))

    def column(self, i: int) -> np.ndarray:
        return self.vectors[:, i]

    @property
    def max_norm(self) -> float:
        return float(self.norms.max())


@dataclass
class Organism:
    """Current genome: integer mutation counts over a base point.

    Gene coordinates are ``base + alpha * (B @ counts)``; the float coordinate
    cache is updated incrementally and can always be recomputed exactly from
    the integer grid.
    """

    basis: MutationSet
    base: np.ndarray
    alpha: float
    counts: np.ndarray = field(default=None)
    coords: np.ndarray = field(default=None)

    def __post_init__(self):
        self.base = _as_vector(self.base, "base coordinates")
        if self.base.shape[0] != self.basis.dG:
            raise ModelError("base coordinate dimension does not match the basis")
        if self.counts is None:
            self.counts = np.zeros(self.basis.dF, dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.coords is None:
            self.coords = self.recompute_coords()

    def recompute_coords(self) -> np.ndarray:
        return self.base + self.alpha * (self.basis.vectors @ self.counts.astype(float))

    def apply(self, index: int, polarity: int) -> None:
        """Commit one mutation step in place."""
        self.counts[index] += polarity
        self.coords = self.coords + (polarity * self.alpha) * self.basis.column(index)

    def rebase(self, basis: MutationSet) -> None:
        """Adopt a new mutation set, zeroing counts at the current position."""
        if basis.dG != self.basis.dG:
            raise ModelError("replacement basis has a different gene dimension")
        self.base = self.recompute_coords()
        self.basis = basis
        self.counts = np.zeros(basis.dF, dtype=np.int64)
        self.coords = self.base.copy()


# ---------------------------------------------------------------------------
# performance


def empirical_performance(coords, target_outputs, panel: GenePanel,
                          sample: Sample, gen: BregmanGenerator) -> float:
    """Negated weighted mean divergence between expressed and target outputs.

    ``target_outputs`` must align row-for-row with ``sample.points``.  The
    result is <= 0, with equality iff expression matches the target on every
    sampled condition.
    """
    coords = _as_vector(coords, "organism coordinates")
    t = np.asarray(target_outputs, dtype=float)
    if t.ndim == 1:
        t = t.reshape(-1, 1)
    if t.shape != (sample.points.shape[0], panel.d):
        raise ModelError(f"target outputs shape {t.shape} does not match "
                         f"{(sample.points.shape[0], panel.d)}")
    if not np.all(np.isfinite(t)):
        raise ModelError("target outputs have non-finite entries")
    outputs = panel.express(sample.points, coords)
    divs = gen.divergence_rows(outputs, t)
    return float(-(sample.weights @ divs))


def true_performance_quadratic(f_coords, t_coords, gamma,
                               gen: BregmanGenerator) -> tuple:
    """Distribution-level performance bounds for a known in-span target.

    For quadratic generators ``gamma`` must be the generator-metric second
    moment E[G_x^T M G_x] and the value -<delta, gamma delta> is exact (both
    bounds coincide).  For custom generators ``gamma`` is the plain panel
    second moment and the declared Hessian bounds sandwich the result.
    Returns (lower, upper).
    """
    f = _as_vector(f_coords, "f coordinates")
    t = _as_vector(t_coords, "t coordinates")
    g = _as_matrix(gamma, "gamma")
    if f.shape != t.shape or g.shape != (f.shape[0], f.shape[0]):
        raise ModelError("true_performance_quadratic shape mismatch")
    if not np.allclose(g, g.T, atol=1e-10):
        raise ModelError("gamma must be symmetric")
    eig = np.linalg.eigvalsh(0.5 * (g + g.T))
    if eig[0] <= 0:
        raise ModelError("gamma must be positive definite")
    delta = f - t
    if gen.is_quadratic:
        val = float(-(delta @ g @ delta))
        return (val, val)
    nsq = float(delta @ delta)
    lower = -0.5 * gen.h_max * eig[-1] * nsq
    upper = -0.5 * gen.h_min * eig[0] * nsq
    return (lower, upper)


# ---------------------------------------------------------------------------
# trace records


@dataclass
class TraceStep:
    """One evolution step, as recorded in run traces."""

    step: int
    perf_before: float
    perf_after: float
    bene_size: int
    neut_size: int
    chosen_index: Optional[int]
    chosen_polarity: Optional[int]
    forced: bool
    failed: bool
    perf_true: Optional[float] = None
    in_target_set: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "perf_before": self.perf_before,
            "perf_after": self.perf_after,
            "bene_size": self.bene_size,
            "neut_size": self.neut_size,
            "chosen_index": self.chosen_index,
            "chosen_polarity": self.chosen_polarity,
            "forced": self.forced,
            "failed": self.failed,
            "perf_true": self.perf_true,
            "in_target_set": self.in_target_set,
        }
