"""Iterative weighted shrinkage-thresholding.

All strategies share one update loop and differ only in how the per-coordinate
penalty weights are computed from the current iterate:

========  ===============================================  ============
strategy  weight                                           sums to one
========  ===============================================  ============
ista      1                                                no
eriwsta   softmax(-|x| / gamma)                            yes
irl1      1 / (|x| + delta)                                no
wlp       1 / (|x| + delta) ** (1 - p)                     no
nw4       1 / (1 + (|x| + delta) ** (p + 1))               no
========  ===============================================  ============

The x-update minimizes the quadratic majorizer of the data term with step
``1 / L`` (``L >= lambda_max(A.T A)``), which reduces to soft-thresholding with
per-coordinate thresholds ``beta * w / L``.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from dataclasses import dataclass, field, fields
from typing import NamedTuple, Optional

import numpy as np

from sik.errors import DivergenceError
from sik.operators import LinearOperator, lipschitz_constant


class Strategy(str, enum.Enum):
    ISTA = "ista"
    ERIWSTA = "eriwsta"
    IRL1 = "irl1"
    WLP = "wlp"
    NW4 = "nw4"

    def __str__(self):
        return self.value

    @property
    def uses_gamma(self) -> bool:
        return self is Strategy.ERIWSTA

    @property
    def uses_delta(self) -> bool:
        return self in (Strategy.IRL1, Strategy.WLP, Strategy.NW4)

    @property
    def uses_p(self) -> bool:
        return self in (Strategy.WLP, Strategy.NW4)


def soft_threshold(v, thresholds) -> np.ndarray:
    """Elementwise ``sign(v) * max(|v| - thresholds, 0)``.

    ``thresholds`` may be a scalar or an array broadcastable to ``v``; it must
    be nonnegative.
    """
    v = np.asarray(v, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(thresholds < 0) or np.any(np.isnan(thresholds)):
        raise ValueError("thresholds must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - thresholds, 0.0)


def entropy_weights(x, gamma: float) -> np.ndarray:
    """Simplex weights minimizing ``sum(w * |x|) + gamma * sum(w * log(w))``.

    The minimizer is the softmax of ``-|x| / gamma``. It is evaluated after
    shifting by ``min |x|`` so the largest exponent is exactly zero, which keeps
    the normalizer in ``[1, n]`` for any magnitudes.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    a = np.abs(np.asarray(x, dtype=float))
    # Overflow to inf in the exponent argument is fine: exp(-inf) is 0.
    with np.errstate(over="ignore"):
        e = np.exp(-(a - a.min()) / gamma)
    return e / e.sum()


def baseline_weights(x, strategy, delta: float = 1e-3, p: float = 0.5) -> np.ndarray:
    """Unnormalized reweighting rules of the ISTA/IRL1/WLP/NW4 baselines."""
    strategy = Strategy(strategy)
    a = np.abs(np.asarray(x, dtype=float))
    if strategy is Strategy.ISTA:
        return np.ones_like(a)
    if strategy is Strategy.ERIWSTA:
        raise ValueError("eriwsta weights come from entropy_weights")
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if strategy is Strategy.IRL1:
        return 1.0 / (a + delta)
    if not 0 < p < 1:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    if strategy is Strategy.WLP:
        return (a + delta) ** (p - 1.0)
    return 1.0 / (1.0 + (a + delta) ** (p + 1.0))


def _xlogx(w: np.ndarray) -> float:
    pos = w > 0
    return float(np.sum(w[pos] * np.log(w[pos])))


class Cost(NamedTuple):
    total: float
    fidelity: float
    penalty: float


@dataclass(frozen=True)
class Problem:
    """Least-squares data term ``0.5 * ||A x - b||^2``.

    ``synthesis`` optionally maps coefficients to the image domain, where
    reconstruction error against a ground truth is measured.
    """

    A: LinearOperator
    b: np.ndarray
    synthesis: Optional[LinearOperator] = None

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        if b.ndim != 1 or b.shape[0] != self.A.out_dim:
            raise ValueError(
                f"b has shape {b.shape}, operator output length is {self.A.out_dim}"
            )
        object.__setattr__(self, "b", b)
        if self.synthesis is not None and self.synthesis.in_dim != self.A.in_dim:
            raise ValueError("synthesis input length must match the operator input length")

    @property
    def n(self) -> int:
        return self.A.in_dim

    def residual(self, x) -> np.ndarray:
        return self.A.forward(x) - self.b

    def fidelity(self, x) -> float:
        r = self.residual(x)
        return 0.5 * float(r @ r)

    def gradient(self, x) -> np.ndarray:
        return self.A.adjoint(self.residual(x))


def evaluate_cost(x, w, problem: Problem, beta: float, gamma: float = 0.0) -> Cost:
    """Objective value ``F(x) + beta * (sum(w |x|) + gamma * sum(w log w))``.

    Pass ``gamma=0`` for the plain weighted-L1 objective. ``0 log 0`` is 0.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.shape != (problem.n,) or w.shape != x.shape:
        raise ValueError(
            f"x {x.shape} and w {w.shape} must both have length {problem.n}"
        )
    fidelity = problem.fidelity(x)
    penalty = float(w @ np.abs(x))
    if gamma:
        penalty += gamma * _xlogx(w)
    return Cost(fidelity + beta * penalty, fidelity, penalty)


def iwsta_step(x, w, problem: Problem, L: float, beta: float) -> np.ndarray:
    """One majorize-minimize step: gradient step ``1/L`` then soft-threshold."""
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")
    x = np.asarray(x, dtype=float)
    z = x - problem.gradient(x) / L
    return soft_threshold(z, beta * np.asarray(w, dtype=float) / L)


@dataclass
class SolverConfig:
    """Hyperparameters for :func:`solve`.

    ``gamma`` is used by eriwsta only, ``delta`` by irl1/wlp/nw4 and ``p`` by
    wlp/nw4. ``rel_change_tol=0`` runs all ``max_iters`` iterations.
    ``step_safety`` multiplies the power-iteration estimate of
    ``lambda_max(A.T A)``.
    """

    strategy: Strategy = Strategy.ERIWSTA
    beta: float = 1.0
    gamma: float = 1e-2
    delta: float = 1e-3
    p: float = 0.5
    max_iters: int = 100
    rel_change_tol: float = 0.0
    step_safety: float = 1.01
    seed: int = 0
    x0: str = "zero"

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        self.validate()

    def validate(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.strategy.uses_gamma and not self.gamma > 0:
            raise ValueError(f"gamma must be positive for eriwsta, got {self.gamma}")
        if self.strategy.uses_delta and not self.delta > 0:
            raise ValueError(f"delta must be positive for {self.strategy}, got {self.delta}")
        if self.strategy.uses_p and not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1) for {self.strategy}, got {self.p}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.rel_change_tol < 0:
            raise ValueError("rel_change_tol must be >= 0")
        if self.step_safety < 1:
            raise ValueError(f"step_safety must be >= 1, got {self.step_safety}")
        if self.x0 not in ("zero", "adjoint"):
            raise ValueError(f"x0 must be 'zero' or 'adjoint', got {self.x0!r}")

    def weights(self, x) -> np.ndarray:
        if self.strategy is Strategy.ERIWSTA:
            return entropy_weights(x, self.gamma)
        return baseline_weights(x, self.strategy, self.delta, self.p)

    def cost(self, x, w, problem: Problem) -> Cost:
        gamma = self.gamma if self.strategy.uses_gamma else 0.0
        return evaluate_cost(x, w, problem, self.beta, gamma)

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["strategy"] = self.strategy.value
        return d


class TraceRecord(NamedTuple):
    iter: int
    cost: float
    fidelity: float
    mae: Optional[float]
    wall_ms: float


TRACE_HEADER = ("iter", "cost", "fidelity", "mae", "wall_ms")


@dataclass
class IterationTrace:
    """Per-iteration log of a solve; ``iter`` counts completed updates."""

    records: list = field(default_factory=list)

    def append(self, record: TraceRecord):
        if self.records and record.iter <= self.records[-1].iter:
            raise ValueError("trace records must have increasing iteration numbers")
        if not math.isfinite(record.cost):
            raise ValueError(f"non-finite cost at iteration {record.iter}")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def maes(self) -> np.ndarray:
        return np.array([np.nan if r.mae is None else r.mae for r in self.records])

    def to_csv(self, timing: bool = True) -> str:
        """CSV text with header ``iter,cost,fidelity,mae,wall_ms``.

        ``timing=False`` leaves ``wall_ms`` empty so the output depends only on
        the numerics.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for r in self.records:
            writer.writerow(
                [
                    r.iter,
                    repr(r.cost),
                    repr(r.fidelity),
                    "" if r.mae is None else repr(r.mae),
                    repr(r.wall_ms) if timing else "",
                ]
            )
        return buf.getvalue()


@dataclass
class SolveResult:
    x: np.ndarray
    trace: IterationTrace
    L: float
    iterations: int


def _mae(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.abs(a - b)))


def solve(
    problem: Problem,
    config: SolverConfig,
    x0=None,
    truth=None,
    L: Optional[float] = None,
    trace_stride: int = 1,
) -> SolveResult:
    """Alternate weight updates and shrinkage steps for ``config.max_iters``.

    Parameters
    ----------
    problem : Problem
        Operator, data and (for image-domain error) a synthesis operator.
    config : SolverConfig
    x0 : array_like, optional
        Start point; defaults to zeros or ``A.T b`` per ``config.x0``.
    truth : array_like, optional
        Ground-truth image (any shape with ``problem.n`` entries). When given,
        each trace record carries the mean absolute error of
        ``synthesis(x)`` against it.
    L : float, optional
        Step bound. Estimated by power iteration (seeded with ``config.seed``)
        and padded by ``config.step_safety`` when omitted.
    trace_stride : int
        Record every ``trace_stride``-th iteration; the last is always kept.

    Returns
    -------
    SolveResult

    Raises
    ------
    DivergenceError
        If an iterate or cost stops being finite. Carries the partial trace.
    """
    config.validate()
    if trace_stride < 1:
        raise ValueError("trace_stride must be >= 1")
    if x0 is None:
        x = np.zeros(problem.n) if config.x0 == "zero" else problem.A.adjoint(problem.b)
    else:
        x = np.array(x0, dtype=float)
        if x.shape != (problem.n,):
            raise ValueError(f"x0 must have length {problem.n}, got shape {x.shape}")
    if L is None:
        L = lipschitz_constant(problem.A, config.step_safety, seed=config.seed)
    if not L > 0:
        raise ValueError(f"L must be positive, got {L}")

    truth_flat = None
    if truth is not None:
        truth_flat = np.asarray(truth, dtype=float).ravel()
        synth = problem.synthesis
        out_len = synth.out_dim if synth is not None else problem.n
        if truth_flat.shape[0] != out_len:
            raise ValueError("truth size does not match the image domain")

    with np.errstate(over="ignore", invalid="ignore"):
        return _iterate(problem, config, x, L, truth_flat, trace_stride)


def _iterate(problem, config, x, L, truth_flat, trace_stride) -> SolveResult:
    def image_of(v):
        return problem.synthesis.forward(v) if problem.synthesis is not None else v

    trace = IterationTrace()
    w = config.weights(x)
    start = time.perf_counter()
    done = 0
    for k in range(1, config.max_iters + 1):
        x_new = iwsta_step(x, w, problem, L, config.beta)
        if not np.all(np.isfinite(x_new)):
            raise DivergenceError(f"non-finite iterate at iteration {k}", trace, x)
        w = config.weights(x_new)
        change = np.linalg.norm(x_new - x) / max(np.linalg.norm(x), np.finfo(float).eps)
        x = x_new
        done = k
        last = k == config.max_iters
        stop = config.rel_change_tol > 0 and change < config.rel_change_tol
        if k % trace_stride == 0 or last or stop:
            cost = config.cost(x, w, problem)
            if not math.isfinite(cost.total):
                raise DivergenceError(f"non-finite cost at iteration {k}", trace, x)
            mae = _mae(image_of(x), truth_flat) if truth_flat is not None else None
            wall_ms = (time.perf_counter() - start) * 1e3
            trace.append(TraceRecord(k, cost.total, cost.fidelity, mae, wall_ms))
        if stop:
            break
    return SolveResult(x, trace, float(L), done)
