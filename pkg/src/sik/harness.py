"""Deblurring experiments: problem setup, metrics, sweeps and result files."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from sik.errors import DivergenceError
from sik.operators import (
    DEFAULT_SAFETY_MARGIN,
    LinearOperator,
    compose,
    lipschitz_constant,
    make_blur_operator,
    make_haar_operator,
)
from sik.simulation import DegradationSpec, degrade, shepp_logan
from sik.solvers import IterationTrace, Problem, SolverConfig, Strategy, solve

RESULTS_HEADER = ("strategy", "beta", "gamma", "delta", "final_mae", "diverged", "wall_ms")


def mae(restored, truth) -> float:
    """Mean absolute error over all pixels."""
    restored = np.asarray(restored, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if restored.shape != truth.shape:
        raise ValueError(f"shape mismatch: {restored.shape} vs {truth.shape}")
    return float(np.mean(np.abs(restored - truth)))


def restore_image(coeffs, W: LinearOperator, shape: tuple[int, int]) -> np.ndarray:
    """Synthesize wavelet coefficients into an image of the given shape."""
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    if coeffs.shape[0] != W.in_dim or W.out_dim != shape[0] * shape[1]:
        raise ValueError(
            f"{coeffs.shape[0]} coefficients cannot form a {shape} image through {W!r}"
        )
    return W.forward(coeffs).reshape(shape)


def extract_profiles(image) -> dict[str, np.ndarray]:
    """Central row and column of an image."""
    image = np.asarray(image, dtype=float)
    h, w = image.shape
    return {"central_row": image[h // 2, :].copy(), "central_col": image[:, w // 2].copy()}


@dataclass
class DeblurProblem:
    """Blurred, noisy observation of a known image with ``A = P W``."""

    truth: np.ndarray
    observed: np.ndarray
    P: LinearOperator
    W: LinearOperator
    problem: Problem
    L: float

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    def image(self, coeffs) -> np.ndarray:
        return restore_image(coeffs, self.W, self.shape)


def build_problem(
    observed,
    truth=None,
    kernel_size: int = 5,
    boundary: str = "circular",
    levels: int = 2,
    safety_margin: float = DEFAULT_SAFETY_MARGIN,
    seed: int = 0,
) -> DeblurProblem:
    """Set up ``min_x 0.5 ||P W x - observed||^2 + penalty`` for an image."""
    observed = np.asarray(observed, dtype=float)
    h, w = observed.shape
    P = make_blur_operator(h, w, kernel_size, boundary)
    W = make_haar_operator(h, w, levels)
    A = compose(P, W)
    L = lipschitz_constant(A, safety_margin, seed=seed)
    return DeblurProblem(
        truth=None if truth is None else np.asarray(truth, dtype=float),
        observed=observed,
        P=P,
        W=W,
        problem=Problem(A, observed.ravel(), W),
        L=L,
    )


def phantom_problem(
    size: int = 64,
    spec: DegradationSpec = DegradationSpec(),
    levels: int = 2,
    modified: bool = False,
) -> DeblurProblem:
    """Shepp-Logan phantom degraded per ``spec``, ready to solve."""
    truth = shepp_logan(size, size, modified=modified)
    observed = degrade(truth, spec)
    return build_problem(
        observed, truth, spec.kernel_size, spec.boundary, levels, seed=spec.seed
    )


@dataclass
class SweepGrid:
    """Hyperparameter axes. Each strategy only spans the axes it uses."""

    beta_values: Sequence[float]
    gamma_values: Sequence[float] = (1e-2,)
    delta_values: Sequence[float] = (1e-3,)
    strategies: Sequence[str] = tuple(s.value for s in Strategy)
    iters_per_cell: int = 100
    p: float = 0.5

    def __post_init__(self):
        for name in ("beta_values", "gamma_values", "delta_values", "strategies"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} must not be empty")
        for name in ("beta_values", "gamma_values", "delta_values"):
            vals = [float(v) for v in getattr(self, name)]
            if not all(v > 0 and math.isfinite(v) for v in vals):
                raise ValueError(f"{name} must be positive and finite")
            setattr(self, name, vals)
        self.strategies = [Strategy(s) for s in self.strategies]
        if self.iters_per_cell < 0:
            raise ValueError("iters_per_cell must be >= 0")

    def cells(self) -> list[tuple[Strategy, float, Optional[float], Optional[float]]]:
        """Distinct ``(strategy, beta, gamma, delta)`` keys in sorted order.

        Axes a strategy does not use are ``None`` and not iterated over.
        """
        keys = set()
        for s in self.strategies:
            gammas = self.gamma_values if s.uses_gamma else [None]
            deltas = self.delta_values if s.uses_delta else [None]
            for b in self.beta_values:
                for g in gammas:
                    for d in deltas:
                        keys.add((s, b, g, d))
        order = {s: i for i, s in enumerate(Strategy)}
        return sorted(
            keys,
            key=lambda c: (order[c[0]], c[1], -1.0 if c[2] is None else c[2],
                           -1.0 if c[3] is None else c[3]),
        )


@dataclass
class CellResult:
    strategy: Strategy
    beta: float
    gamma: Optional[float]
    delta: Optional[float]
    final_mae: float
    diverged: bool
    wall_ms: float
    trace: IterationTrace
    x_final: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def key(self) -> str:
        parts = [self.strategy.value, f"b{self.beta:.6g}"]
        if self.gamma is not None:
            parts.append(f"g{self.gamma:.6g}")
        if self.delta is not None:
            parts.append(f"d{self.delta:.6g}")
        return "_".join(parts)


@dataclass
class ExperimentResult:
    cells: list
    metadata: dict

    def best(self) -> dict:
        """Lowest-MAE non-diverged cell per strategy."""
        out = {}
        for c in self.cells:
            if c.diverged or not math.isfinite(c.final_mae):
                continue
            cur = out.get(c.strategy)
            if cur is None or c.final_mae < cur.final_mae:
                out[c.strategy] = c
        return out

    def results_csv(self, timing: bool = True) -> str:
        """One row per cell; ``timing=False`` blanks ``wall_ms`` for byte-stable output."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(RESULTS_HEADER)
        for c in self.cells:
            writer.writerow(
                [
                    c.strategy.value,
                    repr(c.beta),
                    "" if c.gamma is None else repr(c.gamma),
                    "" if c.delta is None else repr(c.delta),
                    repr(c.final_mae),
                    int(c.diverged),
                    repr(round(c.wall_ms, 3)) if timing else "",
                ]
            )
        return buf.getvalue()

    def write(self, out_dir, timing: bool = True) -> list[Path]:
        """Write ``results.csv``, ``traces/<cell>.csv`` and ``metadata.json``."""
        out_dir = Path(out_dir)
        (out_dir / "traces").mkdir(parents=True, exist_ok=True)
        written = [out_dir / "results.csv"]
        written[0].write_text(self.results_csv(timing))
        for c in self.cells:
            p = out_dir / "traces" / f"{c.key}.csv"
            p.write_text(c.trace.to_csv(timing))
            written.append(p)
        meta = out_dir / "metadata.json"
        meta.write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")
        written.append(meta)
        return written


def default_workers() -> int:
    env = os.environ.get("SIK_WORKERS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("SIK_WORKERS must be a positive integer")
        return n
    return os.cpu_count() or 1


def run_cell(
    dp: DeblurProblem,
    strategy,
    beta: float,
    gamma: Optional[float] = None,
    delta: Optional[float] = None,
    iters: int = 100,
    p: float = 0.5,
    x0=None,
    trace_stride: int = 1,
) -> CellResult:
    """Solve one hyperparameter setting; divergence is recorded, not raised."""
    strategy = Strategy(strategy)
    config = SolverConfig(
        strategy=strategy,
        beta=beta,
        gamma=gamma if gamma is not None else 1.0,
        delta=delta if delta is not None else 1.0,
        p=p,
        max_iters=iters,
    )
    start = time.perf_counter()
    try:
        res = solve(dp.problem, config, x0=x0, truth=dp.truth, L=dp.L, trace_stride=trace_stride)
        x, trace, diverged = res.x, res.trace, False
    except DivergenceError as err:
        x, trace, diverged = err.x, err.trace, True
    wall_ms = (time.perf_counter() - start) * 1e3
    if diverged or dp.truth is None:
        final = math.nan
    else:
        final = mae(dp.image(x), dp.truth)
    return CellResult(strategy, beta, gamma, delta, final, diverged, wall_ms, trace, x)


def run_sweep(
    dp: DeblurProblem,
    grid: SweepGrid,
    x0=None,
    workers: Optional[int] = None,
    trace_stride: int = 1,
    metadata: Optional[dict] = None,
) -> ExperimentResult:
    """Run every grid cell on the same observation and start point.

    Cells are independent and run on a thread pool of ``workers`` threads
    (``SIK_WORKERS`` or the CPU count by default); results come back in the
    sorted cell order regardless of completion order.
    """
    if dp.truth is None:
        raise ValueError("run_sweep needs a ground truth to score cells")
    workers = default_workers() if workers is None else workers
    keys = grid.cells()
    if x0 is None:
        x0 = np.zeros(dp.problem.n)

    def job(key):
        s, b, g, d = key
        return run_cell(dp, s, b, g, d, grid.iters_per_cell, grid.p, x0, trace_stride)

    start = time.perf_counter()
    if workers == 1:
        cells = [job(k) for k in keys]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(job, keys))
    meta = {
        "image_shape": list(dp.shape),
        "n_cells": len(cells),
        "grid": {
            "beta": grid.beta_values,
            "gamma": grid.gamma_values,
            "delta": grid.delta_values,
            "strategies": [s.value for s in grid.strategies],
            "iters_per_cell": grid.iters_per_cell,
            "p": grid.p,
        },
        "lipschitz": dp.L,
        "observed_mae": mae(dp.observed, dp.truth),
        "wall_ms": (time.perf_counter() - start) * 1e3,
        "versions": versions(),
    }
    if metadata:
        meta.update(metadata)
    return ExperimentResult(cells, meta)


def iterations_to_within(costs, rel: float = 0.05) -> int:
    """First iteration (1-based) after which the cost stays within ``rel`` of its final value."""
    costs = np.asarray(costs, dtype=float)
    if costs.size == 0:
        return 0
    final = costs[-1]
    far = np.flatnonzero(np.abs(costs - final) > rel * abs(final))
    return int(far[-1]) + 2 if far.size else 1


def versions() -> dict:
    import sik

    return {
        "sik": sik.__version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
    }
