"""Stochastic gradient ascent on theta with ADAGRAD stepsizes.

Each iteration draws a mini-batch of fresh sample paths, averages their
pathwise gradients, takes the per-coordinate step
``eta * g / sqrt(G + eps)`` where ``G`` accumulates squared gradients, and
projects back onto the parameter box.  All randomness comes from the
``numpy.random.Generator`` passed in; the seeds it produces are logged, and
a checkpoint stores the generator state so a run can resume bit-exactly.
"""
from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .energy import GridModel, PriceModel, RenewableModel, sample_path
from .grad import batch_gradient
from .model import Horizon, StorageParams, simulate
from .policy import LookaheadPolicy, Theta

SEED_HIGH = 2**63 - 1


class DivergenceDetected(RuntimeError):
    """An unprojected iterate left its box by more than ten box widths."""


@dataclass(frozen=True)
class Problem:
    """Everything needed to draw sample paths and simulate a policy."""

    horizon: Horizon = Horizon(48, 24)
    params: StorageParams = StorageParams()
    prices: PriceModel = PriceModel()
    renewables: RenewableModel = RenewableModel()
    grid: GridModel = GridModel()
    sigma_f: float = 0.0

    def path(self, seed):
        return sample_path(self.horizon.T, self.horizon.H, int(seed), self.prices,
                           self.renewables, self.grid, sigma_f=self.sigma_f)

    def with_sigma_f(self, sigma_f):
        return replace(self, sigma_f=float(sigma_f))


@dataclass
class AdagradState:
    G_diag: np.ndarray
    eta: float = 0.1
    eps: float = 1e-8

    @classmethod
    def zeros(cls, p, eta=0.1, eps=1e-8):
        return cls(np.zeros(p), eta, eps)

    def step(self, g):
        """Accumulate ``g**2`` and return ``(step, stepsizes)``."""
        self.G_diag = self.G_diag + g * g
        sizes = self.eta / np.sqrt(self.G_diag + self.eps)
        return sizes * g, sizes


@dataclass
class Iterate:
    n: int
    theta: tuple
    F_bar: float
    grad_norm: float
    stepsizes: tuple
    gradient: tuple


@dataclass
class SearchTrace:
    iterates: list
    N: int
    batch_size: int
    seed_schedule: list = field(default_factory=list)

    def thetas(self):
        return np.array([it.theta for it in self.iterates])


@dataclass
class Checkpoint:
    kind: str
    theta: list
    G_diag: list
    iteration: int
    rng_state: dict
    trace: SearchTrace

    def save(self, path):
        data = {
            "variant": self.kind,
            "theta": self.theta,
            "G_diag": self.G_diag,
            "iteration": self.iteration,
            "rng_state": self.rng_state,
            "N": self.trace.N,
            "batch_size": self.trace.batch_size,
            "seed_schedule": self.trace.seed_schedule,
            "iterates": [vars(it) for it in self.trace.iterates],
        }
        atomic_write(path, json.dumps(data, default=_jsonable))

    @classmethod
    def load(cls, path):
        d = json.loads(Path(path).read_text())
        its = [Iterate(i["n"], tuple(i["theta"]), _float(i["F_bar"]), _float(i["grad_norm"]),
                       tuple(i["stepsizes"]), tuple(i["gradient"])) for i in d["iterates"]]
        trace = SearchTrace(its, d["N"], d["batch_size"], [list(s) for s in d["seed_schedule"]])
        return cls(d["variant"], d["theta"], d["G_diag"], d["iteration"], d["rng_state"], trace)


def _float(v):
    return float("nan") if v is None else float(v)


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def atomic_write(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _check_divergence(theta, values):
    width = theta.upper - theta.lower
    if np.any(values < theta.lower - 10 * width) or np.any(values > theta.upper + 10 * width):
        raise DivergenceDetected(f"theta {values} left its box {theta.lower}..{theta.upper}")


def run(theta0: Theta, problem: Problem, N: int = 500, batch_size: int = 8, rng=None,
        *, eta=0.1, eps=1e-8, gradient=None, checkpoint_path=None, checkpoint_every=0,
        resume: Checkpoint | None = None):
    """Tune ``theta0`` by projected ADAGRAD ascent; returns ``(theta, trace)``.

    ``gradient(theta, seeds) -> (g, F_bar)`` defaults to the mean pathwise
    gradient over the sample paths of ``seeds``; tests substitute closed-form
    objectives.  ``resume`` continues a run from a :class:`Checkpoint`.
    """
    if theta0.kind == "benchmark":
        raise ValueError("Benchmark has no parameters")
    if N < 1 or batch_size < 1:
        raise ValueError("N and batch_size must be at least 1")
    if not theta0.inside_box():
        raise ValueError("theta0 must lie inside its box")
    rng = np.random.default_rng() if rng is None else rng
    if gradient is None:
        def gradient(th, seeds):
            paths = [problem.path(s) for s in seeds]
            return batch_gradient(th, paths, problem.horizon, problem.params)

    if resume is None:
        theta = theta0
        ada = AdagradState.zeros(theta.size, eta, eps)
        trace = SearchTrace([Iterate(0, tuple(theta.values.tolist()), float("nan"), float("nan"),
                                     (0.0,) * theta.size, (0.0,) * theta.size)], N, batch_size)
        start = 1
    else:
        if resume.kind != theta0.kind:
            raise ValueError(f"checkpoint holds {resume.kind}, not {theta0.kind}")
        theta = theta0.with_values(resume.theta)
        ada = AdagradState(np.array(resume.G_diag, float), eta, eps)
        rng.bit_generator.state = resume.rng_state
        trace = resume.trace
        trace.N = N
        start = resume.iteration + 1

    for n in range(start, N + 1):
        seeds = rng.integers(0, SEED_HIGH, size=batch_size).tolist()
        trace.seed_schedule.append(seeds)
        g, F = gradient(theta, seeds)
        g = np.asarray(g, float)
        step, sizes = ada.step(g)
        raw = theta.values + step
        _check_divergence(theta, raw)
        theta = theta.with_values(raw).project()
        trace.iterates.append(Iterate(n, tuple(theta.values.tolist()), float(F),
                                      float(np.linalg.norm(g)), tuple(sizes.tolist()),
                                      tuple(g.tolist())))
        if checkpoint_path and checkpoint_every and (n % checkpoint_every == 0 or n == N):
            Checkpoint(theta.kind, theta.values.tolist(), ada.G_diag.tolist(), n,
                       rng.bit_generator.state, trace).save(checkpoint_path)
    return theta, trace


@dataclass
class Evaluation:
    mean: float
    std_error: float
    delta_F: float
    delta_F_se: float
    benchmark_mean: float
    seeds: list
    rewards: np.ndarray
    benchmark_rewards: np.ndarray


def rewards(theta: Theta, problem: Problem, seeds):
    pol = LookaheadPolicy(theta, problem.horizon, problem.params)
    return np.array([simulate(pol, problem.path(s), problem.horizon, problem.params).cumulative_reward
                     for s in seeds])


def evaluate(theta: Theta, problem: Problem, n_paths: int, rng=None, *, seeds=None,
             benchmark_rewards=None) -> Evaluation:
    """Paired comparison of ``theta`` against the benchmark on common paths.

    ``benchmark_rewards`` lets callers reuse benchmark runs on the same seeds.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be at least 2")
    if seeds is None:
        rng = np.random.default_rng() if rng is None else rng
        seeds = rng.integers(0, SEED_HIGH, size=n_paths).tolist()
    seeds = list(seeds)[:n_paths]
    if benchmark_rewards is None:
        benchmark_rewards = rewards(Theta.benchmark(), problem, seeds)
    mine = benchmark_rewards if theta.kind == "benchmark" else rewards(theta, problem, seeds)
    base = math.fsum(benchmark_rewards) / n_paths
    mean = math.fsum(mine) / n_paths
    diff = mine - benchmark_rewards
    se = float(np.std(mine, ddof=1) / math.sqrt(n_paths))
    dse = float(np.std(diff, ddof=1) / math.sqrt(n_paths))
    delta = (mean - base) / abs(base)
    return Evaluation(mean, se, delta, dse / abs(base), base, seeds, mine, benchmark_rewards)
