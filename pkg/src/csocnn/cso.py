"""Cat Swarm Optimization over box-bounded real vectors.

A population of cats alternates between two behaviors, reassigned at random
every iteration: seeking (clone the position a few times, mutate a fraction
of the dimensions by up to srd of their current magnitude, keep one clone by
fitness-weighted roulette) and tracing (velocity update pulling the cat
toward the best position found so far, starting each stint from rest).

Fitness values may be plain floats or any totally ordered objects; in the
latter case ``weight_key`` must project them to floats for the roulette
weights and history curves. Candidate evaluations within an iteration are
independent and may run on a thread pool; results are always reduced in
cat-index order so runs are reproducible regardless of scheduling.
"""

import csv
import inspect
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import BoundsError, FitnessError


@dataclass
class Cat:
    """One swarm member: a candidate solution plus its motion state."""

    position: np.ndarray
    velocity: np.ndarray
    mode: str  # "seeking" | "tracing"
    fitness: object = None  # cached value; None means not evaluated yet


@dataclass
class SwarmConfig:
    """Engine parameters.

    smp: candidate copies per seeking move (seeking memory pool).
    srd: seeking range of the selected dimension; mutated coordinates move
        by a uniform-random fraction of srd times their current magnitude
        (times the bound span for coordinates sitting exactly at zero).
    cdc: fraction of dimensions mutated per candidate.
    spc: whether the current position occupies one candidate slot.
    mixture_ratio: fraction of the swarm in tracing mode each iteration.
    c1: tracing acceleration constant.
    vmax_fraction: velocity clamp as a fraction of each dimension's span.
    """

    n_cats: int = 30
    mixture_ratio: float = 0.3
    smp: int = 5
    srd: float = 0.2
    cdc: float = 0.8
    spc: bool = True
    c1: float = 2.0
    vmax_fraction: float = 0.5
    max_iters: int = 100
    seed: int = 0
    objective: str = "minimize"
    n_workers: int | None = None

    def __post_init__(self):
        if self.n_cats < 1:
            raise ValueError("n_cats must be >= 1")
        if not 0 < self.mixture_ratio < 1:
            raise ValueError("mixture_ratio must lie in (0, 1)")
        if self.smp < 1:
            raise ValueError("smp must be >= 1")
        if self.spc and self.smp < 2:
            raise ValueError("spc reserves one slot, so smp must be >= 2")
        if not 0 < self.srd <= 1:
            raise ValueError("srd must lie in (0, 1]")
        if not 0 < self.cdc <= 1:
            raise ValueError("cdc must lie in (0, 1]")
        if self.c1 <= 0:
            raise ValueError("c1 must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.objective not in ("minimize", "maximize"):
            raise ValueError("objective must be 'minimize' or 'maximize'")


@dataclass
class SwarmHistory:
    """Per-iteration convergence record.

    best_fitness holds the raw fitness values (which may be rich objects);
    best_value and mean_fitness are their float projections, and are what
    the CSV export writes.
    """

    iterations: list = field(default_factory=list)
    best_fitness: list = field(default_factory=list)
    best_value: list = field(default_factory=list)
    mean_fitness: list = field(default_factory=list)
    best_position: list = field(default_factory=list)

    def append(self, iteration, best_fitness, best_value, mean_fitness, best_position):
        self.iterations.append(iteration)
        self.best_fitness.append(best_fitness)
        self.best_value.append(best_value)
        self.mean_fitness.append(mean_fitness)
        self.best_position.append(np.array(best_position, copy=True))

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "best_fitness", "mean_fitness"])
            for it, bv, mv in zip(self.iterations, self.best_value, self.mean_fitness):
                writer.writerow([it, repr(float(bv)), repr(float(mv))])
        return path


def _check_bounds(bounds):
    lo = np.asarray([b[0] for b in bounds], dtype=float)
    hi = np.asarray([b[1] for b in bounds], dtype=float)
    if np.any(lo >= hi):
        bad = int(np.argmax(lo >= hi))
        raise BoundsError(f"inverted bounds at dimension {bad}: {bounds[bad]}")
    return lo, hi


def _better(a, b, objective):
    if objective == "minimize":
        return a < b
    return a > b


def _rng(seed, *key):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _fitness_caller(fitness_fn):
    """Call fitness_fn(position) or fitness_fn(position, ctx) depending on
    how many positional arguments it accepts."""
    try:
        sig = inspect.signature(fitness_fn)
        takes_ctx = len([
            p for p in sig.parameters.values()
            if p.kind in (p.POSITIONAL_ONLY, p.POSITIONAL_OR_KEYWORD)
        ]) >= 2 or any(p.kind == p.VAR_POSITIONAL for p in sig.parameters.values())
    except (TypeError, ValueError):  # builtins, ufuncs
        takes_ctx = False
    if takes_ctx:
        return fitness_fn
    return lambda position, ctx: fitness_fn(position)


@dataclass(frozen=True)
class EvalContext:
    """Where an evaluation sits in the run: iteration 0 is the initial
    swarm evaluation, cat_index identifies the cat being moved."""

    iteration: int
    cat_index: int


def init_swarm(config, bounds):
    """Seeded uniform-random swarm: zero velocities, round(MR * n) cats
    flagged tracing."""
    lo, hi = _check_bounds(bounds)
    rng = _rng(config.seed, 0)
    positions = rng.uniform(lo, hi, (config.n_cats, len(bounds)))
    n_tracing = round(config.mixture_ratio * config.n_cats)
    tracing = set(rng.choice(config.n_cats, n_tracing, replace=False).tolist())
    return [
        Cat(
            position=positions[i].copy(),
            velocity=np.zeros(len(bounds)),
            mode="tracing" if i in tracing else "seeking",
        )
        for i in range(config.n_cats)
    ]


def _reassign_modes(cats, config, rng):
    n_tracing = round(config.mixture_ratio * len(cats))
    tracing = set(rng.choice(len(cats), n_tracing, replace=False).tolist())
    for i, cat in enumerate(cats):
        new_mode = "tracing" if i in tracing else "seeking"
        # A cat starting a fresh tracing stint accelerates from rest;
        # without this the undamped velocity update oscillates forever.
        if new_mode == "tracing" and cat.mode != "tracing":
            cat.velocity = np.zeros_like(cat.velocity)
        cat.mode = new_mode


def _seeking_candidates(cat, config, bounds, rng):
    """The smp candidate positions for one seeking move. Returns
    (positions, spc_index) where spc_index marks the untouched current
    position when self-position consideration is on."""
    lo, hi = _check_bounds(bounds)
    span = hi - lo
    d = len(cat.position)
    n_mut = min(d, max(1, math.ceil(config.cdc * d)))
    positions = []
    spc_index = None
    if config.spc:
        positions.append(cat.position.copy())
        spc_index = 0
    while len(positions) < config.smp:
        candidate = cat.position.copy()
        dims = rng.choice(d, n_mut, replace=False)
        delta = (rng.integers(0, 2, n_mut) * 2 - 1) * rng.random(n_mut) * config.srd
        base = candidate[dims]
        # Coordinates at exactly zero have no magnitude to scale; fall back
        # to the bound span so they can still move.
        candidate[dims] = base + np.where(base != 0.0, base, span[dims]) * delta
        positions.append(np.clip(candidate, lo, hi))
    return positions, spc_index


def _select_candidate(fitnesses, config, rng, weight_key, selection):
    if selection == "greedy":
        best = 0
        for j in range(1, len(fitnesses)):
            if _better(fitnesses[j], fitnesses[best], config.objective):
                best = j
        return best
    weights = np.asarray([float(weight_key(f)) for f in fitnesses])
    if config.objective == "minimize":
        weights = weights.max() - weights
    else:
        weights = weights - weights.min()
    total = weights.sum()
    if total <= 0:  # all candidates equally fit: uniform choice
        return int(rng.integers(0, len(fitnesses)))
    r = rng.random() * total
    return int(np.searchsorted(np.cumsum(weights), r, side="right").clip(0, len(fitnesses) - 1))


def seeking_move(cat, fitness_fn, config, bounds, rng, selection="roulette",
                 weight_key=float):
    """One seeking-mode step: mutate-and-choose among smp candidates.

    The 'greedy' selection exists for tests that need the no-regression
    guarantee; production paths use the fitness-weighted roulette.
    """
    call = _fitness_caller(fitness_fn)
    positions, spc_index = _seeking_candidates(cat, config, bounds, rng)
    fitnesses = []
    for j, pos in enumerate(positions):
        if j == spc_index and cat.fitness is not None:
            fitnesses.append(cat.fitness)
        else:
            fitnesses.append(call(pos, EvalContext(0, 0)))
    idx = _select_candidate(fitnesses, config, rng, weight_key, selection)
    return replace(cat, position=positions[idx], fitness=fitnesses[idx])


def tracing_move(cat, global_best, config, bounds, rng):
    """One tracing-mode step: accelerate toward the global best, with the
    velocity clamped per dimension and the position clamped to bounds."""
    lo, hi = _check_bounds(bounds)
    vmax = config.vmax_fraction * (hi - lo)
    r = rng.random(len(cat.position))
    velocity = cat.velocity + r * config.c1 * (np.asarray(global_best) - cat.position)
    velocity = np.clip(velocity, -vmax, vmax)
    position = np.clip(cat.position + velocity, lo, hi)
    return replace(cat, position=position, velocity=velocity, fitness=None)


def optimize(fitness_fn, bounds, config, weight_key=float, callback=None):
    """Run the swarm for max_iters iterations.

    Returns (best_position, best_fitness, history). Deterministic for a
    fixed (seed, config, bounds, fitness function); fitness failures are
    raised as FitnessError with the offending position attached.

    fitness_fn may optionally accept a second EvalContext argument telling
    it which (iteration, cat_index) the evaluation belongs to.
    """
    lo, hi = _check_bounds(bounds)
    call = _fitness_caller(fitness_fn)

    def evaluate(jobs):
        # jobs: list of (position, EvalContext); returns fitness values in order
        def one(job):
            pos, ctx = job
            try:
                return call(pos, ctx)
            except FitnessError:
                raise
            except Exception as exc:
                raise FitnessError(
                    f"fitness function failed at {np.asarray(pos)}: {exc}",
                    position=np.array(pos, copy=True)) from exc
        if config.n_workers and config.n_workers > 1 and len(jobs) > 1:
            with ThreadPoolExecutor(max_workers=config.n_workers) as pool:
                return list(pool.map(one, jobs))
        return [one(job) for job in jobs]

    cats = init_swarm(config, bounds)
    fits = evaluate([(c.position, EvalContext(0, i)) for i, c in enumerate(cats)])
    for cat, fit in zip(cats, fits):
        cat.fitness = fit

    best_index = 0
    for i in range(1, len(cats)):
        if _better(cats[i].fitness, cats[best_index].fitness, config.objective):
            best_index = i
    best_position = cats[best_index].position.copy()
    best_fitness = cats[best_index].fitness

    history = SwarmHistory()
    for iteration in range(1, config.max_iters + 1):
        _reassign_modes(cats, config, _rng(config.seed, iteration))

        # Phase 1: draw every random move first, so evaluation can be
        # parallel while RNG consumption stays in cat order.
        jobs = []
        plans = []
        for i, cat in enumerate(cats):
            rng = _rng(config.seed, iteration, i)
            ctx = EvalContext(iteration, i)
            if cat.mode == "seeking":
                positions, spc_index = _seeking_candidates(cat, config, bounds, rng)
                need = []
                for j, pos in enumerate(positions):
                    if j == spc_index and cat.fitness is not None:
                        need.append(None)
                    else:
                        need.append(len(jobs))
                        jobs.append((pos, ctx))
                plans.append(("seeking", positions, need, spc_index, rng))
            else:
                moved = tracing_move(cat, best_position, config, bounds, rng)
                plans.append(("tracing", moved, len(jobs), None, rng))
                jobs.append((moved.position, ctx))

        results = evaluate(jobs)

        # Phase 2: commit moves and update the global best in cat order.
        for i, cat in enumerate(cats):
            kind = plans[i][0]
            if kind == "seeking":
                _, positions, need, spc_index, rng = plans[i]
                fitnesses = [
                    cat.fitness if slot is None else results[slot]
                    for slot in need
                ]
                idx = _select_candidate(fitnesses, config, rng, weight_key, "roulette")
                cat.position = positions[idx]
                cat.fitness = fitnesses[idx]
            else:
                _, moved, slot, _, _ = plans[i]
                cat.position = moved.position
                cat.velocity = moved.velocity
                cat.fitness = results[slot]
            if _better(cat.fitness, best_fitness, config.objective):
                best_fitness = cat.fitness
                best_position = cat.position.copy()

        mean_value = float(np.mean([float(weight_key(c.fitness)) for c in cats]))
        history.append(iteration, best_fitness, float(weight_key(best_fitness)),
                       mean_value, best_position)
        if callback is not None:
            callback(iteration, cats, best_position, best_fitness)

    return best_position, best_fitness, history
