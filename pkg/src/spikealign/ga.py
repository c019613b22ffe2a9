"""Genetic search over the random Fourier coefficients of the backward function.

A small population of PRFS specs is scored by the test accuracy a freshly
initialized network reaches after a short training run (one epoch by
default).  Each generation the two fittest individuals produce one
offspring by uniform crossover plus Gaussian mutation, which replaces the
worst-performing individual.  Elites are never modified, and every fitness
evaluation reuses one fixed network/shuffle seed, so the best fitness is
exactly non-decreasing across generations.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import seeds
from .backward import Prfs, format_backward_fn
from .datasets import Dataset
from .network import InitStats, NetworkTopology, build_network
from .training import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GaConfig:
    population: int = 10
    generations: int = 20
    elite_count: int = 2
    fitness_epochs: int = 1
    mutation_rate: float = 0.2
    mutation_sigma: float = 0.1
    seed: int = 0
    k: int = 4
    omega: float = 0.01
    m: float = 1.0

    def __post_init__(self):
        if self.population < 3:
            raise ValueError(f"population must be >= 3, got {self.population}")
        if not (0 < self.elite_count < self.population):
            raise ValueError(
                f"elite_count must be in (0, population), got {self.elite_count}"
            )
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if not (0 <= self.mutation_rate <= 1):
            raise ValueError(f"mutation_rate must be in [0,1], got {self.mutation_rate}")


@dataclass
class GenerationStats:
    generation: int
    fitness: list  # population fitness, index-aligned
    best_index: int
    best_fitness: float
    best_spec: Prfs


@dataclass
class GaRecord:
    generations: list = field(default_factory=list)

    @property
    def best_fitness_trace(self) -> list:
        return [g.best_fitness for g in self.generations]

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("generation,individual_id,fitness\n")
            for g in self.generations:
                for i, fit in enumerate(g.fitness):
                    f.write(f"{g.generation},{i},{fit!r}\n")


def crossover(a: Prfs, b: Prfs, seed: int) -> Prfs:
    """Uniform per-coefficient crossover; the child is renormalized."""
    if a.k != b.k or a.omega != b.omega:
        raise ValueError("parents must share k and omega")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    take_p = rng.random(a.k) < 0.5
    take_q = rng.random(a.k) < 0.5
    p = np.where(take_p, a.p, b.p)
    q = np.where(take_q, a.q, b.q)
    return Prfs.from_coefficients(p, q, omega=a.omega, m=a.m)


def mutate(spec: Prfs, cfg: GaConfig, seed: int) -> Prfs:
    """Add Gaussian noise to each coefficient with probability mutation_rate."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    p = np.array(spec.p)
    q = np.array(spec.q)
    hit_p = rng.random(spec.k) < cfg.mutation_rate
    hit_q = rng.random(spec.k) < cfg.mutation_rate
    noise_p = rng.normal(0.0, cfg.mutation_sigma, spec.k)
    noise_q = rng.normal(0.0, cfg.mutation_sigma, spec.k)
    if not hit_p.any() and not hit_q.any():
        return spec
    p = p + np.where(hit_p, noise_p, 0.0)
    q = q + np.where(hit_q, noise_q, 0.0)
    return Prfs.from_coefficients(p, q, omega=spec.omega, m=spec.m)


def sample_population(cfg: GaConfig) -> list:
    rng = seeds.seed_stream(cfg.seed, seeds.GA, 0)
    from .backward import sample_prfs

    return [
        sample_prfs(int(s), k=cfg.k, omega=cfg.omega, m=cfg.m)
        for s in rng.integers(0, 2**62, size=cfg.population)
    ]


def evolve(
    cfg: GaConfig,
    train_cfg: TrainConfig,
    topology: NetworkTopology,
    train_ds: Dataset,
    test_ds: Dataset,
    stats: InitStats | None = None,
    gamma: float | None = None,
    fitness_fn=None,
    generation_hook=None,
) -> tuple[Prfs, GaRecord]:
    """Run the evolution; returns (best spec of the final generation, record).

    Fitness defaults to the test accuracy after ``cfg.fitness_epochs`` epochs
    of aDFA training from a fresh network.  One fixed evaluation seed is
    used for every individual in every generation, so fitness compares
    backward functions rather than lucky initializations, and an unchanged
    individual keeps its score (evaluations are cached).  ``fitness_fn`` may
    override the evaluation for testing.
    """
    eval_seed = int(seeds.seed_stream(cfg.seed, seeds.GA, 1).integers(0, 2**62))

    if fitness_fn is None:

        def fitness_fn(spec: Prfs) -> float:
            net = build_network(
                NetworkTopology(topology.layer_dims, seed=eval_seed), stats, gamma=gamma
            )
            fit_cfg = train_cfg.with_(
                mechanism="adfa",
                backward_fn=spec,
                epochs=cfg.fitness_epochs,
                seed=eval_seed,
            )
            record = train(net, train_ds, test_ds, fit_cfg)
            return record.final_test_acc

    def score(spec: Prfs) -> float:
        try:
            fit = float(fitness_fn(spec))
        except FloatingPointError as exc:
            log.warning("fitness evaluation failed (%s); assigning 0", exc)
            return 0.0
        if not np.isfinite(fit):
            log.warning("fitness evaluation returned %r; assigning 0", fit)
            return 0.0
        return fit

    population = sample_population(cfg)
    fitness = [score(s) for s in population]
    record = GaRecord()

    def snapshot(gen):
        best = int(np.argmax(fitness))
        stats_row = GenerationStats(gen, list(fitness), best, fitness[best], population[best])
        record.generations.append(stats_row)
        if generation_hook is not None:
            generation_hook(stats_row)
        return stats_row

    snapshot(0)
    for gen in range(1, cfg.generations + 1):
        order = np.argsort(fitness)[::-1]  # stable enough: ties keep lower index first
        elites = [population[i] for i in order[: cfg.elite_count]]
        child = crossover(
            elites[0],
            elites[1 % len(elites)],
            int(seeds.seed_stream(cfg.seed, seeds.GA, 2, gen).integers(0, 2**62)),
        )
        child = mutate(
            child, cfg, int(seeds.seed_stream(cfg.seed, seeds.GA, 3, gen).integers(0, 2**62))
        )
        worst = int(np.argmin(fitness))
        population[worst] = child
        fitness[worst] = score(child)
        snapshot(gen)

    best = record.generations[-1]
    log.info(
        "GA finished: best fitness %.4f, spec %s",
        best.best_fitness,
        format_backward_fn(best.best_spec),
    )
    return best.best_spec, record
