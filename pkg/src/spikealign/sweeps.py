"""Batch experiment runners: parameter sweeps, correlation-binned feasibility
runs, and order-of-magnitude width scans.

Every sweep is a pure function of its spec and the base config's seeds:
trial seeds derive from (base seed, point index, trial index), so grids are
reproducible cell by cell no matter how or in what order points execute.
Each point's rows are persisted to a per-point CSV as soon as they finish;
a consolidated CSV (and heatmap matrix for two-axis sweeps) is written at
the end.  Individual run failures are recorded and the sweep continues.
"""

import csv
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import seeds
from .backward import (
    CorrelationConfig,
    Gaussian,
    LifSurrogate,
    Opto,
    bin_by_correlation,
    correlation,
    format_backward_fn,
    prfs_eta_samples,
)
from .datasets import load_pair
from .network import NetworkTopology, build_network
from .training import train

log = logging.getLogger(__name__)


@dataclass
class SweepAxis:
    path: str  # config parameter path, e.g. "lif.dt" or "backward.omega"
    values: list


@dataclass
class SweepSpec:
    axes: list
    base_flat: dict  # base experiment config (flat key/value form)
    trials: int = 5
    out_dir: Path | None = None
    jobs: int = 1

    def __post_init__(self):
        if not self.axes:
            raise ValueError("a sweep needs at least one axis")
        for ax in self.axes:
            if not ax.values:
                raise ValueError(f"axis {ax.path!r} has no values")


@dataclass
class SweepPoint:
    index: int
    values: tuple
    trial_accs: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return len(self.trial_accs) > 0

    def stats(self):
        if not self.trial_accs:
            return (float("nan"),) * 3
        return (
            float(np.mean(self.trial_accs)),
            float(np.min(self.trial_accs)),
            float(np.max(self.trial_accs)),
        )


def _load_data(exp):
    if not exp.data_dir.exists():
        raise FileNotFoundError(
            f"dataset directory {exp.data_dir} does not exist (set data.dir or --data-dir)"
        )
    return load_pair(
        exp.data_dir,
        target_mean=float(exp.flat["data.target_mean"]),
        train_limit=exp.train_limit,
        test_limit=exp.test_limit,
    )


def run_one(flat: dict, seed: int) -> float:
    """Train one configuration with the given seed; returns final test accuracy."""
    flat = dict(flat)
    flat["net.seed"] = str(seed)
    flat["train.seed"] = str(seed)
    exp = cfgmod.resolve(flat)
    train_ds, test_ds, _ = _load_data(exp)
    net = build_network(exp.topology, exp.stats, gamma=exp.gamma)
    record = train(net, train_ds, test_ds, exp.train_cfg)
    return record.final_test_acc


def _point_flat(spec: SweepSpec, values) -> dict:
    flat = dict(spec.base_flat)
    for ax, v in zip(spec.axes, values):
        flat = cfgmod.set_param(flat, ax.path, v)
    return flat


def _run_point(args):
    spec, index, values = args
    base_seed = int(spec.base_flat.get("train.seed", "1"))
    point = SweepPoint(index, tuple(values))
    try:
        flat = _point_flat(spec, values)
    except Exception as exc:  # bad axis value: record, keep sweeping
        point.errors.append(f"config: {exc}")
        return point
    for trial in range(spec.trials):
        seed = int(seeds.seed_stream(base_seed, seeds.SWEEP, index, trial).integers(0, 2**62))
        try:
            point.trial_accs.append(run_one(flat, seed))
        except Exception as exc:
            log.warning("sweep point %d trial %d failed: %s", index, trial, exc)
            point.errors.append(f"trial {trial}: {exc}")
    return point


def _write_point_csv(path: Path, spec: SweepSpec, point: SweepPoint) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["point", *(ax.path for ax in spec.axes), "trial", "test_acc"])
        for trial, acc in enumerate(point.trial_accs):
            w.writerow([point.index, *point.values, trial, repr(acc)])
        for err in point.errors:
            w.writerow([point.index, *point.values, "error", err])


def run_sweep(spec: SweepSpec) -> list:
    """Execute the Cartesian product of the axes; returns the list of points."""
    combos = list(itertools.product(*(ax.values for ax in spec.axes)))
    jobs = [(spec, i, values) for i, values in enumerate(combos)]
    out_dir = Path(spec.out_dir) if spec.out_dir else None
    if out_dir:
        (out_dir / "points").mkdir(parents=True, exist_ok=True)

    points = []
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            for point in pool.map(_run_point, jobs):
                points.append(point)
                if out_dir:
                    _write_point_csv(out_dir / "points" / f"point_{point.index:04d}.csv", spec, point)
    else:
        for job in jobs:
            point = _run_point(job)
            points.append(point)
            if out_dir:
                _write_point_csv(out_dir / "points" / f"point_{point.index:04d}.csv", spec, point)
    points.sort(key=lambda p: p.index)
    if out_dir:
        fp = cfgmod.fingerprint(spec.base_flat)
        write_grid_csv(out_dir / f"sweep_{fp}.csv", spec, points)
        if len(spec.axes) == 2:
            write_heatmap_csv(out_dir / f"heatmap_{fp}.csv", spec, points)
    return points


def write_grid_csv(path, spec: SweepSpec, points: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(
            ["point", *(ax.path for ax in spec.axes), "mean_acc", "min_acc", "max_acc", "n_trials", "n_errors"]
        )
        for p in points:
            mean, lo, hi = p.stats()
            w.writerow(
                [p.index, *p.values, repr(mean), repr(lo), repr(hi), len(p.trial_accs), len(p.errors)]
            )


def write_heatmap_csv(path, spec: SweepSpec, points: list) -> None:
    """Mean-accuracy matrix for a two-axis sweep: rows = first axis values."""
    ys, xs = spec.axes[0].values, spec.axes[1].values
    grid = {p.values: p.stats()[0] for p in points}
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"{spec.axes[0].path}\\{spec.axes[1].path}", *xs])
        for y in ys:
            w.writerow([y, *(repr(grid.get((y, x), float("nan"))) for x in xs)])


ETA_EDGES = (-0.6, -0.4, -0.2, 0.0, 0.2, 0.4, 0.6)


@dataclass
class EtaBinResult:
    bin_lo: float
    bin_hi: float
    mechanism: str
    etas: list
    accs: list
    errors: list
    sparse: bool

    def stats(self):
        if not self.accs:
            return (float("nan"),) * 3
        return (float(np.mean(self.accs)), float(np.min(self.accs)), float(np.max(self.accs)))


def eta_binned_experiment(
    base_flat: dict,
    n_samples: int = 10000,
    omega: float = 0.01,
    edges=ETA_EDGES,
    per_bin: int = 5,
    mechanisms=("adfa", "bp"),
    out_dir=None,
    corr_cfg: CorrelationConfig = CorrelationConfig(),
) -> list:
    """Train mechanisms with correlation-binned random Fourier backward functions.

    PRFS are sampled until ``n_samples`` draws are spent, binned by their
    correlation with the surrogate derivative, and ``per_bin`` specs per bin
    are trained with each mechanism (the non-adfa mechanisms get the PRFS as
    an explicit override).  Bins with fewer than ``per_bin`` members are
    reported sparse and run with what they have.
    """
    exp = cfgmod.resolve(dict(base_flat))
    reference = LifSurrogate(exp.train_cfg.lif)
    specs, etas = prfs_eta_samples(
        n_samples, omega, reference, corr_cfg, seed=int(base_flat.get("train.seed", "1"))
    )
    bins = bin_by_correlation(specs, reference, edges, corr_cfg, etas=etas)
    base_seed = int(base_flat.get("train.seed", "1"))

    results = []
    for b, (lo, hi) in enumerate(zip(edges[:-1], edges[1:])):
        members = bins[(float(lo), float(hi))]
        rng = seeds.seed_stream(base_seed, seeds.SWEEP, 1000 + b)
        chosen = [members[i] for i in rng.permutation(len(members))[:per_bin]]
        sparse = len(chosen) < per_bin
        if sparse:
            log.warning("bin [%g,%g] is sparse: %d/%d specs", lo, hi, len(chosen), per_bin)
        for mech in mechanisms:
            res = EtaBinResult(float(lo), float(hi), mech, [], [], [], sparse)
            for j, (spec, eta) in enumerate(chosen):
                flat = dict(base_flat)
                flat["mechanism"] = mech
                flat["backward"] = format_backward_fn(spec)
                if mech != "adfa":
                    flat["train.allow_g_override"] = "true"
                seed = int(
                    seeds.seed_stream(base_seed, seeds.SWEEP, 2000 + b, j).integers(0, 2**62)
                )
                try:
                    acc = run_one(flat, seed)
                    res.etas.append(float(eta))
                    res.accs.append(acc)
                except Exception as exc:
                    log.warning("eta bin [%g,%g] %s spec %d failed: %s", lo, hi, mech, j, exc)
                    res.errors.append(str(exc))
            results.append(res)
    if out_dir:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fp = cfgmod.fingerprint(base_flat)
        with open(out_dir / f"eta_bins_{fp}.csv", "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "mechanism", "eta", "test_acc", "sparse"])
            for r in results:
                for eta, acc in zip(r.etas, r.accs):
                    w.writerow([r.bin_lo, r.bin_hi, r.mechanism, repr(eta), repr(acc), int(r.sparse)])
    return results


def width_magnitude_scan(
    base_flat: dict,
    family: str,
    exponents=range(-2, 3),
    trials: int = 5,
    out_dir=None,
    corr_cfg: CorrelationConfig = CorrelationConfig(),
) -> list:
    """Scan the horizontal extension of a fixed-form backward function by
    order of magnitude (Gaussian width c, or Opto angular frequency omega).

    Returns one dict per magnitude with trial accuracy stats and the
    function's correlation with the surrogate derivative.
    """
    if family not in ("gaussian", "opto"):
        raise ValueError(f"family must be 'gaussian' or 'opto', got {family!r}")
    base_seed = int(base_flat.get("train.seed", "1"))
    exp = cfgmod.resolve(dict(base_flat))
    reference = LifSurrogate(exp.train_cfg.lif)
    rows = []
    for i, expo in enumerate(exponents):
        value = 10.0**expo
        spec = Gaussian(c=value) if family == "gaussian" else Opto(omega=value)
        eta = correlation(spec, reference, corr_cfg)
        flat = dict(base_flat)
        flat["mechanism"] = "adfa"
        flat["backward"] = format_backward_fn(spec)
        accs, errors = [], []
        for trial in range(trials):
            seed = int(
                seeds.seed_stream(base_seed, seeds.SWEEP, 3000 + i, trial).integers(0, 2**62)
            )
            try:
                accs.append(run_one(flat, seed))
            except Exception as exc:
                log.warning("width scan %s 10^%d trial %d failed: %s", family, expo, trial, exc)
                errors.append(str(exc))
        rows.append(
            {
                "family": family,
                "exponent": int(expo),
                "value": value,
                "eta": eta,
                "accs": accs,
                "errors": errors,
            }
        )
    if out_dir:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        fp = cfgmod.fingerprint(base_flat)
        with open(out_dir / f"width_scan_{family}_{fp}.csv", "w", encoding="utf-8", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["family", "exponent", "value", "eta", "mean_acc", "min_acc", "max_acc", "n_errors"])
            for r in rows:
                accs = r["accs"]
                mean = float(np.mean(accs)) if accs else float("nan")
                lo = float(np.min(accs)) if accs else float("nan")
                hi = float(np.max(accs)) if accs else float("nan")
                w.writerow(
                    [r["family"], r["exponent"], r["value"], repr(r["eta"]), repr(mean), repr(lo), repr(hi), len(r["errors"])]
                )
    return rows
