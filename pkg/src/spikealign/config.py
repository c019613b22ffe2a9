"""Flat dotted-key configuration, fingerprinting, and run manifests.

A run is fully described by a flat mapping of dotted keys to string values
(e.g. ``lif.dt = 0.25``).  Files hold one ``key = value`` pair per line;
``#`` starts a comment.  CLI flags override file values.  Unknown keys are
hard errors.  The fingerprint is a stable hash of the resolved tree
(ignoring the reserved ``meta.`` section), and every command writes exactly
one manifest - the resolved config plus ``meta.`` bookkeeping - from which
the run can be reproduced.
"""

import hashlib
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .backward import BackwardFn, format_backward_fn, parse_backward_fn
from .datasets import data_root
from .lif import LifParams
from .network import InitStats, NetworkTopology
from .training import TrainConfig


class ConfigError(ValueError):
    """Invalid configuration; maps to exit code 2 at the CLI."""


DEFAULTS = {
    "mechanism": "adfa",
    "backward": "",  # empty -> surrogate derivative of the LIF params
    "net.dims": "784x100x10",
    "net.seed": "1",
    "init.v_mean": "8.0",
    "init.v_second": "164.0",
    "init.alpha": "0.066",
    "init.bias": "0.8",
    "init.gamma": "0.0338",
    "lif.h_th": "0.4",
    "lif.dt": "0.25",
    "lif.t_ref": "1.0",
    "lif.tau": "20.0",
    "train.epochs": "20",
    "train.batch_size": "100",
    "train.interval_ms": "100.0",
    "train.settle_ms": "20.0",
    "train.lr_base": "",  # empty -> per-mechanism default
    "train.seed": "1",
    "train.allow_g_override": "false",
    "data.dataset": "mnist",
    "data.dir": "",  # empty -> <data root>/<dataset>
    "data.target_mean": "8.0",
    "data.train_limit": "",  # empty -> full split
    "data.test_limit": "",
}

PRESETS = {
    # paper: full-scale reproduction setup
    "paper": {"net.dims": "784x1000x10", "train.epochs": "20"},
    # desk: CI-scale profile (small hidden layer, data subsets, few epochs)
    "desk": {
        "net.dims": "784x100x10",
        "train.epochs": "5",
        "data.train_limit": "10000",
        "data.test_limit": "2000",
    },
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    flat = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        flat[key.strip()] = value.strip()
    return flat


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def merged_config(preset: str | None = None, file: str | None = None, overrides=()) -> dict:
    """Layer defaults <- preset <- config file <- overrides; reject unknown keys."""
    flat = dict(DEFAULTS)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        flat.update(PRESETS[preset])
    sources = []
    if file is not None:
        sources.append(load_config_file(file))
    if overrides:
        sources.append(dict(overrides))
    for src in sources:
        for key, value in src.items():
            if key.startswith("meta."):
                continue  # reserved manifest bookkeeping, never semantic
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            flat[key] = value
    return flat


def fingerprint(flat: dict) -> str:
    """Stable 16-hex-digit hash of the semantic (non-meta) config."""
    canon = "\n".join(f"{k}={flat[k]}" for k in sorted(flat) if not k.startswith("meta."))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:16]


def _typed(flat, key, kind, empty=None):
    raw = flat[key]
    if raw == "":
        return empty
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: cannot parse {raw!r} as {kind.__name__}") from exc


def parse_dims(text: str) -> tuple:
    try:
        dims = tuple(int(d) for d in text.replace(",", "x").split("x") if d != "")
    except ValueError as exc:
        raise ConfigError(f"net.dims: cannot parse {text!r}") from exc
    if len(dims) < 2:
        raise ConfigError(f"net.dims needs at least 2 layers, got {text!r}")
    return dims


@dataclass
class Experiment:
    """A resolved run: typed objects plus the flat config they came from."""

    flat: dict
    topology: NetworkTopology
    stats: InitStats
    gamma: float
    train_cfg: TrainConfig
    backward: BackwardFn | None
    dataset: str
    data_dir: Path
    train_limit: int | None
    test_limit: int | None

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.flat)


def resolve(flat: dict) -> Experiment:
    """Validate a flat config into an `Experiment`; raises ConfigError."""
    unknown = [k for k in flat if k not in DEFAULTS and not k.startswith("meta.")]
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(DEFAULTS)
    merged.update(flat)

    try:
        lif = LifParams(
            h_th=_typed(merged, "lif.h_th", float),
            dt=_typed(merged, "lif.dt", float),
            t_ref=_typed(merged, "lif.t_ref", float),
            tau=_typed(merged, "lif.tau", float),
        )
        topology = NetworkTopology(
            parse_dims(merged["net.dims"]), seed=_typed(merged, "net.seed", int)
        )
        stats = InitStats(
            v_mean=_typed(merged, "init.v_mean", float),
            v_second=_typed(merged, "init.v_second", float),
            alpha=_typed(merged, "init.alpha", float),
            bias_init=_typed(merged, "init.bias", float),
            gamma=_typed(merged, "init.gamma", float),
        )
        backward = None
        if merged["backward"]:
            backward = parse_backward_fn(merged["backward"])
        train_cfg = TrainConfig(
            mechanism=merged["mechanism"],
            backward_fn=backward,
            epochs=_typed(merged, "train.epochs", int),
            batch_size=_typed(merged, "train.batch_size", int),
            interval_ms=_typed(merged, "train.interval_ms", float),
            settle_ms=_typed(merged, "train.settle_ms", float),
            lr_base=_typed(merged, "train.lr_base", float),
            seed=_typed(merged, "train.seed", int),
            lif=lif,
            allow_g_override=_typed(merged, "train.allow_g_override", bool),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    dataset = merged["data.dataset"]
    data_dir = Path(merged["data.dir"]) if merged["data.dir"] else data_root() / dataset
    return Experiment(
        flat=merged,
        topology=topology,
        stats=stats,
        gamma=stats.gamma,
        train_cfg=train_cfg,
        backward=backward,
        dataset=dataset,
        data_dir=data_dir,
        train_limit=_typed(merged, "data.train_limit", int),
        test_limit=_typed(merged, "data.test_limit", int),
    )


def set_param(flat: dict, path: str, value) -> dict:
    """Return a copy of ``flat`` with one parameter changed.

    Besides literal config keys, two virtual paths are understood:
    ``net.hidden`` rewrites the middle entries of ``net.dims``, and
    ``backward.<param>`` edits one parameter inside the backward spec text.
    """
    out = dict(flat)
    value = str(value)
    if path in DEFAULTS:
        out[path] = value
        return out
    if path == "net.hidden":
        dims = parse_dims(out.get("net.dims", DEFAULTS["net.dims"]))
        out["net.dims"] = "x".join(str(d) for d in (dims[0], *([int(value)] * (len(dims) - 2)), dims[-1]))
        return out
    if path.startswith("backward."):
        name = path.split(".", 1)[1]
        spec_text = out.get("backward", "")
        if not spec_text:
            raise ConfigError(f"cannot set {path!r}: no backward spec configured")
        family, _, body = spec_text.partition(":")
        kv = dict(item.split("=", 1) for item in body.split(",") if item)
        kv[name] = value
        out["backward"] = family + ":" + ",".join(f"{k}={v}" for k, v in kv.items())
        parse_backward_fn(out["backward"])  # validate eagerly
        return out
    raise ConfigError(f"unknown parameter path {path!r}")


def write_manifest(path, flat: dict, command: str, out_dir, extra_meta=None) -> None:
    """Write the run manifest: resolved config plus meta bookkeeping."""
    from . import __version__

    lines = [f"{k} = {flat[k]}" for k in sorted(flat) if not k.startswith("meta.")]
    meta = {
        "meta.fingerprint": fingerprint(flat),
        "meta.command": command,
        "meta.version": __version__,
        "meta.created_utc": datetime.now(timezone.utc).isoformat(),
        "meta.out_dir": str(out_dir),
    }
    if extra_meta:
        meta.update({f"meta.{k}": str(v) for k, v in extra_meta.items()})
    lines += [f"{k} = {v}" for k, v in sorted(meta.items())]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
