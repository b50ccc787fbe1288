"""Flat ``key = value`` experiment configs: strict schema and sweep expansion.

A config file is a sequence of ``key = value`` lines (``#`` starts a comment,
blank lines are ignored). The schema is strict: unknown keys, duplicate keys,
malformed values, and inapplicable keys (for example ``bits`` without
``compression = quant``) are all errors that name the offending key. A single
file may declare sweep axes -- ``seeds`` plus list-valued ``bits`` / ``alpha``
-- whose cartesian product expands into one run leaf per combination, capped
by ``max_runs``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .algorithms import (
    ALGORITHMS,
    COMPRESSED_ALGORITHMS,
    TWO_ROUND_ALGORITHMS,
    RunConfig,
)
from .compression import CompressionOp, sign_scaled, stochastic_quant, top_k
from .datagen import (
    Dataset,
    iid_partition,
    make_blobs,
    make_spirals,
    partition_dirichlet,
)
from .errors import ConfigError, SaddleError
from .models import (
    GradOracle,
    LogisticRegressionOracle,
    MLPOracle,
    QuadraticOracle,
)
from .optim import parse_lr_schedule
from .topology import MixingMatrix, build_complete, build_ring, build_torus

__all__ = [
    "RunLeaf",
    "SurfaceSpec",
    "ExperimentSpec",
    "parse_config_text",
    "build_experiment",
    "load_experiment",
    "parse_run_name",
]

_TOPOLOGIES = ("ring", "torus", "complete")
_COMPRESSIONS = ("none", "quant", "topk", "sign")
_DATASETS = ("blobs", "spirals", "quadratic")
_MODELS = ("logreg", "mlp")
_PARTITIONS = ("iid", "dirichlet")


# ---------------------------------------------------------------------------
# value parsers


def _parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {text!r}") from None


def _parse_float(key: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {text!r}") from None
    if not np.isfinite(value):
        raise ConfigError(f"key {key!r}: expected a finite number, got {text!r}")
    return value


def _parse_bool(key: str, text: str) -> bool:
    lowered = text.lower()
    if lowered == "true":
        return True
    if lowered == "false":
        return False
    raise ConfigError(f"key {key!r}: expected true or false, got {text!r}")


def _split_list(key: str, text: str) -> list[str]:
    tokens = [tok.strip() for tok in text.split(",")]
    if any(not tok for tok in tokens):
        raise ConfigError(f"key {key!r}: empty element in list {text!r}")
    return tokens


def _parse_int_list(key: str, text: str) -> tuple[int, ...]:
    return tuple(_parse_int(key, tok) for tok in _split_list(key, text))


def _parse_float_list(key: str, text: str) -> tuple[float, ...]:
    return tuple(_parse_float(key, tok) for tok in _split_list(key, text))


def _parse_str(key: str, text: str) -> str:
    return text


_REQUIRED = object()

# key -> (parser, default); _REQUIRED marks keys every config must set.
_SCHEMA: dict[str, tuple] = {
    "algorithm": (_parse_str, _REQUIRED),
    "agents": (_parse_int, _REQUIRED),
    "topology": (_parse_str, _REQUIRED),
    "torus_rows": (_parse_int, None),
    "torus_cols": (_parse_int, None),
    "rounds": (_parse_int, _REQUIRED),
    "eta": (_parse_float, _REQUIRED),
    "rho": (_parse_float, 0.0),
    "beta": (_parse_float, 0.0),
    "mu": (_parse_float, None),
    "gamma": (_parse_float, 1.0),
    "batch_size": (_parse_int, 0),
    "seed": (_parse_int, 0),
    "seeds": (_parse_int_list, None),
    "lr_schedule": (_parse_str, None),
    "nesterov": (_parse_bool, False),
    "compression": (_parse_str, "none"),
    "bits": (_parse_int_list, None),
    "fraction": (_parse_float, None),
    "dataset": (_parse_str, _REQUIRED),
    "classes": (_parse_int, 10),
    "per_class": (_parse_int, 100),
    "test_per_class": (_parse_int, None),
    "d_in": (_parse_int, 2),
    "spread": (_parse_float, 0.5),
    "noise": (_parse_float, 0.1),
    "data_seed": (_parse_int, 0),
    "model": (_parse_str, None),
    "hidden": (_parse_int, 16),
    "partition": (_parse_str, "iid"),
    "alpha": (_parse_float_list, None),
    "quad_dim": (_parse_int, 1),
    "lambda_max_rounds": (_parse_int_list, ()),
    "variance_diagnostics": (_parse_bool, False),
    "loss_surface": (_parse_bool, False),
    "surface_extent": (_parse_float, 1.0),
    "surface_grid": (_parse_int, 21),
    "out_dir": (_parse_str, "out"),
    "max_runs": (_parse_int, 256),
}


def parse_config_text(text: str) -> dict[str, str]:
    """Split config text into a raw ``{key: value-string}`` mapping.

    Enforces line shape, known keys, and no duplicates; typed parsing and
    cross-field checks happen in :func:`build_experiment`.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"line {lineno}: expected 'key = value', got {stripped!r}"
            )
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: missing key before '='")
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if not value:
            raise ConfigError(f"line {lineno}: key {key!r} has an empty value")
        raw[key] = value
    return raw


# ---------------------------------------------------------------------------
# experiment spec


@dataclass(frozen=True)
class SurfaceSpec:
    """Loss-surface grid request attached to a run leaf."""

    extent: float
    grid: int


@dataclass(frozen=True)
class RunLeaf:
    """One fully-resolved run inside a sweep."""

    name: str  # output file stem, e.g. "qgm_b8_s1"
    group: str  # name minus the seed tag; summary rows aggregate over it
    seed: int
    config: RunConfig
    diagnostics: bool
    surface: SurfaceSpec | None


@dataclass(frozen=True)
class ExperimentSpec:
    """A validated config: output directory plus every sweep leaf."""

    out_dir: str
    leaves: tuple[RunLeaf, ...]


def _choice(key: str, value: str, options: tuple[str, ...]) -> str:
    if value not in options:
        raise ConfigError(
            f"key {key!r}: expected one of {', '.join(options)}; got {value!r}"
        )
    return value


def _forbid(provided: set[str], keys: tuple[str, ...], why: str) -> None:
    for key in keys:
        if key in provided:
            raise ConfigError(f"key {key!r} does not apply: {why}")


def _positive(key: str, value: float) -> float:
    if not value > 0:
        raise ConfigError(f"key {key!r} must be > 0, got {value}")
    return value


def _non_negative_int(key: str, value: int) -> int:
    if value < 0:
        raise ConfigError(f"key {key!r} must be >= 0, got {value}")
    return value


def _build_topology(cfg: dict, provided: set[str]) -> MixingMatrix:
    kind = _choice("topology", cfg["topology"], _TOPOLOGIES)
    n = cfg["agents"]
    if n < 1:
        raise ConfigError(f"key 'agents' must be >= 1, got {n}")
    if kind != "torus":
        _forbid(
            provided,
            ("torus_rows", "torus_cols"),
            f"topology is {kind!r}, not 'torus'",
        )
    try:
        if kind == "ring":
            return build_ring(n)
        if kind == "complete":
            return build_complete(n)
        if cfg["torus_rows"] is None or cfg["torus_cols"] is None:
            raise ConfigError(
                "topology 'torus' requires both torus_rows and torus_cols"
            )
        rows, cols = cfg["torus_rows"], cfg["torus_cols"]
        if rows * cols != n:
            raise ConfigError(
                f"torus_rows * torus_cols must equal agents: {rows} * {cols} != {n}"
            )
        return build_torus(rows, cols)
    except ConfigError:
        raise
    except SaddleError as exc:
        raise ConfigError(f"topology: {exc}") from exc


def _compression_ops(cfg: dict, provided: set[str]) -> list[tuple[str, CompressionOp | None]]:
    """Return (tag, op) pairs -- one per swept compression level."""
    kind = _choice("compression", cfg["compression"], _COMPRESSIONS)
    algorithm = cfg["algorithm"]
    compressed = algorithm in COMPRESSED_ALGORITHMS
    if compressed and kind == "none":
        raise ConfigError(
            f"algorithm {algorithm!r} requires the compression key "
            "(quant, topk or sign)"
        )
    if not compressed and kind != "none":
        raise ConfigError(
            f"algorithm {algorithm!r} does not communicate compressed payloads; "
            "remove the compression key or pick a comp_* algorithm"
        )
    if kind != "quant":
        _forbid(provided, ("bits",), f"compression is {kind!r}, not 'quant'")
    if kind != "topk":
        _forbid(provided, ("fraction",), f"compression is {kind!r}, not 'topk'")
    if kind == "none":
        return [("", None)]
    if kind == "sign":
        return [("_sign", sign_scaled())]
    try:
        if kind == "quant":
            if cfg["bits"] is None:
                raise ConfigError("compression 'quant' requires the bits key")
            values = cfg["bits"]
            if len(set(values)) != len(values):
                raise ConfigError("key 'bits': duplicate sweep values")
            return [(f"_b{b}", stochastic_quant(b)) for b in values]
        if cfg["fraction"] is None:
            raise ConfigError("compression 'topk' requires the fraction key")
        return [(f"_k{_fmt(cfg['fraction'])}", top_k(cfg["fraction"]))]
    except ConfigError:
        raise
    except SaddleError as exc:
        raise ConfigError(f"compression: {exc}") from exc


def _fmt(value: float) -> str:
    """Compact float tag for file stems (0.3 -> '0.3', 100.0 -> '100.0')."""
    return repr(float(value))


def _build_problem(
    cfg: dict, alpha: float | None
) -> tuple[tuple[GradOracle, ...], Dataset | None, Dataset | None, tuple | None]:
    n = cfg["agents"]
    if cfg["dataset"] == "quadratic":
        dim = cfg["quad_dim"]
        if dim < 1:
            raise ConfigError(f"key 'quad_dim' must be >= 1, got {dim}")
        centers = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
        oracles = tuple(
            QuadraticOracle(np.eye(dim), np.full(dim, c)) for c in centers
        )
        return oracles, None, None, None

    if cfg["dataset"] == "blobs":
        train = make_blobs(
            cfg["classes"], cfg["per_class"], cfg["d_in"], cfg["spread"],
            cfg["data_seed"], "train",
        )
        test = make_blobs(
            cfg["classes"], cfg["test_per_class"], cfg["d_in"], cfg["spread"],
            cfg["data_seed"], "test",
        )
    else:  # spirals
        train = make_spirals(cfg["per_class"], cfg["noise"], cfg["data_seed"], "train")
        test = make_spirals(
            cfg["test_per_class"], cfg["noise"], cfg["data_seed"], "test"
        )

    try:
        if cfg["partition"] == "iid":
            plan = iid_partition(train, n, cfg["data_seed"])
        else:
            plan = partition_dirichlet(train, n, alpha, cfg["data_seed"])
    except SaddleError as exc:
        raise ConfigError(f"partition: {exc}") from exc
    shards = tuple(plan.shard_indices(i) for i in range(n))

    if cfg["model"] == "logreg":
        oracle: GradOracle = LogisticRegressionOracle(train.d_in, train.n_classes)
    else:
        oracle = MLPOracle(train.d_in, cfg["hidden"], train.n_classes)
    return (oracle,) * n, train, test, shards


def build_experiment(raw: dict[str, str]) -> ExperimentSpec:
    """Typed parse + cross-field validation + sweep expansion."""
    provided = set(raw)
    cfg: dict = {}
    for key, (parser, default) in _SCHEMA.items():
        if key in raw:
            cfg[key] = parser(key, raw[key])
        elif default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        else:
            cfg[key] = default

    algorithm = cfg["algorithm"]
    if algorithm not in ALGORITHMS:
        raise ConfigError(
            f"key 'algorithm': expected one of {', '.join(ALGORITHMS)}; "
            f"got {algorithm!r}"
        )
    _non_negative_int("rounds", cfg["rounds"])
    _positive("eta", cfg["eta"])
    _non_negative_int("batch_size", cfg["batch_size"])
    _non_negative_int("data_seed", cfg["data_seed"])
    if cfg["max_runs"] < 1:
        raise ConfigError(f"key 'max_runs' must be >= 1, got {cfg['max_runs']}")

    # momentum coupling: mu follows beta unless set explicitly
    if cfg["mu"] is None:
        cfg["mu"] = cfg["beta"]

    if cfg["nesterov"] and algorithm not in TWO_ROUND_ALGORITHMS:
        raise ConfigError(
            "key 'nesterov' applies only to ngm-family algorithms "
            "(ngm, n_saddle, comp_ngm, comp_n_saddle)"
        )

    schedule = None
    if cfg["lr_schedule"] is not None:
        try:
            schedule = parse_lr_schedule(cfg["lr_schedule"])
        except SaddleError as exc:
            raise ConfigError(f"key 'lr_schedule': {exc}") from exc

    topology = _build_topology(cfg, provided)
    comp_levels = _compression_ops(cfg, provided)

    # dataset / model / partition applicability
    dataset = _choice("dataset", cfg["dataset"], _DATASETS)
    if dataset == "quadratic":
        _forbid(
            provided,
            ("model", "hidden", "partition", "alpha", "classes", "per_class",
             "test_per_class", "d_in", "spread", "noise", "data_seed",
             "batch_size"),
            "dataset 'quadratic' has no samples, model or partition",
        )
        alphas: tuple[float | None, ...] = (None,)
    else:
        if dataset == "spirals":
            _forbid(
                provided,
                ("classes", "d_in", "spread", "quad_dim"),
                "dataset 'spirals' is a fixed two-class planar task",
            )
        else:
            _forbid(provided, ("noise", "quad_dim"), "dataset is 'blobs'")
        if cfg["model"] is None:
            raise ConfigError(f"dataset {dataset!r} requires the model key")
        _choice("model", cfg["model"], _MODELS)
        if cfg["model"] != "mlp":
            _forbid(provided, ("hidden",), "model is 'logreg', not 'mlp'")
        _choice("partition", cfg["partition"], _PARTITIONS)
        if cfg["partition"] == "dirichlet":
            if cfg["alpha"] is None:
                raise ConfigError("partition 'dirichlet' requires the alpha key")
            if len(set(cfg["alpha"])) != len(cfg["alpha"]):
                raise ConfigError("key 'alpha': duplicate sweep values")
            alphas = cfg["alpha"]
        else:
            _forbid(provided, ("alpha",), "partition is 'iid', not 'dirichlet'")
            alphas = (None,)
        if cfg["test_per_class"] is None:
            cfg["test_per_class"] = cfg["per_class"]

    # seeds
    if cfg["seeds"] is not None:
        if "seed" in provided:
            raise ConfigError("give either 'seed' or 'seeds', not both")
        seeds = cfg["seeds"]
        if len(set(seeds)) != len(seeds):
            raise ConfigError("key 'seeds': duplicate values")
    else:
        seeds = (cfg["seed"],)
    for s in seeds:
        if s < 0:
            raise ConfigError(f"key 'seeds': seeds must be >= 0, got {s}")

    # diagnostics
    diagnostics = bool(cfg["lambda_max_rounds"]) or cfg["variance_diagnostics"]
    surface = None
    if cfg["loss_surface"]:
        extent = _positive("surface_extent", cfg["surface_extent"])
        grid = cfg["surface_grid"]
        if grid < 3 or grid % 2 == 0:
            raise ConfigError(
                f"key 'surface_grid' must be an odd integer >= 3, got {grid}"
            )
        surface = SurfaceSpec(extent=extent, grid=grid)
    else:
        _forbid(
            provided,
            ("surface_extent", "surface_grid"),
            "loss_surface is false",
        )

    total = len(comp_levels) * len(alphas) * len(seeds)
    if total > cfg["max_runs"]:
        raise ConfigError(
            f"sweep expands to {total} runs, over the max_runs cap "
            f"of {cfg['max_runs']}"
        )

    leaves: list[RunLeaf] = []
    for comp_tag, op in comp_levels:
        for alpha in alphas:
            oracles, train, test, shards = _build_problem(cfg, alpha)
            alpha_tag = f"_a{_fmt(alpha)}" if alpha is not None else ""
            for seed in seeds:
                group = f"{algorithm}{comp_tag}{alpha_tag}"
                name = f"{group}_s{seed}"
                try:
                    run_config = RunConfig(
                        algorithm=algorithm,
                        topology=topology,
                        oracles=oracles,
                        eta=cfg["eta"],
                        rounds=cfg["rounds"],
                        seed=seed,
                        rho=cfg["rho"],
                        beta=cfg["beta"],
                        mu=cfg["mu"],
                        gamma=cfg["gamma"],
                        batch_size=cfg["batch_size"],
                        compression=op,
                        train=train,
                        test=test,
                        shards=shards,
                        lr_schedule=schedule,
                        nesterov=cfg["nesterov"],
                        lambda_max_rounds=tuple(cfg["lambda_max_rounds"]),
                        variance_diagnostics=cfg["variance_diagnostics"],
                    )
                except SaddleError as exc:
                    raise ConfigError(f"invalid run config: {exc}") from exc
                leaves.append(
                    RunLeaf(
                        name=name,
                        group=group,
                        seed=seed,
                        config=run_config,
                        diagnostics=diagnostics,
                        surface=surface,
                    )
                )
    return ExperimentSpec(out_dir=cfg["out_dir"], leaves=tuple(leaves))


def load_experiment(path: str | Path) -> ExperimentSpec:
    """Read, parse and validate a config file into an ExperimentSpec."""
    text = Path(path).read_text(encoding="utf-8")
    return build_experiment(parse_config_text(text))


_RUN_NAME = re.compile(
    r"^(?P<algorithm>[a-z_]+?)"
    r"(?:_b(?P<bits>\d+)|_k(?P<fraction>[0-9.]+)|_(?P<sign>sign))?"
    r"(?:_a(?P<alpha>[0-9.eE+-]+))?"
    r"_s(?P<seed>\d+)$"
)


def parse_run_name(stem: str) -> dict | None:
    """Decode a run-CSV file stem back into its sweep coordinates.

    Returns None when the stem is not a run name produced by this module
    (callers use that to skip summary/diagnostic files).
    """
    match = _RUN_NAME.match(stem)
    if match is None or match.group("algorithm") not in ALGORITHMS:
        return None
    bits = match.group("bits")
    fraction = match.group("fraction")
    compression = "none"
    if bits is not None:
        compression = "quant"
    elif fraction is not None:
        compression = "topk"
    elif match.group("sign") is not None:
        compression = "sign"
    alpha = match.group("alpha")
    return {
        "algorithm": match.group("algorithm"),
        "compression": compression,
        "bits": int(bits) if bits is not None else None,
        "fraction": float(fraction) if fraction is not None else None,
        "alpha": float(alpha) if alpha is not None else None,
        "seed": int(match.group("seed")),
        "group": stem[: stem.rfind("_s")],
    }
