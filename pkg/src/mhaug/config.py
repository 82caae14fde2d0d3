"""Run configuration: one JSON document plus dotted ``--set`` overrides.

Sections::

    graph     {"path": FILE} or {"generator": "sbm"|"grid"|"complete"|"star"|"path", ...}
    target    TargetParams fields
    proposal  ProposalParams fields
    chain     burn_in, max_accepted, num_samples, edge_aug, node_aug, k
    model     ModelConfig fields (minus seed) plus trials, vanilla, baseline
    losses    gamma1, gamma2
    verify    tv_tol, db_tol, stat_tol, burn_in, num_samples (oracle chain run)
    output_dir, seed
"""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .data import SbmSpec, gen_complete, gen_grid, gen_path, gen_sbm, gen_star, load_graph
from .distributions import ProposalParams, TargetParams
from .gnn import LossWeights, ModelConfig
from .graph import Graph
from .sampler import ChainConfig

__all__ = ["ConfigError", "RunConfig", "DEFAULTS", "apply_override", "parse_override"]

# trial i trains with model seed ``seed + i`` and chain seed ``seed + i + CHAIN_SEED_OFFSET``
CHAIN_SEED_OFFSET = 1000
_U64 = 2**64


class ConfigError(ValueError):
    """Unknown key, wrong type or out-of-range value in a run config."""


def _field_names(cls, drop=()):
    return {f.name for f in dataclasses.fields(cls)} - set(drop)


_GENERATORS = {
    "sbm": {"generator", "seed"} | _field_names(SbmSpec),
    "grid": {"generator", "rows", "cols"},
    "complete": {"generator", "n"},
    "star": {"generator", "leaves"},
    "path": {"generator", "n"},
}

_SECTIONS = {
    "target": _field_names(TargetParams),
    "proposal": _field_names(ProposalParams),
    "chain": {"burn_in", "max_accepted", "num_samples", "edge_aug", "node_aug", "k"},
    "model": _field_names(ModelConfig, drop=("seed",)) | {"trials", "vanilla", "baseline"},
    "losses": {"gamma1", "gamma2"},
    "verify": {"tv_tol", "db_tol", "stat_tol", "burn_in", "num_samples"},
}

DEFAULTS: dict[str, Any] = {
    "graph": {"generator": "complete", "n": 4},
    "target": {},
    "proposal": {},
    "chain": {},
    "model": {"trials": 1, "vanilla": False, "baseline": False},
    "losses": {},
    "verify": {"tv_tol": 0.02, "db_tol": 1e-12, "stat_tol": 1e-10, "burn_in": 10000,
               "num_samples": 200000},
    "output_dir": "out",
    "seed": 0,
}


def parse_override(text: str) -> tuple[list[str], Any]:
    """Split ``a.b=value``; the value is read as JSON, else kept as a string."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key=value, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(doc: dict, path: list[str], value):
    node = doc
    for part in path[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot set {'.'.join(path)}: {part!r} is not a section")
        node = child
    if path == ["graph", "generator"] and node.get("generator", value) != value:
        # switching generator discards the old generator's parameters
        node.clear()
    node[path[-1]] = value


def _check_keys(section: str, got: dict, allowed: set):
    unknown = sorted(set(got) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _build(cls, section, kwargs):
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}") from None


def _as_int(section, name, value, lo=0):
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ConfigError(f"{section}.{name} must be an integer >= {lo}")
    return value


@dataclass
class RunConfig:
    graph: dict = field(default_factory=lambda: dict(DEFAULTS["graph"]))
    target: TargetParams = field(default_factory=TargetParams)
    proposal: ProposalParams = field(default_factory=ProposalParams)
    chain: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    losses: LossWeights = field(default_factory=LossWeights)
    verify: dict = field(default_factory=lambda: dict(DEFAULTS["verify"]))
    trials: int = 1
    vanilla: bool = False
    baseline: bool = False
    output_dir: str = "out"
    seed: int = 0

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        _check_keys("config", doc, set(DEFAULTS))
        merged = copy.deepcopy(DEFAULTS)
        for key, value in doc.items():
            if key in ("output_dir", "seed"):
                merged[key] = value
            elif not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be an object")
            elif key == "graph":
                merged[key] = dict(value)
            else:
                merged[key].update(value)

        seed = merged["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < _U64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if not isinstance(merged["output_dir"], str):
            raise ConfigError("output_dir must be a string")

        graph = merged["graph"]
        if "path" in graph:
            _check_keys("graph", graph, {"path"})
        else:
            gen = graph.get("generator")
            if gen not in _GENERATORS:
                raise ConfigError(f"graph needs 'path' or a generator in {sorted(_GENERATORS)}")
            _check_keys("graph", graph, _GENERATORS[gen])

        for name, allowed in _SECTIONS.items():
            _check_keys(name, merged[name], allowed)
        target = _build(TargetParams, "target", merged["target"])
        proposal = _build(ProposalParams, "proposal", merged["proposal"])

        model_doc = dict(merged["model"])
        trials = _as_int("model", "trials", model_doc.pop("trials"), lo=1)
        vanilla = bool(model_doc.pop("vanilla"))
        baseline = bool(model_doc.pop("baseline"))
        model = _build(ModelConfig, "model", model_doc)
        losses = _build(LossWeights, "losses", merged["losses"])

        chain = merged["chain"]
        run = cls(graph, target, proposal, chain, model, losses, merged["verify"], trials,
                  vanilla, baseline, merged["output_dir"], seed)
        run.chain_config(seed + trials - 1 + CHAIN_SEED_OFFSET)  # range check now
        for name, value in run.verify.items():
            if name in ("burn_in", "num_samples"):
                _as_int("verify", name, value)
            elif isinstance(value, bool) or not isinstance(value, (int, float)) or not value > 0:
                raise ConfigError(f"verify.{name} must be a positive number")
        return run

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        doc: dict = {}
        if path is not None:
            with open(path, encoding="utf-8") as fh:
                try:
                    doc = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        for text in overrides:
            apply_override(doc, *parse_override(text))
        return cls.from_dict(doc)

    def chain_config(self, seed: int | None = None, **changes) -> ChainConfig:
        kw = dict(self.chain)
        kw.update(changes)
        kw.setdefault("seed", self.seed if seed is None else seed)
        return _build(ChainConfig, "chain", dict(kw, target=self.target, proposal=self.proposal))

    def model_config(self, seed: int) -> ModelConfig:
        return dataclasses.replace(self.model, seed=seed)

    def build_graph(self) -> Graph:
        g = dict(self.graph)
        if "path" in g:
            return load_graph(g["path"])
        gen = g.pop("generator")
        try:
            if gen == "sbm":
                seed = _as_int("graph", "seed", g.pop("seed", 0))
                return gen_sbm(SbmSpec(**g), seed)
            return {"grid": gen_grid, "complete": gen_complete, "star": gen_star,
                    "path": gen_path}[gen](**g)
        except TypeError as exc:
            raise ConfigError(f"graph: {exc}") from None
