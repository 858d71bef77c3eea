"""Experiment pipelines: community selection table, geometric boundary study, active sampling, GXN ablations.

Every pipeline takes a config dataclass and an output directory, writes CSV
tables (plus SVG figures where useful) and a ``manifest.json`` holding the
resolved config. Per-trial seeds are derived from the base seed, so re-running
a manifest reproduces the CSVs byte for byte.
"""

from __future__ import annotations

import json
import warnings
from statistics import fmean
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .generators import (
    SbmSpec,
    apply_boundary_mask,
    bandlimited_signals,
    community_features,
    connected_geometric,
    distance_to_line,
    geometric_radius_for_degree,
    half_plane_mask,
    make_rng,
    random_line,
    sbm,
    two_block_spec,
)
from .graph import Graph
from .gxn import VARIANTS, GcnConfig, GxnTrainConfig, gcn_classifier, train_gxn_graph, train_gxn_vertex
from .io import load_graph, load_labels, load_signals, write_csv, write_json
from .neural_recovery import JointTrainConfig, evaluate_recovery, train_joint
from .neural_sampling import SamplerTrainConfig, neural_sample
from .plot import Series, emit_plot
from .sampling import bls_sample, random_sample, spectral_proxy_sample


class ExperimentError(ValueError):
    pass


def derive_seed(base: int, *keys) -> int:
    """Deterministic 32-bit seed from a base seed and string/int keys."""
    words = [int(base)]
    for k in keys:
        words += list(k.encode()) if isinstance(k, str) else [int(k)]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _tuplify(v):
    return tuple(_tuplify(x) for x in v) if isinstance(v, list) else v


def config_from_dict(cls, data: dict):
    """Build a config dataclass from JSON-like data, rejecting unknown keys."""
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ExperimentError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    return cls(**{k: _tuplify(v) for k, v in data.items()})


def write_manifest(out: Path, name: str, cfg, outputs: list[str]):
    write_json({"experiment": name, "version": __version__, "config": asdict(cfg),
                "outputs": sorted(outputs)}, out / "manifest.json")


def _prepare(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# smaller-community selection table


@dataclass
class SbmTableConfig:
    trials: int = 20
    budget: int = 10
    block_sizes: tuple[int, int] = (600, 200)
    p_similar_degree: tuple[float, float] = (0.02, 0.06)
    p_similar_density: tuple[float, float] = (0.02, 0.02)
    p_between: float = 0.00005
    bandwidth: int = 10
    samplers: tuple[str, ...] = ("bls", "sp1", "sp3", "sp5", "neural-supervised", "neural-unsupervised", "random")
    sampler_epochs: int = 200
    joint_epochs: int = 100
    seed: int = 0
    paper_scale: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        bad = [s for s in self.samplers if s not in SBM_SAMPLER_LABELS]
        if bad:
            raise ExperimentError(f"unknown samplers {bad}; choose from {sorted(SBM_SAMPLER_LABELS)}")

    @property
    def sizes(self) -> tuple[int, int]:
        return (1800, 600) if self.paper_scale else tuple(self.block_sizes)


SBM_SAMPLER_LABELS = {
    "bls": "BLS",
    "sp1": "SP k=1",
    "sp3": "SP k=3",
    "sp5": "SP k=5",
    "neural-supervised": "neural (supervised)",
    "neural-unsupervised": "neural (unsupervised)",
    "random": "random",
}
GRAPH_TYPES = ("similar_degree", "similar_density")


def _select_sbm(name: str, g: Graph, signals: np.ndarray, cfg: SbmTableConfig, seed: int) -> tuple[int, ...]:
    m = cfg.budget
    if name == "bls":
        return bls_sample(g, cfg.bandwidth, m).indices
    if name.startswith("sp"):
        return spectral_proxy_sample(g, int(name[2:]), m).indices
    if name == "neural-unsupervised":
        return neural_sample(g, signals, m, cfg=SamplerTrainConfig(cfg.sampler_epochs, seed=seed)).plan.indices
    if name == "neural-supervised":
        res = train_joint(g, signals, m, JointTrainConfig(epochs=cfg.joint_epochs, mode="supervised", seed=seed))
        return res.plan.indices
    if name == "random":
        return random_sample(g.n, m, seed).indices
    raise ExperimentError(f"unknown sampler {name!r}")


def experiment_sbm_table(cfg: SbmTableConfig, out) -> dict:
    """Fraction of selected vertices falling in the smaller community, per sampler and graph type."""
    out = _prepare(out)
    sizes = cfg.sizes
    small = int(np.argmin(sizes))
    per_trial = []
    fractions = {s: {t: [] for t in GRAPH_TYPES} for s in cfg.samplers}
    for gtype, p_in in zip(GRAPH_TYPES, (cfg.p_similar_degree, cfg.p_similar_density)):
        for trial in range(cfg.trials):
            spec = two_block_spec(sizes, p_in, cfg.p_between, derive_seed(cfg.seed, gtype, trial))
            g = sbm(spec)
            signals = bandlimited_signals(g, cfg.bandwidth)
            for name in cfg.samplers:
                idx = _select_sbm(name, g, signals, cfg, derive_seed(cfg.seed, gtype, trial, name))
                frac = float(np.mean(spec.labels[list(idx)] == small))
                fractions[name][gtype].append(frac)
                per_trial.append((SBM_SAMPLER_LABELS[name], gtype, trial, frac))
    table = {SBM_SAMPLER_LABELS[s]: {t: fmean(v) for t, v in fractions[s].items()} for s in cfg.samplers}
    write_csv(out / "sbm_table.csv", ["sampler", *GRAPH_TYPES],
              [(label, row["similar_degree"], row["similar_density"]) for label, row in table.items()])
    write_csv(out / "sbm_trials.csv", ["sampler", "graph", "trial", "fraction"], per_trial)
    write_manifest(out, "sbm-table", cfg, ["sbm_table.csv", "sbm_trials.csv"])
    return table


# ---------------------------------------------------------------------------
# geometric graphs: boundary-aware selection and recovery


@dataclass
class GeometricConfig:
    n: int = 600
    mean_degree: float = 12.0
    trials: int = 20
    select_budget: int = 10
    recovery_budget: int = 30
    bandwidth: int = 10
    mask_outside: float = 0.0
    sampler_epochs: int = 200
    joint_epochs: int = 200
    recovery: bool = True
    seed: int = 0
    paper_scale: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")

    @property
    def vertices(self) -> int:
        return 1000 if self.paper_scale else self.n


def _geometric_instance(cfg: GeometricConfig, trial: int):
    n = cfg.vertices
    g, _ = connected_geometric(n, geometric_radius_for_degree(n, cfg.mean_degree), derive_seed(cfg.seed, "graph", trial))
    normal, offset = random_line(derive_seed(cfg.seed, "line", trial))
    mask = half_plane_mask(g.positions, normal, offset, 1.0, cfg.mask_outside)
    dist = distance_to_line(g.positions, normal, offset)
    return g, mask, dist


def experiment_geometric(cfg: GeometricConfig, out) -> dict:
    """BLS vs neural selections on smooth and piecewise signals, plus neural recovery errors."""
    out = _prepare(out)
    sel_rows, dist_rows = [], []
    dists: dict[tuple[str, str], list[float]] = {}
    first = None
    for trial in range(cfg.trials):
        g, mask, dist = _geometric_instance(cfg, trial)
        smooth = bandlimited_signals(g, cfg.bandwidth)
        piecewise = apply_boundary_mask(smooth, mask)
        picks = {("BLS", "smooth"): bls_sample(g, cfg.bandwidth, cfg.select_budget).indices}
        picks[("BLS", "piecewise")] = picks[("BLS", "smooth")]
        for stype, sig in (("smooth", smooth), ("piecewise", piecewise)):
            scfg = SamplerTrainConfig(cfg.sampler_epochs, seed=derive_seed(cfg.seed, "neural", stype, trial))
            picks[("neural", stype)] = neural_sample(g, sig, cfg.select_budget, cfg=scfg).plan.indices
        for (sampler, stype), idx in picks.items():
            d = float(np.mean(dist[list(idx)]))
            dists.setdefault((sampler, stype), []).append(d)
            dist_rows.append((trial, sampler, stype, d))
            sel_rows += [(trial, stype, sampler, int(v), float(g.positions[v, 0]), float(g.positions[v, 1]))
                         for v in idx]
        if first is None:
            first = (g, mask, picks)
    summary = {f"{s}/{t}": fmean(v) for (s, t), v in dists.items()}
    write_csv(out / "selections.csv", ["trial", "signal_type", "sampler", "vertex", "x", "y"], sel_rows)
    write_csv(out / "boundary_distance.csv", ["trial", "sampler", "signal_type", "mean_distance"], dist_rows)
    write_csv(out / "boundary_summary.csv", ["sampler", "signal_type", "mean_distance"],
              [(s, t, fmean(v)) for (s, t), v in sorted(dists.items())])
    outputs = ["selections.csv", "boundary_distance.csv", "boundary_summary.csv", "selection.svg"]
    g, mask, picks = first
    pos = g.positions
    series = [Series("side A", list(pos[mask == 1, 0]), list(pos[mask == 1, 1]), "scatter", "#c7d7ea", 1.5),
              Series("side B", list(pos[mask != 1, 0]), list(pos[mask != 1, 1]), "scatter", "#e8d0c0", 1.5)]
    for (sampler, stype), color in ((("BLS", "piecewise"), "#2ca02c"), (("neural", "piecewise"), "#d62728"),
                                    (("neural", "smooth"), "#1f77b4")):
        idx = list(picks[(sampler, stype)])
        series.append(Series(f"{sampler} {stype}", list(pos[idx, 0]), list(pos[idx, 1]), "scatter", color, 4.0))
    emit_plot(series, out / "selection.svg", title="selected vertices (trial 0)", xlim=(0, 1), ylim=(0, 1))
    if cfg.recovery:
        summary.update(_geometric_recovery(cfg, g, mask, out))
        outputs.append("recovery.csv")
    write_manifest(out, "geometric", cfg, outputs)
    return summary


def _geometric_recovery(cfg: GeometricConfig, g: Graph, mask: np.ndarray, out: Path) -> dict:
    basis = bandlimited_signals(g, cfg.bandwidth + 1)
    rows, summary = [], {}
    for stype in ("smooth", "piecewise"):
        sig = basis if stype == "smooth" else apply_boundary_mask(basis, mask)
        train, held = sig[:, :cfg.bandwidth], sig[:, cfg.bandwidth:]
        jcfg = JointTrainConfig(epochs=cfg.joint_epochs, seed=derive_seed(cfg.seed, "joint", stype))
        res = train_joint(g, train, cfg.recovery_budget, jcfg)
        _, rel_train = evaluate_recovery(res.model, g, res.plan, train)
        _, rel_held = evaluate_recovery(res.model, g, res.plan, held)
        rows += [(stype, i, "train", float(e)) for i, e in enumerate(rel_train)]
        rows += [(stype, cfg.bandwidth + i, "held_out", float(e)) for i, e in enumerate(rel_held)]
        summary[f"recovery/{stype}/train"] = float(np.mean(rel_train))
        summary[f"recovery/{stype}/held_out"] = float(np.mean(rel_held))
    write_csv(out / "recovery.csv", ["signal_type", "signal", "split", "relative_error"], rows)
    return summary


# ---------------------------------------------------------------------------
# active sampling for semi-supervised classification


@dataclass
class ActiveConfig:
    block_sizes: tuple[int, ...] = (100, 100, 100)
    p_in: float = 0.1
    p_out: float = 0.01
    n_features: int = 16
    noise: float = 1.0
    budgets: tuple[int, ...] | None = None
    trials: int = 10
    samplers: tuple[str, ...] = ("random", "bls", "sp", "neural")
    bls_bandwidth: int = 10
    sp_order: int = 2
    sampler_epochs: int = 200
    radius: int = 1
    gcn_hidden: int = 16
    gcn_epochs: int = 200
    gcn_lr: float = 0.01
    graph_path: str | None = None
    features_path: str | None = None
    labels_path: str | None = None
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ExperimentError("trials must be >= 1")
        bad = [s for s in self.samplers if s not in ("random", "bls", "sp", "neural")]
        if bad:
            raise ExperimentError(f"unknown samplers {bad}")
        given = [p is not None for p in (self.graph_path, self.features_path, self.labels_path)]
        if any(given) and not all(given):
            raise ExperimentError("graph_path, features_path and labels_path must be given together")
        for p in (self.graph_path, self.features_path, self.labels_path):
            if p is not None and not Path(p).exists():
                raise ExperimentError(f"file not found: {p}")


def _active_dataset(cfg: ActiveConfig, trial: int):
    if cfg.graph_path is not None:
        g = load_graph(cfg.graph_path)
        return g, load_signals(cfg.features_path, g.n), load_labels(cfg.labels_path, g.n)
    c = len(cfg.block_sizes)
    p = np.full((c, c), cfg.p_out)
    np.fill_diagonal(p, cfg.p_in)
    spec = SbmSpec(tuple(cfg.block_sizes), tuple(map(tuple, p)), derive_seed(cfg.seed, "graph", trial))
    g = sbm(spec)
    x = community_features(spec.labels, cfg.n_features, cfg.noise, derive_seed(cfg.seed, "features", trial))
    return g, x, spec.labels


def experiment_active_sampling(cfg: ActiveConfig, out) -> dict:
    """Accuracy of a GCN trained on labels queried at each sampler's selections, per budget."""
    out = _prepare(out)
    rows = []
    for trial in range(cfg.trials):
        g, x, labels = _active_dataset(cfg, trial)
        classes = int(labels.max()) + 1
        budgets = tuple(cfg.budgets) if cfg.budgets else tuple(classes * k for k in range(1, 11))
        if max(budgets) > g.n or min(budgets) < 1:
            raise ExperimentError(f"budgets must lie in 1..{g.n}")
        top = max(budgets)
        orders = {}
        if "random" in cfg.samplers:
            orders["random"] = random_sample(g.n, top, derive_seed(cfg.seed, "random", trial)).indices
        if "sp" in cfg.samplers:
            orders["sp"] = spectral_proxy_sample(g, cfg.sp_order, top).indices
        if "neural" in cfg.samplers:
            scfg = SamplerTrainConfig(cfg.sampler_epochs, seed=derive_seed(cfg.seed, "neural", trial))
            orders["neural"] = neural_sample(g, x, top, radius=cfg.radius, cfg=scfg).plan.indices
        gcfg = GcnConfig(cfg.gcn_hidden, cfg.gcn_epochs, cfg.gcn_lr, derive_seed(cfg.seed, "gcn", trial))
        for b in budgets:
            for name in cfg.samplers:
                if name == "bls":
                    idx = bls_sample(g, min(cfg.bls_bandwidth, b), b).indices
                else:
                    idx = orders[name][:b]
                mask = np.zeros(g.n, dtype=bool)
                mask[list(idx)] = True
                pred = gcn_classifier(g, x, mask, labels, gcfg, n_classes=classes).predictions
                acc = float(np.mean(pred[~mask] == labels[~mask])) if (~mask).any() else float("nan")
                rows.append((name, b, trial, acc))
    rows.sort(key=lambda r: (cfg.samplers.index(r[0]), r[1], r[2]))
    write_csv(out / "active.csv", ["sampler", "budget", "trial", "accuracy"], rows)
    summary: dict[str, dict[int, float]] = {}
    for name in cfg.samplers:
        per = {}
        for b in sorted({r[1] for r in rows}):
            per[b] = fmean([r[3] for r in rows if r[0] == name and r[1] == b])
        summary[name] = per
    write_csv(out / "active_summary.csv", ["sampler", "budget", "mean_accuracy"],
              [(s, b, a) for s, per in summary.items() for b, a in per.items()])
    emit_plot([Series(s, list(map(float, per)), list(per.values())) for s, per in summary.items()],
              out / "active.svg", title="accuracy vs labeled vertices", xlabel="budget", ylabel="accuracy")
    write_manifest(out, "active", cfg, ["active.csv", "active_summary.csv", "active.svg"])
    return summary


# ---------------------------------------------------------------------------
# GXN crossing ablations


@dataclass
class GxnExpConfig:
    seeds: int = 5
    tasks: tuple[str, ...] = ("vertex", "graph")
    variants: tuple[str, ...] = ("full", "noCross", "early", "late", "up-only", "down-only")
    block_sizes: tuple[int, int] = (100, 100)
    p_in: float = 0.05
    p_out: float = 0.01
    labeled_per_class: int = 10
    n_features: int = 8
    noise: float = 1.0
    n_graphs: int = 24
    graph_size: int = 24
    train_graphs: int = 12
    epochs: int = 100
    graph_epochs: int = 80
    lr: float = 0.005
    graph_lr: float = 0.01
    hidden: int = 32
    reduction: str = "fused"
    seed: int = 0

    def __post_init__(self):
        if self.seeds < 1:
            raise ExperimentError("seeds must be >= 1")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ExperimentError(f"unknown variants {bad}")
        if any(t not in ("vertex", "graph") for t in self.tasks):
            raise ExperimentError("tasks must be 'vertex' and/or 'graph'")


def vertex_task(cfg: GxnExpConfig, seed: int):
    """Two-block SBM with noisy community features and ``labeled_per_class`` labels per block."""
    spec = two_block_spec(tuple(cfg.block_sizes), (cfg.p_in, cfg.p_in), cfg.p_out, derive_seed(seed, "graph"))
    g = sbm(spec)
    labels = spec.labels
    x = community_features(labels, cfg.n_features, cfg.noise, derive_seed(seed, "features"))
    rng = make_rng(derive_seed(seed, "labels"))
    mask = np.zeros(g.n, dtype=bool)
    for c in range(2):
        members = np.flatnonzero(labels == c)
        mask[rng.choice(members, cfg.labeled_per_class, replace=False)] = True
    return g, x, labels, mask


def graph_task(cfg: GxnExpConfig, seed: int):
    """Two-community graphs (label 1) vs Erdos-Renyi graphs of matching mean degree (label 0).

    Features are a constant column and the scaled degree.
    """
    rng = make_rng(derive_seed(seed, "dataset"))
    half = cfg.graph_size // 2
    p_in, p_out = 0.5, 0.03
    p_er = (p_in * (half - 1) + p_out * half) / (cfg.graph_size - 1)
    data, labels = [], []
    for i in range(cfg.n_graphs):
        label = i % 2
        gseed = int(rng.integers(2**31))
        if label:
            spec = two_block_spec((half, cfg.graph_size - half), (p_in, p_in), p_out, gseed)
        else:
            spec = SbmSpec((cfg.graph_size,), ((p_er,),), gseed)
        g = sbm(spec)
        x = np.column_stack([np.ones(g.n), g.degrees / max(1.0, g.degrees.max())])
        data.append((g, x))
        labels.append(label)
    order = rng.permutation(cfg.n_graphs)
    return [data[i] for i in order], np.asarray(labels)[order], np.arange(cfg.train_graphs)


def experiment_gxn(cfg: GxnExpConfig, out) -> dict:
    """Accuracy of every crossing variant over ``seeds`` seeds for each task."""
    out = _prepare(out)
    runs = []
    for task in cfg.tasks:
        for s in range(cfg.seeds):
            seed = derive_seed(cfg.seed, task, s)
            for variant in cfg.variants:
                vertex = task == "vertex"
                tcfg = GxnTrainConfig(epochs=cfg.epochs if vertex else cfg.graph_epochs,
                                      lr=cfg.lr if vertex else cfg.graph_lr,
                                      hidden=cfg.hidden, reduction=cfg.reduction, variant=variant,
                                      seed=derive_seed(seed, "model"))
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    if vertex:
                        g, x, labels, mask = vertex_task(cfg, seed)
                        acc = train_gxn_vertex(g, x, labels, mask, tcfg).test_accuracy
                    else:
                        data, labels, train_idx = graph_task(cfg, seed)
                        acc = train_gxn_graph(data, labels, train_idx, tcfg).test_accuracy
                runs.append((task, variant, s, float(acc)))
    write_csv(out / "gxn_runs.csv", ["task", "variant", "seed", "accuracy"], runs)
    summary = {}
    rows = []
    for task in cfg.tasks:
        for variant in cfg.variants:
            accs = [r[3] for r in runs if r[0] == task and r[1] == variant]
            mean, std = fmean(accs), float(np.std(accs))
            summary[f"{task}/{variant}"] = mean
            rows.append((task, variant, mean, std))
    write_csv(out / "gxn_summary.csv", ["task", "variant", "mean_accuracy", "std_accuracy"], rows)
    write_manifest(out, "gxn", cfg, ["gxn_runs.csv", "gxn_summary.csv"])
    return summary


# ---------------------------------------------------------------------------
# registry and manifest replay


EXPERIMENTS = {
    "sbm-table": (SbmTableConfig, experiment_sbm_table),
    "geometric": (GeometricConfig, experiment_geometric),
    "active": (ActiveConfig, experiment_active_sampling),
    "gxn": (GxnExpConfig, experiment_gxn),
}


def run_experiment(name: str, config: dict, out) -> dict:
    if name not in EXPERIMENTS:
        raise ExperimentError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}")
    cls, fn = EXPERIMENTS[name]
    return fn(config_from_dict(cls, config), out)


def load_config_file(path) -> tuple[str | None, dict]:
    """Read a plain config JSON or a manifest; returns ``(experiment name or None, config dict)``."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ExperimentError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ExperimentError(f"{path}: config must be a JSON object")
    if "experiment" in data and "config" in data:
        return data["experiment"], dict(data["config"])
    return None, data


def rerun_manifest(manifest_path, out) -> dict:
    name, config = load_config_file(manifest_path)
    if name is None:
        raise ExperimentError(f"{manifest_path} is not a manifest")
    return run_experiment(name, config, out)

