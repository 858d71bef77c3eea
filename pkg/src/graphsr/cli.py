"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 data or validation error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .autodiff import load_checkpoint, save_checkpoint
from .experiments import EXPERIMENTS, ExperimentError, load_config_file, run_experiment
from .generators import (
    apply_boundary_mask,
    bandlimited_signals,
    community_features,
    connected_geometric,
    geometric_radius_for_degree,
    half_plane_mask,
    random_line,
    sbm,
    SbmSpec,
)
from .graph import FilterSpec, GraphError
from .io import (
    load_graph,
    load_selection,
    load_signals,
    save_graph,
    save_labels,
    save_selection,
    save_signals,
    write_csv,
    write_json,
)
from .neural_recovery import JointTrainConfig, UnrolledRecovery, evaluate_recovery, train_joint, unrolled_forward
from .neural_sampling import SamplerTrainConfig, neural_sample
from .recovery import build_recovery_operator, recover_closed_form, recover_iterative
from .sampling import bls_sample, random_sample, spectral_proxy_sample

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


COMMAND_DEFAULTS = {
    "gen": dict(kind=None, sizes="600,200", p_in="0.02,0.02", p_out=0.00005, n=600, degree=12.0,
                bandwidth=10, piecewise=False, features=0, noise=1.0, seed=0),
    "sample": dict(graph=None, signals=None, method="neural", m=10, bandwidth=10, order=2, epochs=200,
                   radius=1, dim=32, seed=0),
    "recover": dict(graph=None, signals=None, selection=None, method="closed-form", filter="1,-1",
                    iters=500, step_size=None, checkpoint=None, seed=0),
    "train-sr": dict(graph=None, signals=None, m=30, epochs=200, lr=0.05, mode="supervised",
                     loss_weight=1.0, layers=8, degree=3, refresh_every=5, seed=0),
}
REQUIRED = {"gen": ["kind"], "sample": ["graph", "signals"], "recover": ["graph", "signals", "selection"],
            "train-sr": ["graph", "signals"]}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _resolve(cmd: str, args: argparse.Namespace) -> dict:
    """Defaults, then the ``--config`` file, then explicitly given flags."""
    cfg = dict(COMMAND_DEFAULTS[cmd])
    if args.config:
        name, data = load_config_file(args.config)
        if name is not None and name != cmd:
            raise UsageError(f"{args.config} is a manifest for {name!r}, not {cmd!r}")
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise ExperimentError(f"unknown {cmd} config keys: {', '.join(unknown)}")
        cfg.update(data)
    for key in cfg:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    missing = [k for k in REQUIRED[cmd] if cfg.get(k) is None]
    if missing:
        raise UsageError(f"{cmd}: missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _manifest(out: Path, cmd: str, cfg: dict, outputs: list[str]):
    write_json({"experiment": cmd, "version": __version__, "config": cfg, "outputs": sorted(outputs)},
               out / "manifest.json")


# ---------------------------------------------------------------------------
# commands


def cmd_gen(cfg: dict, out: Path) -> list[str]:
    outputs = ["graph.txt", "signals.csv"]
    if cfg["kind"] == "sbm":
        sizes = _ints(cfg["sizes"])
        p_in = _floats(cfg["p_in"])
        if len(p_in) != len(sizes):
            raise ExperimentError("--p-in needs one probability per block")
        p = np.full((len(sizes), len(sizes)), float(cfg["p_out"]))
        np.fill_diagonal(p, p_in)
        spec = SbmSpec(sizes, tuple(map(tuple, p)), int(cfg["seed"]))
        g = sbm(spec)
        save_labels(spec.labels, out / "labels.csv")
        outputs.append("labels.csv")
        signals = bandlimited_signals(g, int(cfg["bandwidth"]))
        if int(cfg["features"]) > 0:
            save_signals(community_features(spec.labels, int(cfg["features"]), float(cfg["noise"]), int(cfg["seed"])),
                         out / "features.csv")
            outputs.append("features.csv")
    elif cfg["kind"] == "geometric":
        n = int(cfg["n"])
        g, _ = connected_geometric(n, geometric_radius_for_degree(n, float(cfg["degree"])), int(cfg["seed"]))
        save_signals(g.positions, out / "positions.csv")
        outputs.append("positions.csv")
        signals = bandlimited_signals(g, int(cfg["bandwidth"]))
        if cfg["piecewise"]:
            normal, offset = random_line(int(cfg["seed"]))
            mask = half_plane_mask(g.positions, normal, offset)
            signals = apply_boundary_mask(signals, mask)
            save_signals(mask, out / "mask.csv")
            outputs.append("mask.csv")
    else:
        raise UsageError("--kind must be 'sbm' or 'geometric'")
    save_graph(g, out / "graph.txt")
    save_signals(signals, out / "signals.csv")
    return outputs


def cmd_sample(cfg: dict, out: Path) -> list[str]:
    g = load_graph(cfg["graph"])
    x = load_signals(cfg["signals"], g.n)
    m, seed, method = int(cfg["m"]), int(cfg["seed"]), cfg["method"]
    trace: list[float] = []
    outputs = ["selection.json"]
    if method == "random":
        plan = random_sample(g.n, m, seed)
    elif method == "bls":
        plan = bls_sample(g, int(cfg["bandwidth"]), m)
    elif method == "sp":
        plan = spectral_proxy_sample(g, int(cfg["order"]), m)
    elif method == "neural":
        sel = neural_sample(g, x, m, dim=int(cfg["dim"]), radius=int(cfg["radius"]),
                            cfg=SamplerTrainConfig(int(cfg["epochs"]), seed=seed))
        plan, trace = sel.plan, sel.criterion_trace
        save_checkpoint(out / "affinity.ckpt", sel.net.state_dict())
        outputs.append("affinity.ckpt")
    else:
        raise UsageError("--method must be one of random, bls, sp, neural")
    save_selection(plan, out / "selection.json", trace)
    return outputs


def cmd_recover(cfg: dict, out: Path) -> list[str]:
    g = load_graph(cfg["graph"])
    x = load_signals(cfg["signals"], g.n)
    plan, _ = load_selection(cfg["selection"])
    if plan.n != g.n:
        raise GraphError(f"selection covers {plan.n} vertices, graph has {g.n}")
    idx = list(plan.indices)
    y = x[idx] * plan.attention[idx][:, None]
    method = cfg["method"]
    if method in ("closed-form", "iterative"):
        op = build_recovery_operator(g, FilterSpec(_floats(cfg["filter"])), plan)
        if method == "closed-form":
            x_hat = recover_closed_form(op, plan, y)
        else:
            step = None if cfg["step_size"] is None else float(cfg["step_size"])
            x_hat, _ = recover_iterative(op, plan, y, step, int(cfg["iters"]))
    elif method == "unrolled":
        if not cfg["checkpoint"]:
            raise UsageError("--method unrolled needs --checkpoint")
        state = load_checkpoint(cfg["checkpoint"])
        if "recovery.h" not in state:
            raise ExperimentError(f"{cfg['checkpoint']} holds no recovery coefficients")
        x_hat = unrolled_forward(UnrolledRecovery.from_array(state["recovery.h"]), g, plan, y)
    else:
        raise UsageError("--method must be closed-form, iterative or unrolled")
    rel = np.linalg.norm(x_hat - x, axis=0) / np.maximum(np.linalg.norm(x, axis=0), 1e-300)
    save_signals(x_hat, out / "recovered.csv")
    write_csv(out / "recovery_report.csv", ["signal", "relative_error"], [(i, float(e)) for i, e in enumerate(rel)])
    return ["recovered.csv", "recovery_report.csv"]


def cmd_train_sr(cfg: dict, out: Path) -> list[str]:
    g = load_graph(cfg["graph"])
    x = load_signals(cfg["signals"], g.n)
    jcfg = JointTrainConfig(epochs=int(cfg["epochs"]), lr=float(cfg["lr"]), loss_weight=float(cfg["loss_weight"]),
                            mode=cfg["mode"], seed=int(cfg["seed"]), refresh_every=int(cfg["refresh_every"]),
                            layers=int(cfg["layers"]), degree=int(cfg["degree"]))
    res = train_joint(g, x, int(cfg["m"]), jcfg)
    state = res.net.state_dict()
    state.update(res.model.state_dict())
    save_checkpoint(out / "model.ckpt", state)
    save_selection(res.plan, out / "selection.json")
    write_csv(out / "trace.csv", ["epoch", "recovery_loss", "total_loss"],
              [(i, r, t) for i, (r, t) in enumerate(zip(res.recovery_trace, res.loss_trace))])
    _, rel = evaluate_recovery(res.model, g, res.plan, x)
    write_csv(out / "recovery_report.csv", ["signal", "relative_error"], [(i, float(e)) for i, e in enumerate(rel)])
    return ["model.ckpt", "selection.json", "trace.csv", "recovery_report.csv"]


COMMANDS = {"gen": cmd_gen, "sample": cmd_sample, "recover": cmd_recover, "train-sr": cmd_train_sr}


def run_exp(args: argparse.Namespace) -> dict:
    config: dict = {}
    if args.config:
        name, config = load_config_file(args.config)
        if name is not None and name != args.name:
            raise UsageError(f"{args.config} is a manifest for {name!r}, not {args.name!r}")
    if args.seed is not None:
        config["seed"] = args.seed
    if args.trials is not None:
        config["seeds" if args.name == "gxn" else "trials"] = args.trials
    if args.paper_scale:
        if args.name not in ("sbm-table", "geometric"):
            raise UsageError("--paper-scale applies to sbm-table and geometric only")
        config["paper_scale"] = True
    if args.budgets is not None:
        if args.name != "active":
            raise UsageError("--budgets applies to 'exp active' only")
        config["budgets"] = list(_ints(args.budgets))
    for item in args.set or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        try:
            config[key] = json.loads(raw)
        except json.JSONDecodeError:
            config[key] = raw
    return run_experiment(args.name, config, args.out)


# ---------------------------------------------------------------------------
# parser


def _common(p: argparse.ArgumentParser):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="base random seed (default 0)")
    p.add_argument("--config", default=None, help="JSON config or manifest; flags override its keys")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphsr", description="Graph signal sampling and recovery toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a graph with signals")
    _common(p)
    p.add_argument("--kind", choices=["sbm", "geometric"])
    p.add_argument("--sizes", help="SBM block sizes, comma separated")
    p.add_argument("--p-in", help="SBM within-block probabilities, comma separated")
    p.add_argument("--p-out", type=float, help="SBM between-block probability")
    p.add_argument("--n", type=int, help="geometric vertex count")
    p.add_argument("--degree", type=float, help="geometric target mean degree")
    p.add_argument("--bandwidth", type=int, help="number of Laplacian eigenvectors written as signals")
    p.add_argument("--piecewise", action="store_const", const=True, help="mask geometric signals across a line")
    p.add_argument("--features", type=int, help="also write noisy community features with this many columns")
    p.add_argument("--noise", type=float, help="feature noise standard deviation")

    p = sub.add_parser("sample", help="select vertices")
    _common(p)
    p.add_argument("--graph")
    p.add_argument("--signals")
    p.add_argument("--method", choices=["random", "bls", "sp", "neural"])
    p.add_argument("--m", type=int, help="number of vertices to select")
    p.add_argument("--bandwidth", type=int, help="BLS bandwidth")
    p.add_argument("--order", type=int, help="spectral proxy order")
    p.add_argument("--epochs", type=int, help="affinity network training epochs")
    p.add_argument("--radius", type=int, help="neighborhood radius in hops")
    p.add_argument("--dim", type=int, help="embedding width")

    p = sub.add_parser("recover", help="recover full signals from a selection")
    _common(p)
    p.add_argument("--graph")
    p.add_argument("--signals", help="ground-truth signals; measurements are taken at the selection")
    p.add_argument("--selection", help="selection JSON")
    p.add_argument("--method", choices=["closed-form", "iterative", "unrolled"])
    p.add_argument("--filter", help="filter coefficients h_0,h_1,... over the normalized shift")
    p.add_argument("--iters", type=int)
    p.add_argument("--step-size", type=float)
    p.add_argument("--checkpoint", help="train-sr checkpoint for --method unrolled")

    p = sub.add_parser("train-sr", help="jointly train the neural sampler and unrolled recovery")
    _common(p)
    p.add_argument("--graph")
    p.add_argument("--signals")
    p.add_argument("--m", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--mode", choices=["supervised", "unsupervised"])
    p.add_argument("--loss-weight", type=float)
    p.add_argument("--layers", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--refresh-every", type=int)

    p = sub.add_parser("exp", help="run an experiment pipeline")
    p.add_argument("name", choices=sorted(EXPERIMENTS))
    _common(p)
    p.add_argument("--trials", type=int, help="trials (seeds for gxn)")
    p.add_argument("--paper-scale", action="store_true", help="use the original graph sizes")
    p.add_argument("--budgets", help="comma-separated budgets for 'exp active'")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any config key (JSON value)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        out = Path(args.out)
        if args.command == "exp":
            summary = run_exp(args)
            print(json.dumps(summary, indent=2, sort_keys=True, default=str))
        else:
            cfg = _resolve(args.command, args)
            out.mkdir(parents=True, exist_ok=True)
            outputs = COMMANDS[args.command](cfg, out)
            _manifest(out, args.command, cfg, outputs)
            print(f"wrote {', '.join(sorted(outputs))} to {out}")
    except UsageError as exc:
        print(f"graphsr: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"graphsr: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError, KeyError) as exc:
        print(f"graphsr: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
