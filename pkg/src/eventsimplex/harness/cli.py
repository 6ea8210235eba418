"""Command line: ``eventsimplex <subcommand> ...``."""
from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from ..dirichlet import simplex_density_grid
from ..evalkit import write_reports_csv
from ..events import (generate_3g, generate_graph, generate_multig, make_graph_spec, read_events,
                      write_events)
from .checkpoint import load_checkpoint, save_checkpoint
from .config import TrainConfig, parse_field
from .data import prepare, prepare_sequence
from .gradchecks import TOLERANCE, run_gradchecks
from .report import (detect_anomalies, emit_plot_data, evaluate, plot_columns, render_bars,
                     render_evolution, render_roc, render_simplex, write_table)


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; command-line flags take precedence")
    for f in fields(TrainConfig):
        p.add_argument(_flag(f.name), dest=f"cfg_{f.name}", default=None, help=f"TrainConfig.{f.name}")


def _train_config(args) -> TrainConfig:
    cfg = TrainConfig.load(args.config) if args.config else TrainConfig()
    changes = {}
    for f in fields(TrainConfig):
        raw = getattr(args, f"cfg_{f.name}")
        if raw is not None:
            changes[f.name] = parse_field(f.type, raw)
    return cfg.replace(**changes)


def _with_suffix(path, suffix: str) -> Path:
    path = Path(path)
    return path.with_name(path.stem + suffix)


# -------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    if args.kind == "3g":
        seqs = [generate_3g(args.n, args.seed)]
    elif args.kind == "multig":
        seqs = [generate_multig(args.n, args.seed)]
    else:
        spec = make_graph_spec(args.nodes, args.edges, args.seed)
        spec_path = args.graph_spec or _with_suffix(args.out, ".graph.txt")
        spec.save(spec_path)
        print(f"graph spec written to {spec_path}")
        seqs = [generate_graph(spec, args.n)]
    write_events(args.out, seqs)
    print(f"{sum(len(s) for s in seqs)} events written to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = _train_config(args)
    data = prepare(read_events(args.data), cfg.split, cfg.eps, seed=cfg.seed)
    result = train_with_progress(cfg, data, args.log)
    save_checkpoint(result.checkpoint, args.out)
    print(f"best epoch {result.best_epoch} (val loss {result.best_val_loss:.6f}); checkpoint {args.out}")
    return 0


def train_with_progress(cfg, data, log_path):
    from .train import train
    lines = []

    def progress(rec):
        line = f"epoch={rec.epoch} train_loss={rec.train_loss:.6f} val_loss={rec.val_loss:.6f}"
        lines.append(line)
        print(line, flush=True)

    result = train(cfg, data, progress)
    if log_path:
        Path(log_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return result


def parse_grid(text: str) -> dict[str, list]:
    """``hidden=32,64;lr=0.001,0.01`` -> {"hidden": [32, 64], "lr": [0.001, 0.01]}."""
    types = {f.name: f.type for f in fields(TrainConfig)}
    grid = {}
    for part in filter(None, (p.strip() for p in text.split(";"))):
        key, _, values = part.partition("=")
        key = key.strip().replace("-", "_")
        if key not in types:
            raise ValueError(f"sweep: unknown grid axis {key!r}")
        grid[key] = [parse_field(types[key], v) for v in values.split(",") if v.strip()]
    return grid


def cmd_sweep(args) -> int:
    from .train import grid_search
    cfg = _train_config(args)
    data = prepare(read_events(args.data), cfg.split, cfg.eps, seed=cfg.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    result = grid_search(cfg, parse_grid(args.grid), data, args.seeds,
                         progress=lambda r: print({k: v for k, v in r.items() if k != "cell"}, flush=True))
    rows = [{k: v for k, v in r.items() if k != "cell"} for r in result.rows]
    write_reports_csv(out / "sweep_runs.csv", rows)
    summary = [{"cell": " ".join(f"{k}={v}" for k, v in s["cell"]), **{k: v for k, v in s.items() if k != "cell"}}
               for s in result.summary()]
    write_reports_csv(out / "sweep_summary.csv", summary)
    render_bars([s["cell"] for s in summary], [s["mean_val_accuracy"] for s in summary],
                [s["std_val_accuracy"] for s in summary], out / "sweep_summary.png", "validation accuracy")
    save_checkpoint(result.best.checkpoint, out / "best.ckpt")
    print(f"selected {result.selected}; promoted checkpoint {out / 'best.ckpt'}")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    report = evaluate(ckpt, read_events(args.data), args.metrics.split(","), args.t_max, args.cells,
                      args.samples, args.seed)
    report.save(args.out)
    write_reports_csv(_with_suffix(args.out, ".csv"), [report.csv_row()])
    for k, v in report.as_dict().items():
        print(f"{k}={v}")
    return 0


def cmd_detect(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    report, scores = detect_anomalies(ckpt, read_events(args.data), args.fraction, args.seed, args.samples)
    report.save(args.out)
    write_table(_with_suffix(args.out, ".scores.csv"), ["label", "categorical", "distributional"],
                zip(scores["label"].astype(int), scores["categorical"], scores["distributional"]))
    render_roc(scores, _with_suffix(args.out, ".roc.png"))
    for k in ("auroc", "aupr", "auroc_distributional", "aupr_distributional"):
        print(f"{k}={getattr(report, k)}")
    return 0


def cmd_plot(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    seqs = read_events(args.data)
    seq = prepare_sequence(seqs[args.sequence], ckpt.transform)
    n = args.prefix or len(seq.classes)
    grid = np.linspace(0.0, args.t_max, args.points)
    table = emit_plot_data(ckpt, seq.classes[:n], seq.gaps[:n], grid, args.samples, args.seed)
    cols = plot_columns(ckpt.config.model, ckpt.n_classes)
    write_table(args.out, cols, table)
    fig = render_evolution(cols, table, _with_suffix(args.out, ".png"), f"{ckpt.config.model}, prefix {n}")
    print(f"{len(table)} rows written to {args.out}; figure {fig}")
    if ckpt.config.model != "wgp-ln" and ckpt.n_classes == 3:
        for tau in args.simplex_at:
            i = int(np.argmin(np.abs(grid - tau)))
            rows = simplex_density_grid(table[i, -3:], args.resolution)
            stem = f".simplex_t{grid[i]:.3f}".replace(".", "_", 2)
            write_table(_with_suffix(args.out, stem + ".csv"), ["u", "v", "density"], rows)
            render_simplex(rows, _with_suffix(args.out, stem + ".png"), f"tau={grid[i]:.3f}")
    return 0


def cmd_gradcheck(args) -> int:
    errors = run_gradchecks(args.seed)
    for k, v in errors.items():
        print(f"{k}: {v:.3e} {'ok' if v < TOLERANCE else 'FAIL'}")
    return 0 if max(errors.values()) < TOLERANCE else 1


def cmd_demo(args) -> int:
    from .demo import demo_g1, render_demo
    rows = demo_g1(range(args.seeds), args.epochs)
    write_reports_csv(args.out, rows)
    for variant in ("overlapping", "separated"):
        ce = np.mean([r["entropy"] for r in rows if r["variant"] == variant and r["objective"] == "ce"])
        uce = np.mean([r["entropy"] for r in rows if r["variant"] == variant and r["objective"] == "uce"])
        print(f"{variant}: mean inter-class entropy CE={ce:.4f} UCE+reg={uce:.4f}")
        render_demo(variant, 0, _with_suffix(args.out, f".{variant}.png"), args.epochs)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eventsimplex", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="synthetic data")
    g.add_argument("kind", choices=("3g", "multig", "graph"))
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--nodes", type=int, default=10)
    g.add_argument("--edges", type=int, default=48)
    g.add_argument("--graph-spec", help="where to write the graph spec (default: <out>.graph.txt)")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", default="model.ckpt")
    t.add_argument("--log", help="epoch log file")
    _add_train_flags(t)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="grid search")
    s.add_argument("--data", required=True)
    s.add_argument("--grid", required=True, help="e.g. 'hidden=32,64;lr=0.001,0.01'")
    s.add_argument("--seeds", type=int, default=5)
    s.add_argument("--out-dir", default="sweep")
    _add_train_flags(s)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("evaluate", help="test-split metrics")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default="report.txt")
    e.add_argument("--metrics", default="accuracy,time_error")
    e.add_argument("--t-max", type=float, default=1.2)
    e.add_argument("--cells", type=int, default=200)
    e.add_argument("--samples", type=int, default=1000)
    e.add_argument("--seed", type=int, default=0)
    e.set_defaults(func=cmd_evaluate)

    d = sub.add_parser("detect-anomalies", help="perturb test gaps and score them")
    d.add_argument("--checkpoint", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--out", default="anomalies.txt")
    d.add_argument("--fraction", type=float, default=0.1)
    d.add_argument("--samples", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)
    d.set_defaults(func=cmd_detect)

    p = sub.add_parser("plot-data", help="evolution of the predicted distribution after a prefix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", default="plot.csv")
    p.add_argument("--sequence", type=int, default=0, help="index of the sequence in the data file")
    p.add_argument("--prefix", type=int, default=None, help="number of events to encode (default: all)")
    p.add_argument("--t-max", type=float, default=1.5)
    p.add_argument("--points", type=int, default=300)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--simplex-at", type=float, nargs="*", default=[], help="times for simplex density grids")
    p.add_argument("--resolution", type=int, default=40)
    p.set_defaults(func=cmd_plot)

    c = sub.add_parser("gradcheck", help="finite-difference checks of all losses")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_gradcheck)

    m = sub.add_parser("demo-g1", help="static 2-D classification demo, CE vs UCE + neighbourhood term")
    m.add_argument("--seeds", type=int, default=5)
    m.add_argument("--epochs", type=int, default=300)
    m.add_argument("--out", default="demo_g1.csv")
    m.set_defaults(func=cmd_demo)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FloatingPointError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
