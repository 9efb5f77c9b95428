"""Command-line experiment runner.

Subcommands: gen-data, run, sweep, plot, grid, check. Validation problems exit
with code 2, runtime failures with code 1.
"""

import argparse
import sys

from ..errors import FplabError, InvalidConfigError


def _add_config(p, required=True):
    p.add_argument("--config", required=required, help="experiment config file (key = value)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fplab",
        description="Federated-learning poisoning lab: run attacks, defenses, sweeps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="export a synthetic dataset as image folders")
    _add_config(p, required=False)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("run", help="run one experiment end to end")
    _add_config(p)
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("sweep", help="run a hyperparameter sweep")
    _add_config(p)
    p.add_argument("--out", required=True, help="sweep directory to create")
    p.add_argument("--param", required=True,
                   help="pmr | psg_iterations | scaling_factor")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--seeds", required=True, help="comma-separated integer seeds")

    p = sub.add_parser("plot", help="render charts from a run or sweep directory")
    p.add_argument("directory", help="run or sweep directory")
    p.add_argument("--out", default=None, help="chart output directory")

    p = sub.add_parser("grid", help="train a generator and export a sample grid")
    _add_config(p, required=False)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--checkpoints", default="50,100,150,200",
                   help="comma-separated iteration counts to snapshot")
    p.add_argument("--per-checkpoint", type=int, default=8, help="samples per row")

    p = sub.add_parser("check", help="verify summary.csv against the round log")
    p.add_argument("directory", help="run directory")
    return parser


def _load_flat(args):
    from .config import default_flat, parse_flat

    flat = parse_flat(args.config) if args.config else default_flat()
    if getattr(args, "seed", None) is not None:
        flat["seed"] = args.seed
    return flat


def cmd_gen_data(args):
    from ..data import save_image_folder, synth_texture_dataset
    from .config import build_experiment

    cfg = build_experiment(_load_flat(args))
    d = cfg.dataset
    if d.kind != "synthetic":
        raise InvalidConfigError("gen-data only exports synthetic datasets")
    ds = synth_texture_dataset(d.classes, d.per_class, d.size, cfg.federation.seed)
    manifest = save_image_folder(ds, args.out)
    print(f"wrote {len(manifest['samples'])} images across "
          f"{manifest['num_classes']} classes to {args.out}")
    return 0


def cmd_run(args):
    from .config import build_experiment
    from .runner import run_experiment

    summary = run_experiment(build_experiment(_load_flat(args)), args.out)
    print(f"run complete: final_acc={summary['final_acc']} "
          f"final_asr={summary['final_asr']} mis={summary['mis']}")
    return 0


def cmd_sweep(args):
    from .runner import sweep

    values = [v.strip() for v in args.values.split(",") if v.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    table, any_failed = sweep(_load_flat(args), args.param, values, seeds, args.out)
    for row in table:
        print(f"{row['param']}={row['value']}: n={row['n_ok']} "
              f"acc={row['acc_mean']} asr={row['asr_mean']}")
    return 1 if any_failed else 0


def cmd_plot(args):
    from .plots import emit_plots

    for path in emit_plots(args.directory, args.out):
        print(f"wrote {path}")
    return 0


def cmd_grid(args):
    from ..psg import train_psg
    from .config import build_experiment
    from .plots import export_sample_grid, save_grid_png
    from .runner import build_datasets

    cfg = build_experiment(_load_flat(args))
    marks = sorted({int(v) for v in args.checkpoints.split(",") if v.strip()})
    if not marks:
        raise InvalidConfigError("grid needs at least one checkpoint iteration")
    psg_cfg = cfg.psg
    if psg_cfg.iterations < marks[-1]:
        from dataclasses import replace

        psg_cfg = replace(psg_cfg, iterations=marks[-1])
    train, _ = build_datasets(cfg.dataset, cfg.federation.seed)
    gen = train_psg(train, psg_cfg, snapshot_at=marks)
    grid = export_sample_grid(
        [g for _, g in gen.snapshots], args.per_checkpoint, cfg.federation.seed
    )
    save_grid_png(grid, args.out)
    print(f"wrote {args.out} ({len(gen.snapshots)} rows x {args.per_checkpoint} samples)")
    return 0


def cmd_check(args):
    from .runner import check_run

    problems = check_run(args.directory)
    if problems:
        for p in problems:
            print(f"MISMATCH: {p}")
        return 1
    print("summary.csv is consistent with the round log")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "plot": cmd_plot,
    "grid": cmd_grid,
    "check": cmd_check,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except InvalidConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FplabError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
