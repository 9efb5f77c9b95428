"""End-to-end experiment execution, persistence, sweeps, consistency checks.

A run directory is self-describing: config snapshot, JSON-lines round log,
final model blob, stealth report and a one-row summary CSV. Sweeps run one
experiment per (value, seed) pair, optionally in parallel processes bounded
by the FPLAB_THREADS environment variable.
"""

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import io as fio
from .. import metrics
from ..data import load_image_folder, synth_texture_dataset
from ..errors import FplabError, InvalidConfigError
from ..fl_core import ROLE_MALICIOUS, run_federation, split_train_test
from ..seeding import sub_seed
from .config import SCHEMA, build_experiment, write_snapshot

TAG_TRAIN_DATA = 0xDA7A
TAG_TEST_DATA = 0x7E57

SUMMARY_FIELDS = ("final_acc", "final_asr", "mis")
SUMMARY_WINDOW = 5  # summary statistic is the mean of the last 5 rounds

SWEEP_PARAMS = {
    "pmr": "pmr",
    "psg_iterations": "psg.iterations",
    "scaling_factor": "scaling_factor",
}


def build_datasets(dspec, seed):
    """Construct (train, test) per the dataset spec, deterministically."""
    if dspec.kind == "synthetic":
        train = synth_texture_dataset(
            dspec.classes, dspec.per_class, dspec.size, sub_seed(seed, TAG_TRAIN_DATA)
        )
        test = synth_texture_dataset(
            dspec.classes, dspec.test_per_class, dspec.size, sub_seed(seed, TAG_TEST_DATA)
        )
        return train, test
    full = load_image_folder(dspec.path, dspec.size, dspec.channels)
    return split_train_test(full, dspec.holdout, seed)


def summarize(records):
    """Trailing-window means of accuracy and attack success rate."""
    if not records:
        return None, None
    window = records[-SUMMARY_WINDOW:]
    return (
        float(np.mean([r.acc for r in window])),
        float(np.mean([r.asr for r in window])),
    )


def compute_mis_report(result):
    """Stealth report from the latest round containing both client roles."""
    if result.stealth_updates is None:
        return None
    rows = np.stack([u.params for u in result.stealth_updates])
    proj = metrics.pca_project(rows, 2)
    roles = [
        "poisoned" if u.role == ROLE_MALICIOUS else "benign"
        for u in result.stealth_updates
    ]
    return metrics.mis(list(zip(proj.points, roles))), proj


def _write_summary(path, final_acc, final_asr, mis_value):
    def fmt(x):
        return "" if x is None else repr(float(x))

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_FIELDS)
        writer.writerow([fmt(final_acc), fmt(final_asr), fmt(mis_value)])


def run_experiment(cfg, out_dir):
    """Execute one configured experiment and persist its artifacts.

    Returns a summary dict {final_acc, final_asr, mis} (entries may be None).
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    write_snapshot(cfg.flat, os.path.join(out_dir, "config.cfg"))
    train, test = build_datasets(cfg.dataset, cfg.federation.seed)
    result = run_federation(
        cfg.federation,
        train,
        attack=cfg.attack,
        defense=cfg.defense,
        test_dataset=test,
        keep_round_params=cfg.save_round_snapshots,
    )
    if cfg.save_round_snapshots:
        snapdir = os.path.join(out_dir, "snapshots")
        os.makedirs(snapdir, exist_ok=True)
        for rec, params in zip(result.records, result.round_params):
            ref = os.path.join("snapshots", f"round_{rec.round:05d}.fplb")
            fio.save_param_blob(os.path.join(out_dir, ref), params)
            rec.update_snapshot_ref = ref
    fio.write_rounds_jsonl(os.path.join(out_dir, "rounds.jsonl"), result.records)
    fio.save_param_blob(os.path.join(out_dir, "final_model.fplb"), result.final_params)

    mis_value = None
    report = compute_mis_report(result)
    if report is not None:
        mis_report, _ = report
        mis_value = mis_report.mis
        obj = mis_report.to_json_obj()
        obj["round"] = result.stealth_round
        with open(os.path.join(out_dir, "mis.json"), "w") as fh:
            json.dump(obj, fh, indent=2)

    final_acc, final_asr = summarize(result.records)
    _write_summary(os.path.join(out_dir, "summary.csv"), final_acc, final_asr, mis_value)
    return {"final_acc": final_acc, "final_asr": final_asr, "mis": mis_value}


def run_experiment_from_file(config_path, out_dir, seed=None):
    from .config import parse_flat

    flat = parse_flat(config_path)
    if seed is not None:
        flat["seed"] = seed
    return run_experiment(build_experiment(flat), out_dir)


def _sweep_worker(args):
    flat, run_dir = args
    try:
        summary = run_experiment(build_experiment(flat), run_dir)
        return {"status": "ok", **summary}
    except Exception as err:  # isolate failures, the sweep continues
        return {"status": f"failed: {err}", "final_acc": None, "final_asr": None, "mis": None}


def thread_budget():
    raw = os.environ.get("FPLAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InvalidConfigError(f"FPLAB_THREADS must be an integer, got {raw!r}")


def sweep(base_flat, param, values, seeds, out_dir):
    """One run per (value, seed); aggregates mean +- std of final ACC and ASR.

    Individual failures are recorded and skipped in the aggregate; the caller
    receives any_failed=True so the CLI can exit nonzero.
    """
    if param not in SWEEP_PARAMS:
        raise InvalidConfigError(
            f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMS)}"
        )
    if len(values) < 1:
        raise InvalidConfigError("sweep needs at least one value")
    if len(seeds) < 1:
        raise InvalidConfigError("sweep needs at least one seed")
    key = SWEEP_PARAMS[param]
    caster, _ = SCHEMA[key]
    os.makedirs(out_dir, exist_ok=True)

    jobs, labels = [], []
    for value in values:
        for seed in seeds:
            flat = dict(base_flat)
            flat[key] = caster(str(value))
            flat["seed"] = int(seed)
            run_dir = os.path.join(out_dir, f"{param}_{value}__seed_{seed}")
            jobs.append((flat, run_dir))
            labels.append((value, int(seed), run_dir))

    workers = thread_budget()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_worker, jobs))
    else:
        outcomes = [_sweep_worker(job) for job in jobs]

    rows = [
        {"param": param, "value": value, "seed": seed, "run_dir": run_dir, **outcome}
        for (value, seed, run_dir), outcome in zip(labels, outcomes)
    ]
    with open(os.path.join(out_dir, "runs.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["param", "value", "seed", "run_dir", "status", *SUMMARY_FIELDS]
        )
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in writer.fieldnames})

    aggregate = []
    for value in values:
        ok = [r for r in rows if r["value"] == value and r["status"] == "ok"]
        accs = [r["final_acc"] for r in ok if r["final_acc"] is not None]
        asrs = [r["final_asr"] for r in ok if r["final_asr"] is not None]
        aggregate.append(
            {
                "param": param,
                "value": value,
                "n_ok": len(ok),
                "acc_mean": float(np.mean(accs)) if accs else None,
                "acc_std": float(np.std(accs)) if accs else None,
                "asr_mean": float(np.mean(asrs)) if asrs else None,
                "asr_std": float(np.std(asrs)) if asrs else None,
            }
        )
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(
            fh,
            fieldnames=["param", "value", "n_ok", "acc_mean", "acc_std", "asr_mean", "asr_std"],
        )
        writer.writeheader()
        for row in aggregate:
            writer.writerow({k: ("" if row[k] is None else row[k]) for k in writer.fieldnames})

    any_failed = any(r["status"] != "ok" for r in rows)
    return aggregate, any_failed


def check_run(run_dir):
    """Verify that every number in summary.csv is recomputable from the logs."""
    problems = []
    summary_path = os.path.join(run_dir, "summary.csv")
    rounds_path = os.path.join(run_dir, "rounds.jsonl")
    if not os.path.exists(summary_path) or not os.path.exists(rounds_path):
        raise FplabError(
            f"{run_dir} is not a run directory (expected summary.csv and rounds.jsonl)"
        )
    with open(summary_path, newline="") as fh:
        row = list(csv.DictReader(fh))[0]
    records = fio.read_rounds_jsonl(rounds_path)

    def close(a, b):
        if a is None and b is None:
            return True
        if a is None or b is None:
            return False
        return math.isclose(a, b, rel_tol=0, abs_tol=1e-9)

    def parse(field):
        return float(row[field]) if row[field] else None

    window = records[-SUMMARY_WINDOW:]
    acc = float(np.mean([r["acc"] for r in window])) if window else None
    asr = float(np.mean([r["asr"] for r in window])) if window else None
    if not close(parse("final_acc"), acc):
        problems.append(f"final_acc {row['final_acc']!r} != round-log mean {acc!r}")
    if not close(parse("final_asr"), asr):
        problems.append(f"final_asr {row['final_asr']!r} != round-log mean {asr!r}")

    mis_path = os.path.join(run_dir, "mis.json")
    if os.path.exists(mis_path):
        with open(mis_path) as fh:
            mis_obj = json.load(fh)
        if not close(parse("mis"), float(mis_obj["mis"])):
            problems.append(f"mis {row['mis']!r} != mis.json value {mis_obj['mis']!r}")
    elif row["mis"]:
        problems.append("summary has a mis value but mis.json is missing")
    return problems
