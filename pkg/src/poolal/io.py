"""Run directories: manifest, human-readable log, per-cycle CSV, exports."""

from __future__ import annotations

import contextlib
import csv
import datetime as _dt
import os
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import ComparisonMatrix, LearningCurve, aubc, build_comparison_matrix, rank_by_time
from .config import parse_config, serialize_config
from .engine import CycleRecord, ExperimentConfig, TrialResult
from .errors import DataError, PoolALError

MANIFEST = "manifest.cfg"
LOG = "log.txt"
CYCLES = "cycles.csv"
LOCK = ".lock"
RUN_FILES = (MANIFEST, LOG, CYCLES)


@dataclass
class RunManifest:
    config: ExperimentConfig
    dataset_id: str
    output_dir: str
    version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))


def run_dir_name(config: ExperimentConfig) -> str:
    return f"{config.strategy}_{config.data.name}_{config.scenario.label}"


def write_manifest(manifest: RunManifest, path) -> None:
    header = (
        "# poolal run manifest\n"
        f"# version: {manifest.version}\n"
        f"# timestamp: {manifest.timestamp}\n"
        f"# dataset_id: {manifest.dataset_id}\n"
        f"# output_dir: {manifest.output_dir}\n"
    )
    Path(path).write_text(header + serialize_config(manifest.config))


def read_manifest(path) -> RunManifest:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("# ") and ": " in line:
            k, v = line[2:].split(": ", 1)
            meta[k] = v
    config = parse_config(["--config", str(path)], environ={})
    return RunManifest(config, meta.get("dataset_id", ""), meta.get("output_dir", ""), meta.get("version", ""), meta.get("timestamp", ""))


@contextlib.contextmanager
def run_lock(run_dir):
    """Exclusive lock on a run directory; a second concurrent writer fails immediately."""
    path = Path(run_dir) / LOCK
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise PoolALError(f"{run_dir} is locked by another run (remove {path} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield path
    finally:
        with contextlib.suppress(FileNotFoundError):
            path.unlink()


def ensure_writable(directory) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
        probe = directory / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PoolALError(f"output directory {directory} is not writable: {exc}") from exc
    return directory


# ---------------------------------------------------------------- log


def log_header(manifest: RunManifest) -> str:
    c = manifest.config
    t = c.train
    lines = [
        "=" * 72,
        f"poolal {manifest.version} experiment log   {manifest.timestamp}",
        "=" * 72,
        f"method: {c.strategy}",
        f"dataset: {manifest.dataset_id} (classes={c.data.n_class})",
        f"scenario: {c.scenario.kind} (ood_rate={c.scenario.ood_rate:g}, gamma={c.scenario.gamma:g})",
        f"seed: {c.seed} (trial t uses seed + t)",
        f"backbone: MLP(hidden={t.hidden}, relu, dropout={t.dropout:g})",
        f"optimizer: SGD(lr={t.learning_rate:g}, momentum={t.momentum:g}, weight_decay={t.weight_decay:g}, batch_size={t.batch_size})",
        f"scheduler: StepLR(step_size={t.scheduler_step}, gamma={t.scheduler_gamma:g})",
        f"epochs per cycle: {t.epochs}",
        f"initial labeled set size: {c.n_initial}",
        f"query size: {c.n_query}",
        f"trials: {c.trials}   cycles: {c.cycles}   mc-dropout passes: {t.n_drop}",
        "",
    ]
    return "\n".join(lines) + "\n"


def _hist_text(hist):
    parts = [f"{i}:{n}" for i, n in enumerate(hist[:-1]) if n]
    if hist and hist[-1]:
        parts.append(f"ood:{hist[-1]}")
    return "{" + ", ".join(parts) + "}"


def log_cycle(trial: TrialResult, r: CycleRecord) -> str:
    flag = "  [pool exhausted]" if r.exhausted else ""
    return (
        f"[trial {trial.trial} | cycle {r.cycle}] labeled={r.labeled_size} discarded={r.discarded_size}{flag}\n"
        f"    test accuracy={r.accuracy:.4f} precision={r.macro_precision:.4f} "
        f"recall={r.macro_recall:.4f} f1={r.macro_f1:.4f}\n"
        f"    queried={r.n_queried} (ood={r.n_ood_queried}) selection time={r.selection_seconds:.4f}s\n"
        f"    classes of selected samples: {_hist_text(r.queried_class_histogram)}\n"
    )


def log_footer(trials) -> str:
    lines = ["", "-" * 72, "selection time summary"]
    totals = []
    for t in trials:
        totals.append(t.total_selection_seconds)
        lines.append(f"  trial {t.trial} (seed {t.seed}): total={t.total_selection_seconds:.4f}s over {len(t.records)} cycles")
    if totals:
        lines.append(f"  mean total per trial: {np.mean(totals):.4f}s")
        lines.append(f"  min/max total: {min(totals):.4f}s / {max(totals):.4f}s")
    else:
        lines.append("  no cycles recorded")
    lines.append("-" * 72)
    return "\n".join(lines) + "\n"


def emit_log(trials, manifest: RunManifest, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        fh.write(log_header(manifest))
        for t in trials:
            fh.write(f"--- trial {t.trial} (seed {t.seed}) ---\n")
            for r in t.records:
                fh.write(log_cycle(t, r))
        fh.write(log_footer(trials))
    return path


# ---------------------------------------------------------------- per-cycle CSV


def cycle_header(class_count: int) -> list[str]:
    return [
        "trial", "cycle", "labeled_size", "acc", "prec", "rec", "f1", "sel_seconds", "n_ood_queried",
    ] + [f"hist_{i}" for i in range(class_count + 1)]


def write_cycles_csv(trials, class_count: int, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cycle_header(class_count))
        for t in trials:
            for r in t.records:
                w.writerow(cycle_row(t, r))
    return path


def cycle_row(trial: TrialResult, r: CycleRecord) -> list:
    return (
        [trial.trial, r.cycle, r.labeled_size]
        + [repr(float(x)) for x in (r.accuracy, r.macro_precision, r.macro_recall, r.macro_f1, r.selection_seconds)]
        + [r.n_ood_queried]
        + list(r.queried_class_histogram)
    )


@dataclass
class RunData:
    """Per-trial curves read back from a run directory."""

    method: str
    setting: str
    class_count: int
    curves: dict  # trial -> list of (budget, labeled_size, acc)
    selection_seconds: dict  # trial -> total seconds


def read_run(run_dir) -> RunData:
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir / MANIFEST)
    c = manifest.config
    setting = f"{c.data.name}/{c.scenario.label}/q{c.n_query}"
    curves = defaultdict(list)
    secs = defaultdict(float)
    ood_so_far = defaultdict(int)
    with (run_dir / CYCLES).open(newline="") as fh:
        for row in csv.DictReader(fh):
            t = int(row["trial"])
            ood_so_far[t] += int(row["n_ood_queried"])
            labeled = int(row["labeled_size"])
            curves[t].append((labeled + ood_so_far[t], labeled, float(row["acc"])))
            secs[t] += float(row["sel_seconds"])
    return RunData(c.strategy, setting, c.data.n_class, dict(curves), dict(secs))


def check_run_dir(run_dir) -> list[str]:
    """Problems found in a run directory (empty list means complete)."""
    run_dir = Path(run_dir)
    problems = [f"missing {name}" for name in RUN_FILES if not (run_dir / name).is_file()]
    if (run_dir / MANIFEST).is_file():
        try:
            config = read_manifest(run_dir / MANIFEST).config
        except PoolALError as exc:
            problems.append(f"manifest does not parse: {exc}")
        else:
            if (run_dir / CYCLES).is_file():
                with (run_dir / CYCLES).open(newline="") as fh:
                    rows = list(csv.reader(fh))
                if not rows or rows[0] != cycle_header(config.data.n_class):
                    problems.append("cycles.csv header does not match the schema")
                elif len(rows) - 1 != config.trials * config.cycles:
                    problems.append(f"cycles.csv has {len(rows) - 1} rows, expected {config.trials * config.cycles}")
    if (run_dir / LOCK).exists():
        problems.append("run is locked (in progress or crashed)")
    return problems


# ---------------------------------------------------------------- exports


def _curve_aubc(points):
    budgets = [b for b, _, _ in points]
    accs = [a for _, _, a in points]
    # an exhausted pool repeats a budget; keep the last point per budget
    dedup = {}
    for b, a in zip(budgets, accs):
        dedup[b] = a
    if len(dedup) < 2:
        return accs[-1]
    keys = sorted(dedup)
    return aubc(LearningCurve(keys, [dedup[k] for k in keys]))


def comparison_from_runs(runs) -> ComparisonMatrix:
    """Each (setting, trial) pair is one experiment setting for the t-tests."""
    results = defaultdict(dict)
    methods = []
    for run in runs:
        if run.method not in methods:
            methods.append(run.method)
        for trial, pts in run.curves.items():
            results[(run.setting, trial)][run.method] = [a for _, _, a in pts]
    return build_comparison_matrix(dict(results), methods)


def export_results(run_dirs, out_dir) -> dict:
    """Write learning curves, Acc/AUBC table, comparison matrix and timing CSVs."""
    runs = [read_run(d) for d in run_dirs]
    if not runs:
        raise DataError("no completed runs to export")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}

    paths["curves"] = out / "learning_curves.csv"
    with paths["curves"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "setting", "trial", "cycle", "budget", "labeled_size", "acc"])
        for run in runs:
            for trial in sorted(run.curves):
                for cycle, (b, lab, acc) in enumerate(run.curves[trial], start=1):
                    w.writerow([run.method, run.setting, trial, cycle, b, lab, repr(acc)])

    methods, settings = [], []
    table = {}
    for run in runs:
        methods += [run.method] if run.method not in methods else []
        settings += [run.setting] if run.setting not in settings else []
        finals = [pts[-1][2] for pts in run.curves.values()]
        areas = [_curve_aubc(pts) for pts in run.curves.values()]
        table[(run.method, run.setting)] = (float(np.mean(finals)), float(np.mean(areas)))
    paths["summary"] = out / "summary.csv"
    write_summary(table, methods, settings, paths["summary"])

    paths["matrix"] = out / "comparison_matrix.csv"
    write_comparison_matrix(comparison_from_runs(runs), paths["matrix"])

    paths["timing"] = out / "timing.csv"
    with paths["timing"].open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["setting", "method", "mean_total_seconds", "rank"])
        for setting in settings:
            means = {r.method: float(np.mean(list(r.selection_seconds.values()))) for r in runs if r.setting == setting}
            for name, secs, rank in rank_by_time(means):
                w.writerow([setting, name, repr(secs), rank])
    return paths


def write_summary(table, methods, settings, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + [f"{s} {m}" for s in settings for m in ("Acc", "AUBC")])
        for method in methods:
            row = [method]
            for s in settings:
                acc, area = table.get((method, s), (None, None))
                row += ["" if acc is None else repr(acc), "" if area is None else repr(area)]
            w.writerow(row)


def read_summary(path) -> dict:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0][1:]
    out = {}
    for row in rows[1:]:
        for i in range(0, len(header), 2):
            setting = header[i].rsplit(" ", 1)[0]
            if row[1 + i]:
                out[(row[0], setting)] = (float(row[1 + i]), float(row[2 + i]))
    return out


def write_comparison_matrix(matrix: ComparisonMatrix, path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method"] + list(matrix.methods) + ["Total"])
        for m, row, total in zip(matrix.methods, matrix.wins, matrix.totals):
            w.writerow([m] + [int(x) for x in row] + [int(total)])


def read_comparison_matrix(path, settings: int = 0) -> ComparisonMatrix:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    methods = rows[0][1:-1]
    wins = np.array([[int(x) for x in r[1:-1]] for r in rows[1:]], dtype=np.int64).reshape(len(methods), len(methods))
    matrix = ComparisonMatrix(methods, wins, settings)
    if [int(r[-1]) for r in rows[1:]] != matrix.totals.tolist():
        raise DataError(f"{path}: Total column disagrees with row sums")
    return matrix
