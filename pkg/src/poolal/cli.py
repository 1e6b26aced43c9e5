"""``poolal`` command line.

    poolal run --method entropy --n-query 20 ...   (``run`` may be omitted)
    poolal export RUN_DIR [RUN_DIR ...] --out DIR
    poolal check RUN_DIR [RUN_DIR ...]

Exit codes: 0 success, 2 usage error, 3 data error, 4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from pathlib import Path

from . import io
from .config import parse_run_args
from .datasets import resolve
from .engine import run_trial
from .errors import ConfigError, PoolALError

log = logging.getLogger("poolal")


def _frozen_clock():
    return 0.0


def cmd_run(argv) -> Path:
    config, opts = parse_run_args(argv)
    out_root = io.ensure_writable(opts.out_dir)
    run_dir = io.ensure_writable(out_root / io.run_dir_name(config))
    train, test, ood = resolve(config.data, config.seed, config.scenario.ood_rate)
    manifest = io.RunManifest(config, train.name, str(run_dir))
    clock = None if opts.timing else _frozen_clock
    with io.run_lock(run_dir):
        io.write_manifest(manifest, run_dir / io.MANIFEST)
        trials = []
        with (run_dir / io.LOG).open("w") as logf, (run_dir / io.CYCLES).open("w", newline="") as csvf:
            logf.write(io.log_header(manifest))
            writer = csv.writer(csvf, lineterminator="\n")
            writer.writerow(io.cycle_header(config.data.n_class))
            for t in range(config.trials):
                kw = {} if clock is None else {"clock": clock}
                trial = run_trial(config, train, test, t, ood, **kw)
                trials.append(trial)
                logf.write(f"--- trial {trial.trial} (seed {trial.seed}) ---\n")
                for r in trial.records:
                    logf.write(io.log_cycle(trial, r))
                    writer.writerow(io.cycle_row(trial, r))
                logf.flush()
                csvf.flush()
                log.info("trial %d final accuracy %.4f", t, trial.records[-1].accuracy)
            logf.write(io.log_footer(trials))
    print(run_dir)
    return run_dir


def cmd_export(argv):
    p = argparse.ArgumentParser(prog="poolal export")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    args = p.parse_args(argv)
    paths = io.export_results(args.run_dirs, args.out)
    for p_ in paths.values():
        print(p_)


def cmd_check(argv) -> int:
    p = argparse.ArgumentParser(prog="poolal check")
    p.add_argument("run_dirs", nargs="+")
    args = p.parse_args(argv)
    bad = 0
    for d in args.run_dirs:
        problems = io.check_run_dir(d)
        print(f"{d}: {'ok' if not problems else '; '.join(problems)}")
        bad += bool(problems)
    return 3 if bad else 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    warnings.simplefilter("default", UserWarning)
    command = "run"
    if argv and not argv[0].startswith("-"):
        command = argv.pop(0)
    try:
        if command == "run":
            cmd_run(argv)
            return 0
        if command == "export":
            cmd_export(argv)
            return 0
        if command == "check":
            return cmd_check(argv)
        raise ConfigError(f"unknown command {command!r}; expected run, export or check")
    except ConfigError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except PoolALError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
