"""Command-line / config-file / environment parsing into an :class:`ExperimentConfig`.

Precedence, lowest first: built-in defaults, ``--config`` file, ``ALS_*``
environment variables, command-line flags. Config files are flat
``key = value`` lines whose keys are the flag names without dashes prefix.
"""

from __future__ import annotations

import argparse
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

from .datasets import DataSpec
from .engine import ExperimentConfig
from .errors import ConfigError, ValidationError
from .learner import TrainConfig
from .scenario import ScenarioSpec
from .strategies import UNCERTAINTY, StrategyParams, normalize_strategy

ENV_PREFIX = "ALS_"

_REQUIRED = object()


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _opt_str(v):
    return None if v in (None, "", "None") else str(v)


def _opt_float(v):
    return None if v in (None, "", "None") else float(v)


# (flag, converter, default, help)
OPTIONS = [
    ("method", str, "random", "acquisition strategy, or 'uncertainty' to use --uncertainty"),
    ("uncertainty", str, "CONF", "classic uncertainty measure used when --method uncertainty"),
    ("dataset", str, "blobs", "dataset name: 'blobs' or any name backed by --data_path"),
    ("trial", int, 5, "number of trials"),
    ("cycle", int, 10, "active-learning cycles per trial"),
    ("n-initial", int, 100, "initial labeled set size"),
    ("n-query", int, _REQUIRED, "samples queried per cycle"),
    ("n-class", int, 4, "number of known classes"),
    ("epochs", int, 200, "training epochs per cycle"),
    ("lr", float, 0.1, "initial learning rate"),
    ("momentum", float, 0.9, "SGD momentum"),
    ("weight_decay", float, 5e-4, "L2 weight decay"),
    ("batch-size", int, 64, "minibatch size"),
    ("step-size", int, 50, "StepLR period in epochs"),
    ("lr-gamma", float, 0.5, "StepLR decay factor"),
    ("hidden", int, 128, "hidden-layer width"),
    ("dropout", float, 0.5, "dropout rate before the output layer"),
    ("n-drop", int, 5, "MC-dropout passes"),
    ("seed", int, 0, "base seed; trial t uses seed + t"),
    ("openset", _bool, False, "enable open-set mode (requires --ood-rate)"),
    ("ood-rate", _opt_float, None, "fraction of the unlabeled pool that is OOD"),
    ("imb-factor", _opt_float, None, "long-tail ratio gamma in (0, 1]"),
    ("rho", float, 0.05, "SAAL perturbation radius"),
    ("alpha_cap", float, 0.03125, "ALFA-Mix interpolation factor"),
    ("noise_scale", float, 0.001, "NoiseStability relative weight-noise scale"),
    ("noise_sampling", int, 50, "NoiseStability perturbation draws"),
    ("acqMode", str, "Max_Diversity", "SAAL acquisition mode"),
    ("varratio-mode", str, "mode_frequency", "VarRatio definition: mode_frequency or max_prob"),
    ("samples-per-class", int, 500, "built-in blobs: training samples per class"),
    ("test-per-class", int, 250, "built-in blobs: test samples per class"),
    ("dim", int, 2, "built-in blobs: feature dimension"),
    ("spread", float, 0.25, "built-in blobs: per-class standard deviation"),
    ("data_path", _opt_str, None, "training-pool feature CSV"),
    ("test-path", _opt_str, None, "test-set feature CSV"),
    ("ood-path", _opt_str, None, "OOD source feature CSV"),
]

RUN_OPTIONS = [
    ("out-dir", str, "runs", "directory that receives the run directory"),
    ("no-timing", _bool, False, "record selection time as 0 (bitwise-reproducible CSVs)"),
]

# accepted for command-line compatibility, never acted on
IGNORED = ("gpu", "data-parallel", "save_path", "resume", "ssl_save")

_BOOL_FLAGS = {"openset", "no-timing"}


def _dest(flag):
    return flag.replace("-", "_")


def env_name(flag):
    return ENV_PREFIX + flag.upper().replace("-", "_")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser(prog="poolal run") -> argparse.ArgumentParser:
    p = _Parser(prog=prog, argument_default=argparse.SUPPRESS, description="Run a pool-based active-learning experiment.")
    p.add_argument("--config", help="flat key = value config file")
    for flag, conv, default, help_ in OPTIONS + RUN_OPTIONS:
        if flag in _BOOL_FLAGS:
            p.add_argument(f"--{flag}", dest=_dest(flag), action="store_true", help=help_)
        else:
            shown = "required" if default is _REQUIRED else default
            p.add_argument(f"--{flag}", dest=_dest(flag), type=str, help=f"{help_} (default: {shown})")
    for flag in IGNORED:
        p.add_argument(f"--{flag}", dest=f"ignored_{_dest(flag)}", nargs="?", const=True, help=argparse.SUPPRESS)
    return p


def read_config_file(path) -> dict:
    known = {f for f, *_ in OPTIONS + RUN_OPTIONS}
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-")
        if key in IGNORED:
            warnings.warn(f"config key {key!r} is accepted but has no effect", UserWarning, stacklevel=2)
            continue
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


@dataclass(frozen=True)
class RunOptions:
    out_dir: str = "runs"
    timing: bool = True
    config_path: str | None = None


def _convert(flag, conv, value):
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"--{flag}: invalid value {value!r} ({exc})") from None


def parse_run_args(argv=None, environ=None) -> tuple[ExperimentConfig, RunOptions]:
    environ = os.environ if environ is None else environ
    ns = vars(build_parser().parse_args(argv))
    for key in list(ns):
        if key.startswith("ignored_"):
            warnings.warn(f"--{key[8:]} is accepted for compatibility and ignored", UserWarning, stacklevel=2)
            del ns[key]
    raw = {}
    if "config" in ns:
        raw.update(read_config_file(ns["config"]))
    values = {}
    for flag, conv, default, _ in OPTIONS + RUN_OPTIONS:
        if _dest(flag) in ns:
            value = ns[_dest(flag)]
        elif env_name(flag) in environ:
            value = environ[env_name(flag)]
        elif flag in raw:
            value = raw[flag]
        elif default is _REQUIRED:
            raise ConfigError(f"poolal run: the following argument is required: --{flag}")
        else:
            values[flag] = default
            continue
        values[flag] = _convert(flag, conv, value)
    try:
        config = _build(values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    return config, RunOptions(values["out-dir"], not values["no-timing"], ns.get("config"))


def parse_config(argv=None, environ=None) -> ExperimentConfig:
    return parse_run_args(argv, environ)[0]


def _build(v) -> ExperimentConfig:
    method = v["method"]
    if method.lower() == "uncertainty":
        strategy = normalize_strategy(v["uncertainty"])
        if strategy not in UNCERTAINTY:
            raise ConfigError(f"--uncertainty must be one of {UNCERTAINTY}, got {v['uncertainty']!r}")
    else:
        strategy = normalize_strategy(method)
    if v["openset"] and v["ood-rate"] is None:
        raise ConfigError("--openset requires --ood-rate")
    if v["ood-rate"] is not None and not v["openset"]:
        raise ConfigError("--ood-rate requires --openset")
    data = DataSpec(
        name=v["dataset"],
        n_class=v["n-class"],
        samples_per_class=v["samples-per-class"],
        test_per_class=v["test-per-class"],
        dim=v["dim"],
        spread=v["spread"],
        data_path=v["data_path"],
        test_path=v["test-path"],
        ood_path=v["ood-path"],
    )
    imb = v["imb-factor"]
    openset = v["openset"]
    kind = {(False, False): "standard", (True, False): "imbalance", (False, True): "openset", (True, True): "compositional"}[
        (imb is not None, openset)
    ]
    scenario = ScenarioSpec(
        kind=kind,
        ood_rate=v["ood-rate"] if openset else 0.0,
        gamma=imb if imb is not None else 1.0,
        ood_source=data.ood_source_name if openset else None,
    )
    train = TrainConfig(
        epochs=v["epochs"],
        learning_rate=v["lr"],
        momentum=v["momentum"],
        weight_decay=v["weight_decay"],
        scheduler_step=v["step-size"],
        scheduler_gamma=v["lr-gamma"],
        batch_size=v["batch-size"],
        n_drop=v["n-drop"],
        hidden=v["hidden"],
        dropout=v["dropout"],
    )
    params = StrategyParams(
        rho=v["rho"],
        alpha_cap=v["alpha_cap"],
        noise_scale=v["noise_scale"],
        noise_sampling=v["noise_sampling"],
        acq_mode=v["acqMode"],
        varratio_mode=v["varratio-mode"],
    )
    return ExperimentConfig(
        strategy=strategy,
        trials=v["trial"],
        cycles=v["cycle"],
        n_initial=v["n-initial"],
        n_query=v["n-query"],
        scenario=scenario,
        train=train,
        seed=v["seed"],
        params=params,
        data=data,
    )


def config_items(config: ExperimentConfig) -> list[tuple[str, object]]:
    """Flag-named values that reproduce ``config`` when parsed back."""
    sc, tr, pa, da = config.scenario, config.train, config.params, config.data
    return [
        ("method", config.strategy),
        ("dataset", da.name),
        ("trial", config.trials),
        ("cycle", config.cycles),
        ("n-initial", config.n_initial),
        ("n-query", config.n_query),
        ("n-class", da.n_class),
        ("epochs", tr.epochs),
        ("lr", tr.learning_rate),
        ("momentum", tr.momentum),
        ("weight_decay", tr.weight_decay),
        ("batch-size", tr.batch_size),
        ("step-size", tr.scheduler_step),
        ("lr-gamma", tr.scheduler_gamma),
        ("hidden", tr.hidden),
        ("dropout", tr.dropout),
        ("n-drop", tr.n_drop),
        ("seed", config.seed),
        ("openset", sc.uses_openset),
        ("ood-rate", sc.ood_rate if sc.uses_openset else None),
        ("imb-factor", sc.gamma if sc.uses_imbalance else None),
        ("rho", pa.rho),
        ("alpha_cap", pa.alpha_cap),
        ("noise_scale", pa.noise_scale),
        ("noise_sampling", pa.noise_sampling),
        ("acqMode", pa.acq_mode),
        ("varratio-mode", pa.varratio_mode),
        ("samples-per-class", da.samples_per_class),
        ("test-per-class", da.test_per_class),
        ("dim", da.dim),
        ("spread", da.spread),
        ("data_path", da.data_path),
        ("test-path", da.test_path),
        ("ood-path", da.ood_path),
    ]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in config_items(config))


def to_argv(config: ExperimentConfig) -> list[str]:
    argv = []
    for k, v in config_items(config):
        if v is None or v is False:
            continue
        argv += [f"--{k}"] if v is True else [f"--{k}", _fmt(v)]
    return argv
