"""Command-line entry point: ``gdrcsvm train | predict | benchmark``.

Settings come from an optional flat ``key = value`` file (``--config``) and
are overridden by flags.  Every run writes its artefacts, including the
resolved configuration, under ``--out``.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ambiguity import AmbiguityConfig
from .eval_bench import PRESETS, SCALINGS, GaussianSource, accuracy, default_workers, preset, run_experiment
from .conic_ir import BACKENDS
from .data_io import (
    BUILTIN_DATASETS, Dataset, MinMaxScaler, SplitSpec, load_builtin, parse_csv, parse_svmlight, split,
)
from .errors import (
    AssumptionViolated, ConfigError, DegenerateDataset, DegenerateSplit, GdrcError, InsufficientData,
    LabelError, ModelFailed, NumericalError, ParseError, RangeError, ShapeError, SolverFailed,
)
from .models import MODEL_KINDS, ModelParams, TrainedClassifier, display_name, fit_model, parse_model

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

# ||w|| below this means the classifier is (almost) a constant predictor
TINY_W = 1e-3

MODEL_KEYS = ("C", "cov_scale", "N0", "nu_quantile", "rank", "rank_fraction", "backend", "tol")
RUN_KEYS = ("model", "models", "data", "format", "label_column", "positive_label", "drop_columns",
            "trials", "seed", "train_fraction", "scaling", "preset", "workers", "out", "classifier")
CONFIG_KEYS = AmbiguityConfig.KEYS + MODEL_KEYS + RUN_KEYS

DEFAULTS = {
    "model": "gdrc", "format": "auto", "label_column": "-1", "positive_label": "1", "drop_columns": "",
    "trials": "20", "seed": "0", "train_fraction": "0.2", "scaling": "none", "out": "gdrcsvm-out",
}

GENERATORS = {
    # name -> (n, N, mean_scale, cov_scale)
    "demo2d": (2, 100, 1.0, 1.0),
}


class UsageError(GdrcError, ValueError):
    pass


# --- configuration -------------------------------------------------------------------

def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value", key=str(path))
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key (line {lineno})", key=key)
        out[key] = value
    return out


def resolve_settings(args: argparse.Namespace, base: Optional[dict] = None) -> dict:
    """Merge defaults, ``base``, the config file and flags, in rising priority."""
    settings = dict(DEFAULTS)
    settings.update(base or {})
    if getattr(args, "config", None):
        settings.update(read_config_file(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = str(value)
    return settings


def _number(settings: dict, key: str, kind=float):
    raw = settings.get(key)
    if raw is None or str(raw).strip().lower() in ("", "none", "auto"):
        return None
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"expected a number, got {raw!r}", key=key) from None


def model_params(settings: dict, base: Optional[ModelParams] = None) -> ModelParams:
    base = base or ModelParams()
    amb = base.ambiguity.as_dict()
    amb.update({k: v for k, v in settings.items() if k in AmbiguityConfig.KEYS})
    kw = {"ambiguity": AmbiguityConfig.from_dict(amb)}
    for key in ("C", "cov_scale", "nu_quantile", "rank_fraction", "tol"):
        v = _number(settings, key)
        if v is not None:
            kw[key] = v
    for key in ("N0", "rank"):
        v = _number(settings, key, int)
        if v is not None:
            kw[key] = v
    backend = settings.get("backend")
    if backend:
        if backend not in BACKENDS:
            raise ConfigError(f"must be one of {BACKENDS}, got {backend!r}", key="backend")
        kw["backend"] = backend
    return replace(base, **kw)


# --- data ----------------------------------------------------------------------------

def _column(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        return token


def _label_value(token: str):
    try:
        f = float(token)
        return int(f) if f.is_integer() else f
    except ValueError:
        return token


def _negative_index(path: Path, column):
    # parse_csv takes 0-based positions; allow -1 for "last column"
    if isinstance(column, int) and column < 0:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), [])
        return len(header) + column
    return column


def load_data(settings: dict, seed: int = 0, require_labels: bool = True):
    """Dataset, generator or features-only matrix named by ``settings["data"]``."""
    spec = settings.get("data")
    if not spec:
        raise UsageError("no data given (use --data or a data = ... line)")
    if spec in BUILTIN_DATASETS:
        return load_builtin(spec)
    if spec in GENERATORS:
        n, N, mean_scale, cov_scale = GENERATORS[spec]
        return GaussianSource(n, N, mean_scale, cov_scale)
    if spec.startswith("gaussian:"):
        return _parse_generator(spec)
    path = Path(spec)
    if not path.exists():
        raise FileNotFoundError(f"no such data file or dataset name: {spec}")
    fmt = settings.get("format", "auto")
    if fmt == "auto":
        fmt = "csv" if path.suffix.lower() == ".csv" else "svmlight"
    if fmt == "svmlight":
        pos = settings.get("positive_label")
        return parse_svmlight(path, positive_label=None if pos in (None, "", "1", "+1") else _label_value(pos),
                              name=path.stem)
    if fmt != "csv":
        raise ConfigError(f"must be csv, svmlight or auto, got {fmt!r}", key="format")
    label = settings.get("label_column", "")
    if label.strip().lower() in ("", "none"):
        if require_labels:
            raise ConfigError("a label column is required here", key="label_column")
        return _features_only(path)
    drops = [_column(t) for t in settings.get("drop_columns", "").split(",") if t.strip()]
    return parse_csv(path, _negative_index(path, _column(label)), _label_value(settings["positive_label"]),
                     drop_columns=drops, name=path.stem)


def _features_only(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                if i == 1:
                    continue  # header
                raise ParseError("non-numeric cell", row=i) from None
    if not rows:
        raise DegenerateDataset(f"{path}: no rows")
    return np.array(rows, dtype=float)


def _parse_generator(spec: str) -> GaussianSource:
    """``gaussian:n=30,N=600,mean=1,cov=5,redraw=0``; redraw=0 keeps one sample and re-splits it."""
    fields = {"n": 2, "N": 100, "mean": 1.0, "cov": 1.0, "redraw": 1}
    for part in spec.split(":", 1)[1].split(","):
        if not part.strip():
            continue
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in fields:
            raise ConfigError(f"unknown generator field {key!r} (use n, N, mean, cov, redraw)", key="data")
        try:
            fields[key] = float(value)
        except ValueError:
            raise ConfigError(f"generator field {key!r} needs a number, got {value!r}", key="data") from None
    return GaussianSource(int(fields["n"]), int(fields["N"]), fields["mean"], fields["cov"],
                          redraw=bool(fields["redraw"]))


def _materialise(source, seed: int) -> Dataset:
    return source.draw(seed) if isinstance(source, GaussianSource) else source


# --- output ---------------------------------------------------------------------------

def _out_dir(settings: dict) -> Path:
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, settings: dict, params: Optional[ModelParams] = None) -> dict:
    resolved = dict(sorted(settings.items()))
    if params is not None:
        resolved.update({k: _plain(v) for k, v in params.as_dict().items()})
    (out / "config.txt").write_text("".join(f"{k} = {v}\n" for k, v in sorted(resolved.items())))
    return resolved


def _plain(v):
    return "auto" if v is None else v


# --- subcommands ------------------------------------------------------------------------

def cmd_train(args) -> int:
    settings = resolve_settings(args)
    spec = settings["model"]
    parse_model(spec)
    params = model_params(settings)
    seed = int(_number(settings, "seed", int))
    frac = _number(settings, "train_fraction")
    source = load_data(settings, seed)
    data = _materialise(source, seed)
    if frac is None or frac >= 1.0:
        train, test, where = data, data, "train"
    else:
        train, test = split(data, SplitSpec(frac, seed=seed))
        where = "test"
    if settings.get("scaling", "none") == "minmax":
        scaler = MinMaxScaler().fit(train)
        train, test = scaler.transform(train), scaler.transform(test)
    elif settings.get("scaling") not in SCALINGS:
        raise ConfigError(f"must be one of {SCALINGS}", key="scaling")

    out = _out_dir(settings)
    resolved = _write_config(out, settings, params)
    print("config: " + ", ".join(f"{k}={v}" for k, v in sorted(resolved.items())))
    result = fit_model(spec, train, params)
    clf = replace(result.classifier, config=resolved)
    (out / "classifier.json").write_text(clf.to_json())
    (out / "validation.txt").write_text(result.report.summary() + "\n")

    acc = accuracy(clf, test)
    print(f"{display_name(spec)}: objective {clf.objective:.6g}, ||w|| {np.linalg.norm(clf.w):.4g}")
    print(f"accuracy ({where}, {len(test)} points): {acc:.4f}")
    if not result.report.ok:
        print("warning: independent validation found violations; see validation.txt", file=sys.stderr)
    if np.linalg.norm(clf.w) <= TINY_W:
        print(f"warning: ||w|| = {np.linalg.norm(clf.w):.2e}; the classifier is close to a constant predictor",
              file=sys.stderr)
    print(f"wrote {out / 'classifier.json'}")
    return EXIT_OK


def cmd_predict(args) -> int:
    settings = resolve_settings(args)
    if not settings.get("classifier"):
        raise UsageError("no classifier given (use --classifier)")
    try:
        clf = TrainedClassifier.from_json(Path(settings["classifier"]).read_text())
    except (OSError, ValueError, KeyError) as exc:
        raise ParseError(f"cannot read classifier {settings['classifier']}: {exc}") from None
    seed = int(_number(settings, "seed", int))
    data = load_data(settings, seed, require_labels=False)
    if isinstance(data, GaussianSource):
        data = data.draw(seed)
    X = data.features if isinstance(data, Dataset) else data
    labels = clf.predict(X)
    out = _out_dir(settings)
    _write_config(out, settings)
    path = out / "predictions.txt"
    path.write_text("".join(f"{int(v)}\n" for v in labels))
    print(f"wrote {len(labels)} labels to {path}")
    if isinstance(data, Dataset):
        print(f"accuracy: {accuracy(clf, data):.4f}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    base: dict = {}
    pre = None
    name = getattr(args, "preset", None)
    if name is None and getattr(args, "config", None):
        name = read_config_file(args.config).get("preset")
    if name:
        pre = preset(name)
        base = {"models": ",".join(pre.models), "trials": str(pre.trials),
                "train_fraction": str(pre.train_fraction), "scaling": pre.scaling}
    settings = resolve_settings(args, base)
    params = model_params(settings, pre.params if pre else None)
    models = [m.strip() for m in settings.get("models", settings["model"]).split(",") if m.strip()]
    for m in models:
        parse_model(m)
    trials = _number(settings, "trials", int)
    seed = _number(settings, "seed", int)
    frac = _number(settings, "train_fraction")
    if settings.get("data"):
        source = load_data(settings, seed)
    elif pre is not None:
        source = pre.source()
    else:
        raise UsageError("benchmark needs --preset, --data or a config file naming one")
    workers = _number(settings, "workers", int) or default_workers()

    out = _out_dir(settings)
    resolved = _write_config(out, settings, params)
    print("config: " + ", ".join(f"{k}={v}" for k, v in sorted(resolved.items())))
    report = run_experiment(source, models, trials, seed, params, train_fraction=frac, workers=workers,
                            name=name or None, scaling=settings.get("scaling", "none"))
    if pre is not None and pre.chosen:
        report.config["chosen_not_documented"] = list(pre.chosen)
    # where and how fast the run went does not change its results
    report.config["resolved"] = {k: v for k, v in resolved.items() if k not in ("out", "workers")}
    (out / "report.json").write_text(report.to_json())
    (out / "report_no_timing.json").write_text(report.to_json(include_timing=False))
    (out / "trials.csv").write_text(report.to_csv())
    text = report.to_text()
    (out / "report.txt").write_text(text + "\n")
    print(text)
    print(f"wrote {out / 'report.json'}")
    report.raise_for_failures()
    return EXIT_OK


# --- parser -------------------------------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model settings (override the config file)")
    g.add_argument("--lambda", dest="lambda", type=float, help="core-set centre interpolation, 0 <= lambda < 0.5")
    g.add_argument("--theta", type=float, help="attention weight of the core sets")
    g.add_argument("--containment-fraction", dest="containment_fraction", type=float)
    g.add_argument("--radius-sq", dest="radius_sq", help="fixed squared core-set radius, or 'auto'")
    g.add_argument("--gamma1", type=float)
    g.add_argument("--gamma2", type=float)
    g.add_argument("--epsilon", type=float)
    g.add_argument("--p-norm", dest="p_norm", help="core-set norm: 1, 2 or inf")
    g.add_argument("--m-per-class", dest="m_per_class", type=int)
    g.add_argument("--C", dest="C", type=float, help="slack weight (default 16)")
    g.add_argument("--cov-scale", dest="cov_scale", type=float)
    g.add_argument("--N0", dest="N0", type=int)
    g.add_argument("--nu-quantile", dest="nu_quantile", type=float)
    g.add_argument("--rank", type=int)
    g.add_argument("--rank-fraction", dest="rank_fraction", type=float)
    g.add_argument("--backend", choices=BACKENDS)
    g.add_argument("--tol", type=float)


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", help=f"file path, builtin ({', '.join(sorted(BUILTIN_DATASETS))}), demo2d, "
                                  "or gaussian:n=..,N=..,mean=..,cov=..[,redraw=0]")
    g.add_argument("--format", choices=("auto", "csv", "svmlight"))
    g.add_argument("--label-column", dest="label_column", help="CSV label column name or position (-1 = last)")
    g.add_argument("--positive-label", dest="positive_label", help="label value mapped to +1")
    g.add_argument("--drop-columns", dest="drop_columns", help="comma-separated CSV columns to ignore")
    g.add_argument("--seed", type=int)
    g.add_argument("--train-fraction", dest="train_fraction", type=float)
    g.add_argument("--scaling", choices=SCALINGS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdrcsvm", description="Chance-constrained SVM training and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--out", help="output directory (default gdrcsvm-out)")

    p = sub.add_parser("train", help="train one model and write classifier.json")
    common(p)
    p.add_argument("--model", help=f"one of {', '.join(MODEL_KINDS)}; gdrc-app:FRACTION picks the rank")
    _add_data_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a data file with a trained classifier")
    common(p)
    p.add_argument("--classifier", help="classifier.json written by train")
    _add_data_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("benchmark", help="repeated-split experiment")
    common(p)
    p.add_argument("--preset", help=f"one of {', '.join(sorted(PRESETS))}")
    p.add_argument("--models", help="comma-separated model list")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int, help="process count (default: GDRCSVM_WORKERS or 1)")
    _add_data_flags(p)
    _add_model_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


DATA_ERRORS = (ParseError, LabelError, ShapeError, DegenerateDataset, DegenerateSplit, InsufficientData,
               FileNotFoundError)
SOLVER_ERRORS = (SolverFailed, ModelFailed, NumericalError, AssumptionViolated)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, RangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except KeyError as exc:
        print(f"data error: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
