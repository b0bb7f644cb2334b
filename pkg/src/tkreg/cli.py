"""Command-line surface for batch experiments.

Subcommands: synth, train, gridsearch, features, bench.  Every run echoes
its effective configuration (flags, defaults, seed) as the first output
line, making the run reproducible from its own output.  Flags override an
optional line-oriented "key=value" --config file, which overrides the
built-in defaults.  TK_THREADS overrides --threads.

Exit codes: 0 success, 2 usage error, 3 data error, 4 capacity error,
5 numeric error.
"""

from __future__ import annotations

import argparse
import contextlib
import io
import json
import os
import sys
import time

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from .errors import (
    CapacityError,
    DataFormatError,
    NumericError,
    RangeError,
    TkregError,
)
from .kernels import (
    DENSE_BASELINE_CAP,
    TensorKernelSpec,
    build_dense_gram_matrix,
    build_packed_gram,
    memory_report,
)
from .solver import TrainConfig, solve_dual
from .symtensor import unique_count

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CAPACITY = 4
EXIT_NUMERIC = 5

KERNEL_NAMES = {"linear": "linear", "poly": "polynomial", "exp": "exponential"}

_REQUIRED = object()

# flag name -> (type, default); merged as flags > --config file > default
_COMMON_OPTS = {
    "seed": (int, 42),
    "threads": (int, None),
    "output": (str, None),
    "format": (str, "json"),
}

_COMMAND_OPTS = {
    "synth": {
        "n": (int, _REQUIRED),
        "d": (int, _REQUIRED),
        "s": (int, _REQUIRED),
        "sigma": (float, 0.05),
        "out": (str, _REQUIRED),
    },
    "train": {
        "train": (str, _REQUIRED),
        "kernel": (str, "linear"),
        "degree": (int, None),
        "q": (int, 4),
        "gamma": (float, 1.0),
        "m": (int, None),
        "iters": (int, 40),
        "rel_tol": (float, 1e-9),
        "out_model": (str, None),
    },
    "gridsearch": {
        "train": (str, _REQUIRED),
        "val": (str, _REQUIRED),
        "gammas": (str, _REQUIRED),
        "ms": (str, _REQUIRED),
        "reps": (int, 1),
        "kernel": (str, "linear"),
        "degree": (int, None),
        "q": (int, 4),
        "iters": (int, 40),
        "rel_tol": (float, 1e-9),
        "out": (str, None),
    },
    "features": {
        "model": (str, _REQUIRED),
        "truth": (str, None),
        "out": (str, None),
    },
    "bench": {
        "n": (int, _REQUIRED),
        "d": (int, 50),
        "q": (int, 4),
        "kernel": (str, "linear"),
        "degree": (int, None),
        "layout": (str, "both"),
        "cap": (int, DENSE_BASELINE_CAP),
        "iters": (int, 5),
        "gamma": (float, 1.0),
    },
}

_CHOICES = {
    "kernel": tuple(KERNEL_NAMES),
    "layout": ("packed", "dense", "both"),
    "format": ("csv", "json"),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tkreg",
        description="Sparse regression with tensor kernels on a packed symmetric Gram layout.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command, opts in _COMMAND_OPTS.items():
        cp = sub.add_parser(command)
        cp.add_argument("--config", default=None, help="key=value defaults file")
        for name, (typ, _default) in {**_COMMON_OPTS, **opts}.items():
            flag = "--" + name.replace("_", "-")
            # defaults are resolved after the config file is read
            cp.add_argument(flag, type=typ, default=None, choices=_CHOICES.get(name))
    return parser


def _read_config_file(path):
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise DataFormatError(
                        f"{path}: line {lineno}: expected key=value, got {line!r}"
                    )
                values[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise DataFormatError(f"cannot read config file: {exc}") from exc
    return values


def _effective_config(args):
    opts = {**_COMMON_OPTS, **_COMMAND_OPTS[args.command]}
    file_values = _read_config_file(args.config) if args.config else {}
    unknown = set(file_values) - set(opts)
    if unknown:
        raise ValueError(f"unknown config file keys: {sorted(unknown)}")
    resolved = {}
    for name, (typ, default) in opts.items():
        value = getattr(args, name)
        if value is None and name in file_values:
            value = typ(file_values[name])
            if name in _CHOICES and value not in _CHOICES[name]:
                raise ValueError(f"invalid value {value!r} for {name}")
        if value is None:
            if default is _REQUIRED:
                raise ValueError(f"missing required option --{name.replace('_', '-')}")
            value = default
        resolved[name] = value
    if os.environ.get("TK_THREADS"):
        resolved["threads"] = int(os.environ["TK_THREADS"])
    return resolved


def _parse_num_list(text, typ, flag):
    try:
        values = [typ(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ValueError(f"bad --{flag} list {text!r}: {exc}") from exc
    if not values:
        raise ValueError(f"--{flag} list is empty")
    return values


class _Emitter:
    """Writes the config echo plus result records in the chosen format."""

    def __init__(self, fmt, stream):
        self.fmt = fmt
        self.stream = stream

    def config(self, command, cfg):
        if self.fmt == "json":
            self.stream.write(json.dumps({"command": command, "config": cfg}) + "\n")
        else:
            pairs = " ".join(f"{k}={v}" for k, v in cfg.items())
            self.stream.write(f"# config: command={command} {pairs}\n")

    def result(self, record):
        if self.fmt == "json":
            self.stream.write(json.dumps(record) + "\n")
        else:
            flat = _flatten(record)
            self.stream.write(",".join(str(k) for k in flat) + "\n")
            self.stream.write(",".join(_csv_cell(flat[k]) for k in flat) + "\n")


def _flatten(record, prefix=""):
    out = {}
    for key, value in record.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, prefix=name + "."))
        else:
            out[name] = value
    return out


def _csv_cell(value):
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


def _kernel_spec(cfg):
    family = KERNEL_NAMES[cfg["kernel"]]
    degree = cfg.get("degree")
    if family != "polynomial" and degree is not None:
        raise ValueError("--degree applies to the polynomial kernel only")
    if family == "polynomial" and degree is None:
        degree = 2
    return TensorKernelSpec(family=family, q=cfg["q"], degree=degree)


@contextlib.contextmanager
def _thread_limit(threads):
    if threads is None:
        yield
        return
    if threads < 1:
        raise ValueError(f"--threads must be >= 1, got {threads}")
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        yield


def _open_output(cfg):
    if cfg["output"] is None:
        return contextlib.nullcontext(sys.stdout)
    return open(cfg["output"], "w", encoding="utf-8")


def _cmd_synth(cfg, emit):
    spec = data_mod.SyntheticSpec(
        n=cfg["n"], d=cfg["d"], sparsity=cfg["s"], sigma=cfg["sigma"], seed=cfg["seed"]
    )
    dataset = data_mod.gen_synthetic(spec)
    data_mod.save_dense_csv(dataset, cfg["out"])
    truth_path = cfg["out"] + ".truth.json"
    data_mod.save_truth_json(dataset.truth, truth_path)
    emit.result(
        {
            "out": cfg["out"],
            "truth": truth_path,
            "n": spec.n,
            "d": spec.d,
            "s": spec.sparsity,
            "sigma": spec.sigma,
        }
    )
    return EXIT_OK


def _cmd_train(cfg, emit):
    dataset = data_mod.load_dense_csv(cfg["train"])
    kernel = _kernel_spec(cfg)
    train_cfg = TrainConfig(
        gamma=cfg["gamma"], max_iters=cfg["iters"], rel_tol=cfg["rel_tol"],
        seed=cfg["seed"],
    )
    m = cfg["m"] if cfg["m"] is not None else dataset.n
    plan = model_mod.nystrom_sample(dataset.n, m, cfg["seed"])
    model = model_mod.fit(dataset.X, dataset.y, kernel, train_cfg, plan)
    record = {
        "n_train": dataset.n,
        "m": m,
        "train_mse": metrics_mod.mse(model_mod.predict(model, dataset.X), dataset.y),
        "gram_seconds": model.gram_seconds,
        "solve_seconds": model.solve_seconds,
        "iters_run": model.iters_run,
        "converged": model.converged,
    }
    if cfg["out_model"]:
        model_mod.save_model(model, cfg["out_model"])
        record["model"] = cfg["out_model"]
    emit.result(record)
    return EXIT_OK


def _cmd_gridsearch(cfg, emit):
    train = data_mod.load_dense_csv(cfg["train"])
    val = data_mod.load_dense_csv(cfg["val"])
    kernel = _kernel_spec(cfg)
    gammas = _parse_num_list(cfg["gammas"], float, "gammas")
    ms = _parse_num_list(cfg["ms"], int, "ms")
    train_cfg = TrainConfig(
        gamma=gammas[0], max_iters=cfg["iters"], rel_tol=cfg["rel_tol"],
        seed=cfg["seed"],
    )
    rows = metrics_mod.grid_search(
        train, val, kernel, gammas, ms, train_cfg, cfg["seed"], repetitions=cfg["reps"]
    )
    # the table artifact keeps the documented CSV schema regardless of the
    # printed-record format
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8", newline="") as fh:
            metrics_mod.write_grid_csv(rows, fh)
    elif cfg["format"] == "csv":
        buf = io.StringIO()
        metrics_mod.write_grid_csv(rows, buf)
        emit.stream.write(buf.getvalue())
    else:
        emit.result({"rows": [row.__dict__ for row in rows]})
    best = metrics_mod.best_cell(rows)
    emit.result({"best": best.__dict__})
    return EXIT_OK


def _cmd_features(cfg, emit):
    model = model_mod.load_model(cfg["model"])
    truth = None
    if cfg["truth"]:
        truth = data_mod.load_truth_json(cfg["truth"]).support
    report = model_mod.select_features(model, truth=truth)
    record = {
        "threshold": report.threshold,
        "degenerate": report.degenerate,
        "selected": [int(i) for i in report.selected],
        "weights": [float(w) for w in model.weights],
        "true_positives": report.true_positives,
        "false_positives": report.false_positives,
    }
    if cfg["out"]:
        with open(cfg["out"], "w", encoding="utf-8") as fh:
            json.dump(record, fh)
            fh.write("\n")
        emit.result({"out": cfg["out"], "selected_count": len(report.selected)})
    else:
        emit.result(record)
    return EXIT_OK


def _cmd_bench(cfg, emit):
    n, d, q = cfg["n"], cfg["d"], cfg["q"]
    kernel = _kernel_spec(cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    X = rng.standard_normal((n, d))
    y = rng.standard_normal(n)
    packed_entries = unique_count(n, q)
    dense_entries = n ** q
    record = {
        "n": n,
        "d": d,
        "q": q,
        "kernel": kernel.family,
        "packed_entries": packed_entries,
        "dense_entries": dense_entries,
        "entry_ratio": packed_entries / dense_entries,
        "memory": memory_report(n, q),
    }
    refused = False
    if cfg["layout"] in ("packed", "both"):
        t0 = time.perf_counter()
        gram = build_packed_gram(kernel, X)
        build_s = time.perf_counter() - t0
        t0 = time.perf_counter()
        solve_dual(gram, y, TrainConfig(gamma=cfg["gamma"], max_iters=cfg["iters"]))
        solve_s = time.perf_counter() - t0
        record["packed"] = {"build_seconds": build_s, "solve_seconds": solve_s}
    if cfg["layout"] in ("dense", "both"):
        if n > cfg["cap"]:
            record["dense"] = {
                "refused": True,
                "cap": cfg["cap"],
                "reason": f"dense layout needs n <= {cfg['cap']}, got n = {n}",
            }
            refused = True
        else:
            t0 = time.perf_counter()
            build_dense_gram_matrix(kernel, X, cap=cfg["cap"])
            record["dense"] = {
                "refused": False,
                "build_seconds": time.perf_counter() - t0,
            }
    emit.result(record)
    return EXIT_CAPACITY if refused else EXIT_OK


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "gridsearch": _cmd_gridsearch,
    "features": _cmd_features,
    "bench": _cmd_bench,
}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        cfg = _effective_config(args)
        with _thread_limit(cfg["threads"]), _open_output(cfg) as stream:
            emit = _Emitter(cfg["format"], stream)
            emit.config(args.command, cfg)
            return _HANDLERS[args.command](cfg, emit)
    except CapacityError as exc:
        print(f"tkreg: capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (NumericError, RangeError) as exc:
        print(f"tkreg: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataFormatError as exc:
        print(f"tkreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"tkreg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TkregError, ValueError) as exc:
        print(f"tkreg: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
