"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import edr as edr_mod
from . import io as fio
from . import pipeline as pl
from . import synth

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> MethodSpec parameter name
PARAM_FLAGS = {"alpha": "alpha", "q": "q", "q2": "q2", "kn": "k_n", "bandwidth": "h", "slices": "slices"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, dashes equal underscores."""
    cfg = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config {path} line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        cfg[key.replace("-", "_")] = value
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fsirnn", description="Functional sliced inverse regression with neural network predictors.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")

    def method_flags(sp):
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--q", type=int)
        sp.add_argument("--q2", type=int)
        sp.add_argument("--kn", type=int)
        sp.add_argument("--bandwidth", type=float)
        sp.add_argument("--slices", type=int)
        sp.add_argument("--task", choices=("regression", "classification"))

    fit = sub.add_parser("fit", help="fit a model and write it as JSON")
    common(fit)
    method_flags(fit)
    fit.add_argument("--data")
    fit.add_argument("--method")
    fit.add_argument("--report", help="report path (default: <out>.report.txt)")

    pred = sub.add_parser("predict", help="predict responses for a curves file")
    common(pred)
    pred.add_argument("--model")
    pred.add_argument("--data")

    sel = sub.add_parser("select-alpha", help="choose alpha on a held-out half")
    common(sel)
    method_flags(sel)
    sel.add_argument("--data")
    sel.add_argument("--alphas", help="comma-separated alpha grid")

    bench = sub.add_parser("benchmark", help="compare methods over random splits")
    common(bench)
    method_flags(bench)
    bench.add_argument("--data")
    bench.add_argument("--method", action="append", help="name or name:key=value,...; repeatable")
    bench.add_argument("--splits", type=int)
    bench.add_argument("--learn-size", type=int)
    bench.add_argument("--test-size", type=int)
    bench.add_argument("--timing", action="store_true", default=None, help="record wall-clock seconds")

    st = sub.add_parser("synth-study", help="synthetic consistency study")
    common(st)
    st.add_argument("--n-list", help="comma-separated ascending sample sizes")
    st.add_argument("--replicates", type=int)
    st.add_argument("--alpha-c", type=float, help="alpha = c * N^(-1/3)")
    st.add_argument("--noise-sd", type=float)
    st.add_argument("--link", choices=synth.LINKS)
    st.add_argument("--slices", type=int)
    return p


def merged(args, defaults: dict | None = None) -> dict:
    """Config file values overridden by explicit flags."""
    cfg = dict(defaults or {})
    if getattr(args, "config", None):
        cfg.update(read_config(args.config))
    for k, v in vars(args).items():
        if k not in ("config", "command") and v is not None:
            cfg[k] = v
    return cfg


def need(cfg: dict, *keys):
    missing = [k for k in keys if cfg.get(k) in (None, "")]
    if missing:
        raise UsageError("missing required field(s): " + ", ".join(missing))
    return [cfg[k] for k in keys]


def _number(key, value, kind):
    try:
        return kind(value)
    except (TypeError, ValueError):
        raise UsageError(f"{key}: cannot read {value!r} as {kind.__name__}") from None


def method_spec(text: str, cfg: dict) -> pl.MethodSpec:
    """Parse ``name`` or ``name:key=value,...``; global flags fill the gaps."""
    name, _, inline = text.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in inline.split(","))):
        if "=" not in item:
            raise UsageError(f"method parameter {item!r} must be key=value")
        k, v = (s.strip() for s in item.split("=", 1))
        params[PARAM_FLAGS.get(k, k)] = v
    key = name.strip().lower()
    if key not in pl.METHODS:
        raise UsageError(f"unknown method {name!r}; choose from {', '.join(sorted(pl.METHODS))}")
    accepted = set(pl.METHODS[key][2]) | {"slices"}
    for flag, p in PARAM_FLAGS.items():
        if p in accepted and p not in params and cfg.get(flag) not in (None, ""):
            params[p] = cfg[flag]
    kinds = {"alpha": float, "h": float, "learning_rate": float, "momentum": float}
    typed = {}
    for k, v in params.items():
        if k in ("output_bias",):
            typed[k] = str(v).lower() in ("1", "true", "yes")
        elif k in ("metric",):
            typed[k] = v
        else:
            typed[k] = _number(k, v, kinds.get(k, int))
    try:
        return pl.MethodSpec(key, typed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(cfg, key="data"):
    (path,) = need(cfg, key)
    if not Path(path).is_file():
        raise FileNotFoundError(f"data file not found: {path}")
    return fio.read_dataset(path, cfg.get("task") or "regression")


def _fmt(v) -> str:
    return repr(float(v))


def write_report(path, model: pl.PipelineModel) -> None:
    m = model.metadata
    lines = [
        f"method: {model.spec.name}",
        "parameters: " + json.dumps(model.spec.to_dict()["params"], sort_keys=True),
        f"task: {model.task}",
        f"observations: {m['n_train']}",
        f"basis: order {model.basis.order}, {model.basis.n_basis} functions on "
        f"[{model.basis.domain[0]}, {model.basis.domain[1]}]",
        f"front end: {model.edr.front_end}",
        "eigenvalues (gamma_N at the estimated directions): " + ", ".join(_fmt(v) for v in m["eigenvalues"]),
    ]
    if "training" in m:
        t = m["training"]
        lines += [
            f"restarts: {t['restarts']}, chosen: {t['chosen']}",
            "best epoch per restart: " + ", ".join(str(e) for e in t["best_epoch"]),
            "epochs run per restart: " + ", ".join(str(e) for e in t["epochs_run"]),
            "test loss per restart: " + ", ".join(_fmt(v) for v in t["test_loss"]),
            "diverged restarts: " + str(sum(t["diverged"])),
        ]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_fit(cfg) -> int:
    out, method = need(cfg, "out", "method")
    spec = method_spec(method, cfg)
    data = _load(cfg)
    model = pl.fit_pipeline(data, spec, seed=int(cfg.get("seed") or 0))
    pl.save_model(model, out)
    report = cfg.get("report") or f"{out}.report.txt"
    write_report(report, model)
    print(f"wrote {out} and {report}")
    return EXIT_OK


def cmd_predict(cfg) -> int:
    model_path, data_path, out = need(cfg, "model", "data", "out")
    try:
        model = pl.load_model(model_path)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load model {model_path}: {exc}") from None
    grid, curves = fio.read_curves(data_path)
    H = model.n_classes
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if model.task == "classification":
            w.writerow(["label"] + [f"score_{h}" for h in range(1, H + 1)])
        else:
            w.writerow(["prediction"])
        if grid is not None:
            res = pl.predict(model, curves, grid=grid)
            if model.task == "classification":
                for lab, row in zip(*res):
                    w.writerow([int(lab)] + [_fmt(v) for v in row])
            else:
                for v in res:
                    w.writerow([_fmt(v)])
    print(f"wrote {len(curves)} predictions to {out}")
    return EXIT_OK


def cmd_select_alpha(cfg) -> int:
    out, alphas, q = need(cfg, "out", "alphas", "q")
    grid = [_number("alphas", a, float) for a in str(alphas).split(",") if a.strip()]
    q = _number("q", q, int)
    data = _load(cfg)
    basis = pl.default_basis(data.grid)
    best, table = edr_mod.select_alpha(
        data, basis, grid, q, n_slices=int(cfg.get("slices") or 10), seed=int(cfg.get("seed") or 0)
    )
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "error"])
        for a, e in table:
            w.writerow([_fmt(a), _fmt(e)])
    print(f"best alpha: {best!r}")
    return EXIT_OK


def cmd_benchmark(cfg) -> int:
    out, methods, splits, learn, test = need(cfg, "out", "method", "splits", "learn_size", "test_size")
    if isinstance(methods, str):
        methods = [m for m in methods.split(";") if m.strip()]
    specs = [method_spec(m, cfg) for m in methods]
    data = _load(cfg)
    timing = str(cfg.get("timing", False)).lower() in ("1", "true", "yes")
    reports = pl.benchmark(
        data,
        specs,
        _number("splits", splits, int),
        _number("learn_size", learn, int),
        _number("test_size", test, int),
        seed=int(cfg.get("seed") or 0),
    )
    pl.write_benchmark(reports, f"{out}.csv", f"{out}.json", include_timing=timing)
    for key, r in reports.items():
        print(f"{key}: mean {r.metric} {r.mean:.6g} (sd {r.std:.3g}, {len(r.values)} splits)")
    return EXIT_OK


def cmd_synth(cfg) -> int:
    out, n_list, reps = need(cfg, "out", "n_list", "replicates")
    Ns = [_number("n_list", n, int) for n in str(n_list).split(",") if n.strip()]
    c = _number("alpha_c", cfg.get("alpha_c", 0.5), float)
    noise = _number("noise_sd", cfg.get("noise_sd", 0.1), float)
    link = cfg.get("link", "linear")
    if link not in synth.LINKS:
        raise UsageError(f"link must be one of {', '.join(synth.LINKS)}")
    q_true = 2 if link == "product" else 1

    def template(N, seed):
        return synth.default_spec(N, seed=seed, noise_sd=noise, link=link, q_true=q_true)

    try:
        study = synth.consistency_study(
            template,
            Ns,
            c,
            replicates=_number("replicates", reps, int),
            seed=int(cfg.get("seed") or 0),
            n_slices=int(cfg.get("slices") or 10),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    study["config"] = {"n_list": Ns, "alpha_c": c, "noise_sd": noise, "link": link}
    synth.write_study(study, f"{out}.csv", f"{out}.json")
    for N, m in study["medians"].items():
        print(f"N={N}: median error {m:.6g}")
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "select-alpha": cmd_select_alpha,
    "benchmark": cmd_benchmark,
    "synth-study": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = merged(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        code, msg = EXIT_USAGE, str(exc)
    except (fio.DataFormatError, FileNotFoundError) as exc:
        code, msg = EXIT_DATA, str(exc)
    except (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError) as exc:
        code, msg = EXIT_NUMERIC, f"numerical failure: {exc}"
    except ValueError as exc:
        code, msg = EXIT_DATA, str(exc)
    print(f"fsirnn: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
