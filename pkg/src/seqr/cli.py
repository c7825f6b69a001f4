"""Command-line entry point: ``seqr {gen,preprocess,calibrate,route,bench,verify}``.

Settings come from built-in defaults, then ``--preset``, then a
``--config`` file of ``key=value`` lines, then explicit flags (last wins).
Exit codes: 1 usage or validation, 2 I/O, 3 verification failure.
"""

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import bench, synthgen
from .adapter import FORM_KINDS, METHODS, RoutedForms, build_forms
from .calibration import CALIBRATED_METHODS, calibrate
from .container import atomic_write, load_library, save_library
from .errors import ContainerError, SeqrError
from .routing import route
from .verify import check_counterexample, run_all

log = logging.getLogger("seqr")

EXIT_USAGE, EXIT_IO, EXIT_VERIFY = 1, 2, 3
COMMANDS = ("gen", "preprocess", "calibrate", "route", "bench", "verify")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str = ""
    seed: int = 0
    library: str | None = None
    queries: str | None = None
    method: str = "seqr"
    k: int | None = None
    k_sweep: str | None = None
    calibrated: str = "off"
    out: str | None = None
    summary: str | None = None
    preset: str | None = None
    # generation
    n_adapters: int = 10
    m: int = 64
    n: int = 64
    rank: int = 16
    shared_a: str = "on"
    task_dim: int = 1
    gain: float = 4.0
    noise: float = 0.1
    bias: str | None = None
    adversarial_pairs: int = 0
    per_task: int = 50
    # preprocess / calibrate
    forms: str | None = None
    discard_b: str = "off"
    samples: str | None = None
    calib_per_task: int = 200
    # bench
    axis: str | None = None
    grid: str | None = None
    lag_k: int = 20
    measure: str = "on"
    reps: int = 5
    # verify
    counterexample: bool = False
    trials: int = 200


PRESETS = {
    "table1": {"n_adapters": 1000, "m": 4096, "n": 4096, "rank": 8, "lag_k": 20},
    "fig3": {"n_adapters": 10, "m": 64, "n": 64, "rank": 16, "shared_a": "on", "adversarial_pairs": 2,
             "noise": 0.3, "per_task": 100, "method": "seqr", "k_sweep": "1..N"},
}

_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    # optional fields are ``T | None``; coerce to T
    kind = next((a for a in getattr(kind, "__args__", ()) if a is not type(None)), kind)
    if isinstance(value, str):
        if kind is int:
            return int(value)
        if kind is float:
            return float(value)
        if kind is bool:
            if value.lower() in ("1", "true", "on", "yes"):
                return True
            if value.lower() in ("0", "false", "off", "no"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
    return value


def read_config_file(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in _TYPES or key == "command":
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--seed", type=int)
    g.add_argument("--library")
    g.add_argument("--queries")
    g.add_argument("--method", choices=METHODS)
    g.add_argument("--k", type=int)
    g.add_argument("--calibrated", choices=("on", "off"))
    g.add_argument("--out")
    g.add_argument("--config")
    g.add_argument("--preset", choices=sorted(PRESETS))

    p = _Parser(prog="seqr", description="Unsupervised LoRA routing toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen", parents=[common], help="generate a synthetic library and queries")
    gen.add_argument("--n-adapters", type=int)
    gen.add_argument("--m", type=int)
    gen.add_argument("--n", type=int)
    gen.add_argument("--rank", type=int)
    gen.add_argument("--shared-a", choices=("on", "off"))
    gen.add_argument("--task-dim", type=int)
    gen.add_argument("--gain", type=float)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--bias", help="comma-separated per-adapter scales")
    gen.add_argument("--adversarial-pairs", type=int)
    gen.add_argument("--per-task", type=int)

    pre = sub.add_parser("preprocess", parents=[common], help="add routed forms to a library")
    pre.add_argument("--forms", help="comma list from arrow,spectr,seqr (default: all that apply)")
    pre.add_argument("--discard-b", choices=("on", "off"))

    cal = sub.add_parser("calibrate", parents=[common], help="estimate per-adapter norm statistics")
    cal.add_argument("--samples", help="query file whose task labels group the samples")
    cal.add_argument("--calib-per-task", type=int)

    rt = sub.add_parser("route", parents=[common], help="route queries and report accuracy")
    rt.add_argument("--k-sweep", help="e.g. 1..N, 1..10 or 1,3,5")
    rt.add_argument("--summary", help="CSV path for aggregate accuracy (default: standard output)")

    bn = sub.add_parser("bench", parents=[common], help="routing cost models and measurements")
    bn.add_argument("--axis", choices=sorted(bench.AXES))
    bn.add_argument("--grid", help="comma-separated axis values")
    bn.add_argument("--n-adapters", type=int)
    bn.add_argument("--m", type=int)
    bn.add_argument("--n", type=int)
    bn.add_argument("--rank", type=int)
    bn.add_argument("--lag-k", type=int)
    bn.add_argument("--measure", choices=("on", "off"))
    bn.add_argument("--reps", type=int)

    vf = sub.add_parser("verify", parents=[common], help="check the routing equivalences")
    vf.add_argument("--counterexample", action="store_true", default=None)
    vf.add_argument("--trials", type=int)
    return p


def resolve_config(argv):
    ns = build_parser().parse_args(argv)
    given = {k: v for k, v in vars(ns).items() if v is not None and k != "config"}
    # cost runs default to the reference cost sizes, generation to desk scale
    values = dict(PRESETS["table1"]) if ns.command == "bench" else {}
    preset = given.get("preset")
    file_values = read_config_file(ns.config) if ns.config else {}
    preset = preset or file_values.get("preset")
    if preset:
        if preset not in PRESETS:
            raise UsageError(f"unknown preset {preset!r}")
        values.update(PRESETS[preset])
    values.update(file_values)
    values.update(given)
    try:
        values = {k: _coerce(k, v) for k, v in values.items()}
        cfg = RunConfig(**values)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    validate(cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise UsageError(msg)


def validate(cfg):
    """Reject bad settings before any file is read or buffer allocated."""
    _require(cfg.command in COMMANDS, f"unknown command {cfg.command!r}")
    _require(cfg.method in METHODS, f"--method must be one of {', '.join(METHODS)}")
    _require(cfg.calibrated in ("on", "off"), "--calibrated must be on or off")
    for name in ("n_adapters", "m", "n", "rank", "task_dim", "reps", "lag_k", "trials", "calib_per_task"):
        _require(getattr(cfg, name) >= 1, f"--{name.replace('_', '-')} must be >= 1")
    _require(cfg.per_task >= 0 and cfg.adversarial_pairs >= 0, "counts must be nonnegative")
    _require(cfg.k is None or cfg.k >= 1, "--k must be >= 1")
    if cfg.command == "gen":
        _require(cfg.library and cfg.queries, "gen needs --library and --queries output paths")
        try:
            synth_spec(cfg)
        except (ValueError, SeqrError) as exc:
            raise UsageError(str(exc)) from exc
    if cfg.command in ("preprocess", "calibrate", "route"):
        _require(cfg.library, f"{cfg.command} needs --library")
    if cfg.command == "route":
        _require(cfg.queries, "route needs --queries")
        _require(cfg.method != "lag" or cfg.k or cfg.k_sweep, "lag routing needs --k or --k-sweep")
    if cfg.command == "calibrate":
        _require(cfg.method in CALIBRATED_METHODS or cfg.method == "seqr",
                 f"calibration applies to {', '.join(CALIBRATED_METHODS)}")
    if cfg.command == "preprocess" and cfg.forms:
        bad = set(cfg.forms.split(",")) - set(FORM_KINDS)
        _require(not bad, f"unknown forms: {', '.join(sorted(bad))}")
    if cfg.command == "bench":
        _require(cfg.lag_k <= cfg.n_adapters, "--lag-k cannot exceed --n-adapters")
        if cfg.grid:
            try:
                vals = [int(v) for v in cfg.grid.split(",")]
            except ValueError as exc:
                raise UsageError(f"bad --grid: {cfg.grid}") from exc
            _require(cfg.axis and all(v >= 1 for v in vals), "--grid needs --axis and positive values")


def synth_spec(cfg):
    bias = tuple(float(b) for b in cfg.bias.split(",")) if cfg.bias else None
    return synthgen.SynthSpec(
        seed=cfg.seed, n_adapters=cfg.n_adapters, m=cfg.m, n=cfg.n, r=cfg.rank,
        shared_a=cfg.shared_a == "on", task_subspace_dim=cfg.task_dim, signal_gain=cfg.gain,
        noise_level=cfg.noise, bias_scales=bias, adversarial_pairs=cfg.adversarial_pairs,
    )


def _spec_from_meta(meta):
    raw = meta.get("synth_spec")
    if raw is None:
        return None
    d = json.loads(raw)
    if d.get("bias_scales") is not None:
        d["bias_scales"] = tuple(d["bias_scales"])
    return synthgen.SynthSpec(**d)


def _emit(text, path):
    if path:
        atomic_write(path, text, "w")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def cmd_gen(cfg):
    spec = synth_spec(cfg)
    lib = synthgen.gen_library(spec)
    meta = dict(lib.meta)
    meta["synth_spec"] = json.dumps(dataclasses.asdict(spec), sort_keys=True)
    lib = dataclasses.replace(lib, meta=meta)
    queries = synthgen.gen_queries(lib, spec, cfg.per_task)
    save_library(lib, cfg.library)
    synthgen.save_queries(queries, cfg.queries, n=spec.n)
    log.info("wrote %d adapters to %s and %d queries to %s", lib.n_adapters, cfg.library, len(queries), cfg.queries)
    print(f"library {cfg.library}: {lib.n_adapters} adapters, dims {lib.dims}, shared A {lib.is_shared}")
    print(f"queries {cfg.queries}: {len(queries)}")
    return 0


def cmd_preprocess(cfg):
    lib, forms, stats = load_library(cfg.library)
    kinds = cfg.forms.split(",") if cfg.forms else [k for k in FORM_KINDS if k != "seqr" or lib.is_shared]
    built = {k: getattr(forms, k) for k in FORM_KINDS}
    for k in kinds:
        built[k] = build_forms(lib, k)
    forms = RoutedForms(**built)
    out = cfg.out or cfg.library
    save_library(lib, out, forms, stats, discard_b=cfg.discard_b == "on")
    print(f"{out}: forms {', '.join(forms.kinds())}")
    return 0


def _calibration_sets(cfg, lib):
    if cfg.samples:
        qs = synthgen.load_queries(cfg.samples)
        X = np.array([q.x for q in qs])
        tasks = np.array([q.task for q in qs])
        return [X[tasks == i] for i in range(lib.n_adapters)]
    spec = _spec_from_meta(lib.meta)
    if spec is None:
        raise UsageError("library has no generator record; pass --samples")
    return synthgen.calibration_samples(spec, cfg.calib_per_task)


def cmd_calibrate(cfg):
    lib, forms, _ = load_library(cfg.library)
    method = cfg.method
    if method == "seqr" and not lib.is_shared:
        method = "spectr"
    if method in ("spectr", "seqr") and getattr(forms, method) is None:
        raise UsageError(f"library has no {method} forms; run preprocess first")
    try:
        stats = calibrate(lib, forms, _calibration_sets(cfg, lib), method)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = cfg.out or cfg.library
    save_library(lib, out, forms, stats, discard_b=lib.meta.get("b_reconstructed") == "true")
    print(f"{out}: calibrated {method} stats for {len(stats)} adapters")
    return 0


def parse_k_sweep(text, N):
    text = text.replace("N", str(N))
    if ".." in text:
        lo, hi = (int(v) for v in text.split(".."))
        ks = list(range(lo, hi + 1))
    else:
        ks = [int(v) for v in text.split(",")]
    if not ks or min(ks) < 1 or max(ks) > N:
        raise UsageError(f"k sweep {text!r} must lie within 1..{N}")
    return ks


def cmd_route(cfg):
    lib, forms, stats = load_library(cfg.library)
    queries = synthgen.load_queries(cfg.queries)
    N = lib.n_adapters
    if queries and queries[0].x.shape[0] != lib.dims[1]:
        raise UsageError(f"queries have dim {queries[0].x.shape[0]}, library expects {lib.dims[1]}")
    calibrated = cfg.calibrated == "on"
    if calibrated and stats is None:
        raise UsageError("--calibrated on but the library holds no calibration stats")
    use_stats = stats if calibrated else None

    runs = []
    if cfg.method != "lag":
        runs.append((cfg.method, None))
    ks = parse_k_sweep(cfg.k_sweep, N) if cfg.k_sweep else []
    if cfg.method == "lag" and cfg.k and not ks:
        ks = [cfg.k]
    if cfg.k and not 1 <= cfg.k <= N:
        raise UsageError(f"--k must lie within 1..{N}")
    runs += [("lag", k) for k in ks]

    lines, summary = [], []
    for method, k in runs:
        st = use_stats if method in ("spectr", "seqr", "lag") else None
        hits_norm = hits_task = 0
        for qi, q in enumerate(queries):
            dec = route(method, lib, forms, q.x, k=k, stats=st)
            rec = {"query": qi, "task": q.task, "oracle": q.oracle_norm_winner, "calibrated": st is not None}
            rec.update(dec.to_record())
            lines.append(json.dumps(rec))
            hits_norm += dec.selected == q.oracle_norm_winner
            hits_task += dec.selected == q.task
        nq = max(len(queries), 1)
        summary.append((method, "" if k is None else k, "on" if st is not None else "off", len(queries),
                        f"{hits_norm / nq:.6f}", f"{hits_task / nq:.6f}"))
    _emit("".join(line + "\n" for line in lines), cfg.out)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("method", "k", "calibrated", "n_queries", "norm_accuracy", "task_accuracy"))
    w.writerows(summary)
    _emit(buf.getvalue(), cfg.summary)
    return 0


def cmd_bench(cfg):
    p = bench.CostParams(n_adapters=cfg.n_adapters, m=cfg.m, n=cfg.n, r=cfg.rank, lag_k=cfg.lag_k)
    measured = cfg.measure == "on"
    if cfg.preset == "table1" and not cfg.axis:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("method", "model_flops", "compact", "measured_flops", "storage_params", "wall_ns"))
        work = bench.SyntheticWorkload(p, cfg.seed)
        x = np.random.Generator(np.random.PCG64([cfg.seed, 99])).standard_normal(p.n)
        for method in bench.COST_METHODS:
            rep = bench.measure(method, work, [x], p, cfg.reps) if measured else bench.model_report(method, p)
            w.writerow((method, rep.model_flops, bench.humanize(rep.model_flops), rep.measured_flops,
                        rep.storage_params, rep.wall_ns))
        _emit(buf.getvalue(), cfg.out)
        return 0
    axis = cfg.axis or "rank"
    grid = [int(v) for v in cfg.grid.split(",")] if cfg.grid else None
    rows = bench.sweep(axis, grid, p, do_measure=measured, reps=cfg.reps, seed=cfg.seed)
    _emit(bench.rows_to_csv(rows), cfg.out)
    return 0


def cmd_verify(cfg):
    if cfg.counterexample:
        results = [check_counterexample()]
    else:
        results = run_all(cfg.trials, cfg.seed)
    for res in results:
        print(res.line())
    return 0 if all(r.ok for r in results) else EXIT_VERIFY


HANDLERS = {
    "gen": cmd_gen,
    "preprocess": cmd_preprocess,
    "calibrate": cmd_calibrate,
    "route": cmd_route,
    "bench": cmd_bench,
    "verify": cmd_verify,
}


def _setup_logging():
    level = os.environ.get("SEQR_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _setup_logging()
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
        return HANDLERS[cfg.command](cfg)
    except UsageError as exc:
        print(f"seqr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContainerError, OSError) as exc:
        print(f"seqr: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SeqrError as exc:
        print(f"seqr: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
