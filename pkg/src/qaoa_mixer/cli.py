"""Command line entry point.

Every subcommand writes its outputs (CSV with a header row, JSON, checkpoints)
into ``--out`` together with ``manifest.json``.  The manifest stores the
fully resolved configuration, so ``qaoa-mixer rerun <manifest>`` repeats the
run and regenerates the same files.

Exit codes: 0 success, 2 usage or input error, 3 capacity exceeded,
4 numeric failure, 1 any other package error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import datasets, mgnet
from .errors import CapacityError, InputError, NumericError, QaoaMixerError
from .mixer import (
    MixerSpec,
    encode_mixer,
    encode_problem,
    fg_spec,
    grouping_pool,
    ng_spec,
    pg_spec,
)
from .pauli import (
    PauliSum,
    automorphism_orbits,
    dla_dimension,
    effective_dimension,
    fg_design,
    ng_design,
    pg_design,
    AnsatzDesign,
)
from .problems import (
    ProblemInstance,
    adapt_qaoa,
    approximation_ratio,
    greedy_maxcut,
    gw_maxcut,
    ma_qaoa_spec,
    optimum,
)
from .simulator import Engine, initial_params, optimize_batch, plus_state

log = logging.getLogger("qaoa_mixer")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CAPACITY, EXIT_NUMERIC = 0, 1, 2, 3, 4
MANIFEST_VERSION = 1
RATIO_LIMIT = 16  # largest n for which exact oracles are attempted


class UsageError(InputError):
    pass


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if v is None:
        return "NA"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _parse_ints(text: str) -> list[int]:
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of integers, got {text!r}") from exc


def _load_instance(args) -> ProblemInstance:
    if getattr(args, "instance", None):
        path = Path(args.instance)
        if not path.exists():
            raise UsageError(f"instance file {path} does not exist")
        return ProblemInstance.from_json(path.read_text())
    rng = np.random.default_rng(datasets.label_seed(args.seed, "cli-instance"))
    return datasets.sample_instance(args.task, args.n, rng)


def _safe_ratio(instance: ProblemInstance, value: float, reference: float | None):
    if reference is None:
        return None
    return approximation_ratio(instance, value, reference)


def _reference(instance: ProblemInstance):
    if instance.n > RATIO_LIMIT:
        return None
    try:
        return optimum(instance)
    except CapacityError:
        return None


def _resolve_mixer(source: str, instance: ProblemInstance, p: int, generator_path=None) -> MixerSpec:
    n = instance.n
    if source == "fg":
        return fg_spec(n)
    if source == "ng":
        return ng_spec(n)
    if source == "ma":
        return ma_qaoa_spec(n)
    if source == "pg":
        return pg_spec(instance.graph)
    if source.startswith("file:"):
        spec = MixerSpec.from_text(source[5:])
        if spec.n != n:
            raise UsageError(f"mixer {spec} has {spec.n} qubits, instance has {n}")
        return spec
    if source == "mgnet":
        if not generator_path:
            raise UsageError("--mixer mgnet needs --generator <checkpoint>")
        gen = mgnet.MixerGenerator.load(generator_path)
        return mgnet.generator_forward(gen, encode_problem(instance), p, mode="hard")
    raise UsageError(f"unknown mixer source {source!r}")


def _qaoa_runs(instance: ProblemInstance, spec: MixerSpec, p: int, restarts: int, epochs: int,
               lr: float, seed: int):
    engine = Engine(instance.cost_hamiltonian(), p, [spec] * restarts)
    rng = np.random.default_rng(seed)
    init = np.concatenate([initial_params(spec.num_params(p), rng) for _ in range(restarts)])
    reports = optimize_batch(engine, init, epochs, lr)
    return engine, reports


# ---------------------------------------------------------------------------
# subcommands; each returns the list of files it wrote
# ---------------------------------------------------------------------------


def cmd_gen_data(args) -> list[Path]:
    out = Path(args.out)
    depths = _parse_ints(args.depths)

    def progress(done, total):
        print(f"gen-data: block {done}/{total}", file=sys.stderr)

    m = datasets.build_estimator_dataset(
        out, task=args.task, S=args.S, n=args.n, depths=depths,
        types_per_instance=args.types_per_instance, groupings_per_type=args.groupings_per_type,
        seed=args.seed, anchors=args.anchors, restarts=args.restarts, epochs=args.epochs,
        lr=args.lr, progress=progress, jobs=args.jobs,
    )
    print(f"{m.count} records in {out / m.records_file}")
    return [out / "manifest.json", out / m.records_file]


def cmd_train(args) -> list[Path]:
    out = Path(args.out)
    data = Path(args.data)
    if not (data / "manifest.json").exists() and not data.is_file():
        raise UsageError(f"no dataset manifest at {data}")
    records = datasets.load_records(data)
    if not records:
        raise UsageError("dataset is empty")
    samples = datasets.records_to_samples(records)
    written = []
    est_path = out / "estimator.json"
    if args.stage in ("1", "both"):
        est, rep = mgnet.train_estimator(samples, epochs=args.epochs, lr=args.lr,
                                         lambda_e=args.lambda_e, lambda_r=args.lambda_r,
                                         seed=args.seed, batch_size=args.batch_size)
        est.save(est_path)
        written += [est_path, _write_csv(
            out / "estimator_loss.csv", ["epoch", "loss", "mse", "ranking"],
            [(k, a, b, c) for k, (a, b, c) in enumerate(zip(rep.loss_trace, rep.mse_trace, rep.rank_trace))],
        )]
    if args.stage in ("2", "both"):
        src = Path(args.estimator) if args.estimator else est_path
        if not src.exists():
            raise UsageError("stage 2 needs a stage-1 estimator checkpoint (run stage 1 first)")
        est = mgnet.CostEstimator.load(src)
        problems = {}
        for rec, s in zip(records, samples):
            problems.setdefault(rec["instance_id"], s.problem)
        depths = sorted({int(r["p"]) for r in records})
        gen = mgnet.MixerGenerator(seed=args.seed)
        gen, rep = mgnet.train_generator(gen, est, list(problems.values()), depths,
                                         epochs=args.gen_epochs, lr=args.lr, seed=args.seed,
                                         batch_size=args.batch_size)
        gen_path = out / "generator.json"
        gen.save(gen_path)
        rows = [(k, rep.loss_trace[k - 1] if k else None, v) for k, v in enumerate(rep.eval_trace)]
        written += [gen_path, _write_csv(out / "generator_loss.csv", ["epoch", "loss", "objective"], rows)]
    return written


def cmd_solve(args) -> list[Path]:
    out = Path(args.out)
    instance = _load_instance(args)
    if args.mixer == "adapt":
        circ, rep = adapt_qaoa(instance, max_depth=args.p, epochs=args.epochs, lr=args.lr)
        ref = _reference(instance)
        ratio = _safe_ratio(instance, rep.final_loss, ref)
        n_params = 2 * circ.p
        rows = [(instance.kind, instance.n, circ.p, "adapt", n_params, 0, rep.final_loss,
                 rep.best_loss, ratio, "")]
        traces = [(0, k, l, g) for k, (l, g) in enumerate(zip(rep.loss_trace, rep.grad_norm_trace))]
    else:
        spec = _resolve_mixer(args.mixer, instance, args.p, args.generator)
        engine, reports = _qaoa_runs(instance, spec, args.p, args.restarts, args.epochs, args.lr,
                                     datasets.label_seed(args.seed, "solve"))
        ref = _reference(instance)
        states = engine.evolve(np.concatenate([r.params for r in reports]))
        rows = []
        for k, r in enumerate(reports):
            bits = format(int(np.argmax(np.abs(states[k]) ** 2)), f"0{instance.n}b")
            rows.append((instance.kind, instance.n, args.p, spec.to_text(), spec.num_params(args.p), k,
                         r.final_loss, r.best_loss, _safe_ratio(instance, r.final_loss, ref), bits))
        traces = [(k, e, l, g) for k, r in enumerate(reports)
                  for e, (l, g) in enumerate(zip(r.loss_trace, r.grad_norm_trace))]
    header = ["task", "n", "p", "mixer", "num_params", "restart", "final_loss", "best_loss", "ratio",
              "bitstring"]
    best = min(rows, key=lambda r: r[6])
    ratio_txt = "unavailable" if best[8] is None else f"{best[8]:.6f}"
    print(f"mixer {best[3]}  #P {best[4]}  best <H_C> {best[6]:.8f}  r {ratio_txt}")
    return [_write_csv(out / "solve.csv", header, rows),
            _write_csv(out / "trace.csv", ["restart", "epoch", "loss", "grad_norm"], traces)]


def _designs(instance: ProblemInstance, extra: Sequence[str]):
    cost = instance.cost_hamiltonian()
    orbits = automorphism_orbits(instance.graph)
    out = [("FG", fg_spec(instance.n).to_text(), fg_design(cost)),
           ("PG", pg_spec(instance.graph).to_text(), pg_design(cost, orbits)),
           ("NG", ng_spec(instance.n).to_text(), ng_design(cost))]
    for text in extra:
        spec = MixerSpec.from_text(text)
        gens = [spec.hamiltonian(np.eye(spec.num_groups)[j]) for j in range(spec.num_groups)]
        out.append(("custom", spec.to_text(), AnsatzDesign(tuple(gens) + (cost,), "custom")))
    return out


def cmd_effdim(args) -> list[Path]:
    out = Path(args.out)
    instance = _load_instance(args)
    if instance.n > 12:
        raise CapacityError(f"effdim is limited to n <= 12, got {instance.n}")
    psi0 = plus_state(instance.n)
    rows = []
    for label, text, design in _designs(instance, args.specs or []):
        d_eff = effective_dimension(design, psi0)
        try:
            dla = dla_dimension(design, args.max_dla)
        except CapacityError:
            dla = None
        rows.append((label, text, d_eff, dla))
        print(f"{label:6s} {text:24s} d_eff={d_eff} dla={'>' + str(args.max_dla) if dla is None else dla}")
    return [_write_csv(out / "effdim.csv", ["design", "mixer", "d_eff", "dla_dim"], rows)]


def cmd_dla(args) -> list[Path]:
    out = Path(args.out)
    gens = []
    for path in args.hamiltonians:
        p = Path(path)
        if not p.exists():
            raise UsageError(f"Hamiltonian file {p} does not exist")
        gens.append(PauliSum.from_text(p.read_text()))
    if not gens:
        raise UsageError("dla needs at least one Hamiltonian file")
    dim = dla_dimension(AnsatzDesign(tuple(gens), "custom"), args.max_dla)
    print(f"dla_dim {dim}")
    return [_write_csv(out / "dla.csv", ["generators", "dla_dim"], [(len(gens), dim)])]


def _baseline_instance(task: str, n: int, seed: int, idx: int, methods: Sequence[str], p: int,
                       restarts: int, epochs: int, lr: float, generator: str | None):
    rng = np.random.default_rng(datasets.label_seed(seed, "baseline-instance", idx))
    instance = datasets.sample_instance(task, n, rng)
    ref = _reference(instance)
    rows = []
    for method in methods:
        try:
            if method == "greedy":
                if task != "maxcut":
                    continue
                sol = greedy_maxcut(instance.graph)
                rows.append((idx, method, sol.objective, sol.ratio))
            elif method == "gw":
                if task != "maxcut":
                    continue
                sol = gw_maxcut(instance.graph, rng=np.random.default_rng(
                    datasets.label_seed(seed, "gw", idx)))
                rows.append((idx, method, sol.objective, sol.ratio))
            elif method == "adapt":
                _, rep = adapt_qaoa(instance, max_depth=p, epochs=epochs, lr=lr)
                rows.append((idx, method, rep.final_loss, _safe_ratio(instance, rep.final_loss, ref)))
            else:
                spec = _resolve_mixer(method, instance, p, generator)
                labels = datasets.build_labels(instance, [spec], p,
                                               [datasets.label_seed(seed, method, idx)],
                                               restarts, epochs, lr)
                rows.append((idx, method, labels[0], _safe_ratio(instance, labels[0], ref)))
        except (QaoaMixerError, ArithmeticError) as exc:
            log.error("method %s failed on instance %d: %s", method, idx, exc)
            rows.append((idx, method, None, None))
    return rows


def cmd_baselines(args) -> list[Path]:
    out = Path(args.out)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if "mgnet" in methods and not args.generator:
        raise UsageError("the mgnet baseline needs --generator <checkpoint>")
    jobs = [(args.task, args.n, args.seed, k, methods, args.p, args.restarts, args.epochs, args.lr,
             args.generator) for k in range(args.count)]
    rows = []
    for chunk in _map(_baseline_star, jobs, args.jobs):
        rows.extend(chunk)
    summary = []
    for m in methods:
        rs = [r[3] for r in rows if r[1] == m and r[3] is not None]
        if rs:
            summary.append((m, float(np.mean(rs)), float(np.std(rs)), len(rs)))
        else:
            summary.append((m, None, None, 0))
    for m, mean, std, cnt in summary:
        print(f"{m:8s} r = {'NA' if mean is None else f'{mean:.4f} +- {std:.4f}'} ({cnt})")
    return [_write_csv(out / "baselines.csv", ["instance", "method", "value", "ratio"], rows),
            _write_csv(out / "summary.csv", ["method", "mean_ratio", "std_ratio", "count"], summary)]


def _baseline_star(job):
    return _baseline_instance(*job)


def _map(fn: Callable, jobs: list, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def cmd_pool(args) -> list[Path]:
    out = Path(args.out)
    pool = grouping_pool(args.n)
    print(f"{len(pool)} canonical groupings for n={args.n}")
    return [_write_csv(out / "pool.csv", ["index", "rgs", "groups"],
                       [(k, "-".join(map(str, g)), max(g) + 1) for k, g in enumerate(pool)])]


def cmd_encode(args) -> list[Path]:
    out = Path(args.out)
    instance = _load_instance(args)
    g_c = encode_problem(instance)
    doc = {"problem": _graph_doc(g_c)}
    if args.mixer:
        spec = MixerSpec.from_text(args.mixer)
        if spec.n != instance.n:
            raise UsageError(f"mixer {spec} has {spec.n} qubits, instance has {instance.n}")
        doc["mixer"] = _graph_doc(encode_mixer(spec))
    path = out / "encoding.json"
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")
    print(f"G_C: {g_c.num_nodes} nodes, {len(g_c.edge_list())} edges")
    return [path]


def _graph_doc(g) -> dict:
    return {"kind": g.kind, "n_qubits": g.n_qubits, "features": g.features.tolist(),
            "roles": g.roles.tolist(), "edges": g.edge_list()}


def cmd_generate(args) -> list[Path]:
    out = Path(args.out)
    instance = _load_instance(args)
    gen = mgnet.MixerGenerator.load(args.generator)
    depths = _parse_ints(args.depths)
    specs = mgnet.generator_forward(gen, [encode_problem(instance)] * len(depths), depths, mode="hard")
    rows = [(p, s.to_text(), s.num_groups) for p, s in zip(depths, specs)]
    for p, text, k in rows:
        print(f"p={p:3d}  {text}")
    return [_write_csv(out / "generated.csv", ["p", "mixer", "groups"], rows)]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "solve": cmd_solve,
    "effdim": cmd_effdim,
    "dla": cmd_dla,
    "baselines": cmd_baselines,
    "pool": cmd_pool,
    "encode": cmd_encode,
    "generate": cmd_generate,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_instance_args(p: argparse.ArgumentParser):
    p.add_argument("--instance", help="instance JSON file {n, edges, kind, h, J}")
    p.add_argument("--task", choices=["maxcut", "tfim"], default="maxcut")
    p.add_argument("--n", type=int, default=6)


def _add_qaoa_args(p: argparse.ArgumentParser):
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=0.15)


GLOBAL_DEFAULTS = {"seed": 0, "jobs": 1, "out": "out", "config": None, "verbose": False}


def _add_global_args(p: argparse.ArgumentParser):
    # SUPPRESS keeps a flag given before the subcommand from being reset by the subparser
    sup = argparse.SUPPRESS
    p.add_argument("--seed", type=int, default=sup, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=sup, help="worker processes (default 1)")
    p.add_argument("--out", default=sup, help="output directory (default ./out)")
    p.add_argument("--config", default=sup, help="JSON file whose keys set option defaults")
    p.add_argument("-v", "--verbose", action="store_true", default=sup)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qaoa-mixer", description=__doc__.splitlines()[0])
    _add_global_args(parser)
    parser.set_defaults(**GLOBAL_DEFAULTS)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_args(common)
    subparsers = parser.add_subparsers(dest="command", required=True)

    class _Sub:
        def add_parser(self, name, **kw):
            return subparsers.add_parser(name, parents=[common], **kw)

    sub = _Sub()

    p = sub.add_parser("gen-data", help="generate a labeled estimator dataset")
    p.add_argument("--task", choices=["maxcut", "tfim"], default="maxcut")
    p.add_argument("--S", type=int, default=100)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--depths", default=",".join(map(str, datasets.DEFAULT_DEPTHS)))
    p.add_argument("--types-per-instance", type=int, default=4)
    p.add_argument("--groupings-per-type", type=int, default=5)
    p.add_argument("--anchors", action="store_true", help="add all-X FG and NG mixers per instance")
    _add_qaoa_args(p)

    p = sub.add_parser("train", help="stage 1 (estimator) and stage 2 (generator) training")
    p.add_argument("--data", help="dataset directory or manifest (required)")
    p.add_argument("--stage", choices=["1", "2", "both"], default="both")
    p.add_argument("--estimator", help="stage-1 checkpoint for --stage 2")
    p.add_argument("--epochs", type=int, default=250)
    p.add_argument("--gen-epochs", type=int, default=250)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lambda-e", type=float, default=1.0)
    p.add_argument("--lambda-r", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=32)

    p = sub.add_parser("solve", help="optimize one QAOA circuit")
    _add_instance_args(p)
    p.add_argument("--p", type=int, default=2)
    p.add_argument("--mixer", default="fg", help="fg|ng|pg|ma|adapt|mgnet|file:TYPES/RGS")
    p.add_argument("--generator", help="generator checkpoint for --mixer mgnet")
    _add_qaoa_args(p)

    p = sub.add_parser("effdim", help="effective and DLA dimensions of FG/PG/NG designs")
    _add_instance_args(p)
    p.add_argument("--specs", nargs="*", help="extra mixers as TYPES/RGS")
    p.add_argument("--max-dla", type=int, default=4096)

    p = sub.add_parser("dla", help="DLA dimension of generators given as PauliSum text files")
    p.add_argument("hamiltonians", nargs="+")
    p.add_argument("--max-dla", type=int, default=4096)

    p = sub.add_parser("baselines", help="approximation ratios of classical and QAOA methods")
    p.add_argument("--task", choices=["maxcut", "tfim"], default="maxcut")
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--p", type=int, default=42)
    p.add_argument("--methods", default="greedy,gw,fg,ng")
    p.add_argument("--generator", help="generator checkpoint for the mgnet method")
    _add_qaoa_args(p)

    p = sub.add_parser("pool", help="list the canonical parameter groupings")
    p.add_argument("--n", type=int, help="number of qubits (required)")

    p = sub.add_parser("encode", help="write the G_C (and optional G_M) encodings as JSON")
    _add_instance_args(p)
    p.add_argument("--mixer", help="TYPES/RGS")

    p = sub.add_parser("generate", help="print generated mixers for an instance")
    _add_instance_args(p)
    p.add_argument("--generator", help="generator checkpoint (required)")
    p.add_argument("--depths", default="2,12,42,82")

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    return parser


def _apply_config(parser: argparse.ArgumentParser, args, argv: Sequence[str]):
    """Config keys fill in options that were not given on the command line."""
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {args.config}: {exc}") from exc
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in cfg.items():
        key = key.replace("-", "_")
        if key in ("command", "config"):
            continue
        if not hasattr(args, key):
            raise UsageError(f"config key {key!r} is not an option of {args.command}")
        if key not in given:
            setattr(args, key, value)
    return args


# options that may come from either the command line or a config file
_REQUIRED = {"train": ("data",), "pool": ("n",), "generate": ("generator",)}


def _run(args) -> int:
    missing = [k for k in _REQUIRED.get(args.command, ()) if getattr(args, k, None) is None]
    if missing:
        raise UsageError(f"{args.command} needs " + ", ".join("--" + k.replace("_", "-") for k in missing))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config = {k: v for k, v in vars(args).items() if k not in ("config", "verbose")}
    t0 = time.time()
    files = COMMANDS[args.command](args)
    manifest = {
        "version": MANIFEST_VERSION,
        "command": args.command,
        "config": config,
        "seeds": {"seed": args.seed},
        "outputs": sorted(str(Path(f).relative_to(out)) for f in files),
    }
    (out / "manifest.json" if args.command != "gen-data" else out / "run_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    log.info("%s finished in %.1f s", args.command, time.time() - t0)
    return EXIT_OK


def _from_manifest(path: str, out: str | None) -> argparse.Namespace:
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
        if not p.exists():
            p = p.parent / "run_manifest.json"
    try:
        doc = json.loads(p.read_text())
        config = dict(doc["config"])
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read run manifest {path}: {exc}") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise UsageError(f"unsupported manifest version {doc.get('version')}")
    if out is not None:
        config["out"] = out
    config.setdefault("config", None)
    config.setdefault("verbose", False)
    return argparse.Namespace(**config)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            given_out = "--out" in argv or any(a.startswith("--out=") for a in argv)
            args = _from_manifest(args.manifest, args.out if given_out else None)
        else:
            args = _apply_config(parser, args, argv)
        return _run(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CapacityError as exc:
        print(f"capacity exceeded: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except QaoaMixerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
