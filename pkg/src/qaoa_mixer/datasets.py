"""Instance sampling, QAOA labels and the estimator dataset on disk.

A dataset is a JSON-lines file of records

    {"index", "instance_id", "instance", "mixer": "types/rgs", "p", "label", "seeds"}

plus a JSON manifest holding the configuration, the record count and the byte
offset of every record.  Generation proceeds one (instance, depth) block at
a time; after each block the records are flushed and the manifest rewritten
atomically, so an interrupted run resumes where it stopped and a finished
run with the same configuration is byte-identical.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError
from .mixer import MixerSpec, encode_mixer, encode_problem, fg_spec, grouping_pool, ng_spec
from .problems import ProblemInstance, WeightedGraph, optimum
from .simulator import Engine, initial_params, optimize_batch

log = logging.getLogger(__name__)

__all__ = [
    "SCHEMA_VERSION",
    "DEFAULT_DEPTHS",
    "DatasetManifest",
    "sample_w3r",
    "sample_tfim_1d",
    "sample_instance",
    "label_seed",
    "build_label",
    "build_labels",
    "build_estimator_dataset",
    "load_records",
    "records_to_samples",
    "label_lower_bound",
]

SCHEMA_VERSION = 1
DEFAULT_DEPTHS = (2, 12, 22, 42, 62, 82, 92)


def sample_w3r(n: int, rng: np.random.Generator, max_tries: int = 10_000) -> WeightedGraph:
    """Uniform random 3-regular simple graph (pairing model) with ``U[0, 1]`` weights."""
    if n < 4 or n % 2:
        raise InputError(f"3-regular graphs need an even n >= 4, got {n}")
    points = np.repeat(np.arange(n), 3)
    for _ in range(max_tries):
        pairs = rng.permutation(points).reshape(-1, 2)
        if np.any(pairs[:, 0] == pairs[:, 1]):
            continue
        keys = {(min(a, b), max(a, b)) for a, b in pairs.tolist()}
        if len(keys) < len(pairs):
            continue
        edges = sorted(keys)
        weights = rng.uniform(0.0, 1.0, len(edges))
        return WeightedGraph(n, tuple((i, j, float(w)) for (i, j), w in zip(edges, weights)))
    raise InputError(f"pairing model failed to produce a simple graph in {max_tries} tries")


def sample_tfim_1d(n: int, rng: np.random.Generator) -> ProblemInstance:
    """Ring TFIM with ``J_ij ~ U[0.5, 1.5]`` per edge and one shared ``h ~ U[0.1, 2]``."""
    if n < 2:
        raise InputError("TFIM ring needs at least two spins")
    couplings = rng.uniform(0.5, 1.5, n)
    h = rng.uniform(0.1, 2.0)
    return ProblemInstance.tfim(couplings.tolist(), float(h))


def sample_instance(task: str, n: int, rng: np.random.Generator) -> ProblemInstance:
    if task == "maxcut":
        return ProblemInstance.maxcut(sample_w3r(n, rng))
    if task == "tfim":
        return sample_tfim_1d(n, rng)
    raise InputError(f"unknown task {task!r}; expected 'maxcut' or 'tfim'")


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------


def label_seed(*keys: int | str) -> int:
    """Deterministic 63-bit seed from integers and strings."""
    words = []
    for k in keys:
        if isinstance(k, str):
            words.extend(k.encode())
        else:
            words.append(int(k))
    return int(np.random.SeedSequence(words).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _restart_inits(num_params: int, restarts: int, seed: int) -> np.ndarray:
    # one stream per label: restart r is the r-th draw, so fewer restarts are a prefix
    rng = np.random.default_rng(seed)
    return np.concatenate([initial_params(num_params, rng) for _ in range(restarts)])


def build_labels(instance: ProblemInstance, mixers: Sequence[MixerSpec], p: int,
                 seeds: Sequence[int], restarts: int = 10, epochs: int = 40,
                 lr: float = 0.15) -> list[float]:
    """Labels for several mixers at one depth, evaluated as a single batch.

    Mixer ``k`` uses seed ``seeds[k]``; the result equals calling
    :func:`build_label` once per mixer.
    """
    if restarts < 1:
        raise InputError("restarts must be at least 1")
    if len(mixers) != len(seeds):
        raise InputError("one seed per mixer is required")
    rows = [m for m in mixers for _ in range(restarts)]
    engine = Engine(instance.cost_hamiltonian(), p, rows)
    init = np.concatenate([
        _restart_inits(m.num_params(p), restarts, s) for m, s in zip(mixers, seeds)
    ])
    reports = optimize_batch(engine, init, epochs, lr)
    finals = np.array([r.final_loss for r in reports]).reshape(len(mixers), restarts)
    return finals.min(axis=1).tolist()


def build_label(instance: ProblemInstance, mixer: MixerSpec, p: int, restarts: int = 10,
                epochs: int = 40, lr: float = 0.15, seed: int = 0) -> float:
    """Minimum final loss over ``restarts`` independent Adam runs."""
    return build_labels(instance, [mixer], p, [seed], restarts, epochs, lr)[0]


# ---------------------------------------------------------------------------
# dataset files
# ---------------------------------------------------------------------------


@dataclass
class DatasetManifest:
    task: str
    S: int
    n: int
    depths: list[int]
    seed: int
    types_per_instance: int = 4
    groupings_per_type: int = 5
    anchors: bool = False
    restarts: int = 10
    epochs: int = 40
    lr: float = 0.15
    records_file: str = "records.jsonl"
    count: int = 0
    offsets: list[int] = field(default_factory=list)
    end_offset: int = 0
    complete: bool = False
    schema_version: int = SCHEMA_VERSION

    def config(self) -> dict:
        d = asdict(self)
        for k in ("count", "offsets", "end_offset", "complete"):
            d.pop(k)
        return d

    @property
    def expected_count(self) -> int:
        per_instance = self.types_per_instance * self.groupings_per_type + (2 if self.anchors else 0)
        return self.S * per_instance * len(self.depths)

    def write(self, path: Path):
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(json.dumps(asdict(self), sort_keys=True, indent=1) + "\n")
        os.replace(tmp, path)

    @classmethod
    def read(cls, path) -> "DatasetManifest":
        doc = json.loads(Path(path).read_text())
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise InputError(f"dataset schema {doc.get('schema_version')} is not {SCHEMA_VERSION}")
        return cls(**doc)


def _instance_plan(task: str, n: int, idx: int, m: DatasetManifest):
    """Instance and mixer list for one instance, derived from its own seed."""
    rng = np.random.default_rng(label_seed(m.seed, "instance", idx))
    instance = sample_instance(task, n, rng)
    pool = grouping_pool(n)
    n_types = 1 << n
    if m.types_per_instance > n_types:
        raise InputError(f"only {n_types} operator-type strings exist for n={n}")
    if m.groupings_per_type > len(pool):
        raise InputError(f"only {len(pool)} groupings exist for n={n}")
    codes = rng.choice(n_types, size=m.types_per_instance, replace=False)
    mixers = []
    if m.anchors:
        mixers += [fg_spec(n), ng_spec(n)]
    for code in codes:
        types = "".join("Y" if (int(code) >> (n - 1 - q)) & 1 else "X" for q in range(n))
        for g in rng.choice(len(pool), size=m.groupings_per_type, replace=False):
            mixers.append(MixerSpec(types, pool[int(g)]))
    return instance, mixers


def build_estimator_dataset(out_dir, task: str = "maxcut", S: int = 100, n: int = 6,
                            depths: Sequence[int] = DEFAULT_DEPTHS, types_per_instance: int = 4,
                            groupings_per_type: int = 5, seed: int = 0, anchors: bool = False,
                            restarts: int = 10, epochs: int = 40, lr: float = 0.15,
                            progress: Callable[[int, int], None] | None = None,
                            jobs: int = 1) -> DatasetManifest:
    """Generate (or resume) a labeled dataset in ``out_dir``.

    Each instance contributes ``types_per_instance`` random operator-type
    strings times ``groupings_per_type`` random groupings from the pool, and
    optionally the all-X FG and NG anchors, at every depth.  With ``jobs > 1``
    blocks are labeled in worker processes and still committed in order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if S < 1:
        raise InputError("S must be positive")
    fresh = DatasetManifest(task, S, n, [int(p) for p in depths], int(seed), types_per_instance,
                            groupings_per_type, anchors, restarts, epochs, float(lr))
    if task not in ("maxcut", "tfim"):
        raise InputError(f"unknown task {task!r}; expected 'maxcut' or 'tfim'")
    mpath = out / "manifest.json"
    rpath = out / fresh.records_file
    manifest = fresh
    if mpath.exists():
        old = DatasetManifest.read(mpath)
        if old.config() != fresh.config():
            raise InputError(f"{mpath} was written with a different configuration")
        manifest = old
    if manifest.complete:
        return manifest
    # drop anything written after the last committed block
    with open(rpath, "ab") as fh:
        fh.truncate(manifest.end_offset)
    per_block = manifest.expected_count // (S * len(manifest.depths))
    done_blocks = manifest.count // per_block
    total_blocks = S * len(manifest.depths)
    todo = [(task, n, block, manifest) for block in range(done_blocks, total_blocks)]
    step = max(1, jobs)
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs > 1 else None
    try:
        with open(rpath, "ab") as fh:
            for start in range(0, len(todo), step):
                chunk = todo[start: start + step]
                results = list(pool.map(_label_block, chunk)) if pool else [_label_block(c) for c in chunk]
                for (_, _, block, _), recs in zip(chunk, results):
                    for rec in recs:
                        rec["index"] = manifest.count
                        manifest.offsets.append(manifest.end_offset)
                        line = (json.dumps(rec, sort_keys=True) + "\n").encode()
                        fh.write(line)
                        manifest.end_offset += len(line)
                        manifest.count += 1
                    fh.flush()
                    manifest.complete = manifest.count == manifest.expected_count
                    manifest.write(mpath)
                    if progress is not None:
                        progress(block + 1, total_blocks)
    finally:
        if pool is not None:
            pool.shutdown()
    return manifest


def _label_block(job) -> list[dict]:
    task, n, block, manifest = job
    idx, k = divmod(block, len(manifest.depths))
    p = manifest.depths[k]
    instance, mixers = _instance_plan(task, n, idx, manifest)
    seeds = [label_seed(manifest.seed, "label", idx, m.to_text(), p) for m in mixers]
    labels = build_labels(instance, mixers, p, seeds, manifest.restarts, manifest.epochs, manifest.lr)
    inst = instance.to_dict()
    return [
        {"instance_id": idx, "instance": inst, "mixer": m.to_text(), "p": p, "label": y,
         "seeds": {"label": s}}
        for m, s, y in zip(mixers, seeds, labels)
    ]


def load_records(path) -> list[dict]:
    """Records of a dataset; ``path`` is the dataset directory, its manifest or its records file."""
    path = Path(path)
    if path.is_dir():
        mpath = path / "manifest.json"
    elif path.suffix == ".jsonl":
        mpath = path.parent / "manifest.json"
    else:
        mpath = path
    manifest = DatasetManifest.read(mpath)
    data = (mpath.parent / manifest.records_file).read_bytes()
    if len(data) < manifest.end_offset:
        raise InputError("records file is shorter than the manifest says")
    out = []
    bounds = manifest.offsets + [manifest.end_offset]
    for k in range(manifest.count):
        rec = json.loads(data[bounds[k]: bounds[k + 1]])
        if rec["index"] != k:
            raise InputError(f"record at offset {bounds[k]} has index {rec['index']}, expected {k}")
        out.append(rec)
    return out


def records_to_samples(records: Iterable[dict]):
    """Estimator samples; problem encodings are shared between records of one instance."""
    from .mgnet import EstimatorSample

    cache: dict[int, object] = {}
    out = []
    for rec in records:
        iid = rec["instance_id"]
        if iid not in cache:
            cache[iid] = encode_problem(ProblemInstance.from_dict(rec["instance"]))
        spec = MixerSpec.from_text(rec["mixer"])
        out.append(EstimatorSample(cache[iid], encode_mixer(spec), int(rec["p"]), float(rec["label"]), iid))
    return out


def label_lower_bound(instance: ProblemInstance) -> float:
    """Smallest achievable ``<H_C>``: the ground energy (``W/2 - C_max`` for Max-Cut)."""
    if instance.kind == "maxcut":
        return instance.graph.total_weight / 2 - optimum(instance)
    return optimum(instance)
