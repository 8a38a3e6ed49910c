"""Mixer Hamiltonians with typed operators and parameter groups.

A mixer is ``sum_j beta_j sum_{i in G_j} P_i`` with ``P_i`` in ``{X, Y}``.
The partition ``{G_j}`` is stored as a canonical restricted growth string
(RGS): ``g[0] == 0`` and every entry is at most one more than the running
maximum, so each partition has exactly one representation.

This module also builds the graph encodings consumed by the networks in
:mod:`qaoa_mixer.mgnet`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import CapacityError, InputError

if TYPE_CHECKING:
    from .problems import ProblemInstance, WeightedGraph

__all__ = [
    "OPERATOR_TYPES",
    "FEATURE_WIDTH",
    "MixerSpec",
    "EncodedGraph",
    "canonical_rgs",
    "is_canonical_rgs",
    "grouping_pool",
    "fg_spec",
    "ng_spec",
    "pg_spec",
    "encode_problem",
    "encode_mixer",
    "encode_soft_mixer",
    "depth_embedding",
    "groups_from_edges",
]

OPERATOR_TYPES = ("X", "Y")
FEATURE_WIDTH = 16
ROLE_INPUT, ROLE_GATE, ROLE_OUTPUT = 0, 1, 2


def is_canonical_rgs(groups: Sequence[int]) -> bool:
    top = -1
    for g in groups:
        if g < 0 or g > top + 1:
            return False
        top = max(top, g)
    return len(groups) > 0


def canonical_rgs(labels: Sequence) -> tuple[int, ...]:
    """Relabel arbitrary group labels by order of first appearance."""
    seen: dict = {}
    return tuple(seen.setdefault(x, len(seen)) for x in labels)


@dataclass(frozen=True)
class MixerSpec:
    types: str
    groups: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        if len(self.types) != len(self.groups):
            raise InputError(
                f"{len(self.types)} operator types but {len(self.groups)} group labels"
            )
        if any(t not in OPERATOR_TYPES for t in self.types):
            raise InputError(f"operator types must be drawn from {OPERATOR_TYPES}: {self.types!r}")
        if not is_canonical_rgs(self.groups):
            raise InputError(
                f"groups {self.groups} are not a canonical RGS; "
                f"canonical form is {canonical_rgs(self.groups)}"
            )

    @property
    def n(self) -> int:
        return len(self.types)

    @property
    def num_groups(self) -> int:
        return max(self.groups) + 1

    def num_params(self, p: int) -> int:
        return p * (1 + self.num_groups)

    def group_members(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_groups)]
        for i, g in enumerate(self.groups):
            out[g].append(i)
        return out

    @property
    def rgs(self) -> str:
        return "-".join(str(g) for g in self.groups)

    def to_text(self) -> str:
        return f"{self.types}/{self.rgs}"

    def __str__(self):
        return self.to_text()

    @classmethod
    def from_text(cls, text: str, canonicalize: bool = False) -> "MixerSpec":
        try:
            types, rgs = text.strip().split("/")
            groups = tuple(int(x) for x in rgs.split("-"))
        except ValueError as exc:
            raise InputError(f"mixer spec must look like 'XYX/0-1-0', got {text!r}") from exc
        if canonicalize:
            groups = canonical_rgs(groups)
        return cls(types.upper(), groups)

    def hamiltonian(self, betas: Sequence[float] | None = None):
        """Mixer as a PauliSum; ``betas`` weights each group (default all ones)."""
        from .pauli import PauliSum

        betas = np.ones(self.num_groups) if betas is None else np.asarray(betas, dtype=float)
        n = self.n
        return PauliSum(
            n,
            {
                "I" * i + t + "I" * (n - i - 1): betas[g]
                for i, (t, g) in enumerate(zip(self.types, self.groups))
            },
        )


def grouping_pool(n: int, max_n: int = 12) -> list[tuple[int, ...]]:
    """All canonical restricted growth strings of length ``n`` (Bell(n) of them)."""
    if n < 1:
        raise InputError("pool size must be positive")
    if n > max_n:
        raise CapacityError(f"grouping pool is limited to n <= {max_n} (Bell growth), got {n}")
    pool: list[tuple[int, ...]] = []
    prefix: list[int] = []

    def grow(top: int):
        if len(prefix) == n:
            pool.append(tuple(prefix))
            return
        for g in range(top + 2):
            prefix.append(g)
            grow(max(top, g))
            prefix.pop()

    prefix.append(0)
    grow(0)
    return pool


def fg_spec(n: int, op: str = "X") -> MixerSpec:
    return MixerSpec(op * n, (0,) * n)


def ng_spec(n: int, op: str = "X") -> MixerSpec:
    return MixerSpec(op * n, tuple(range(n)))


def pg_spec(graph: "WeightedGraph", op: str = "X") -> MixerSpec:
    from .pauli import automorphism_orbits

    orbits = automorphism_orbits(graph)
    labels = [0] * graph.n
    for k, orbit in enumerate(orbits.vertex_orbits):
        for v in orbit:
            labels[v] = k
    return MixerSpec(op * graph.n, canonical_rgs(labels))


def groups_from_edges(indicators) -> tuple[int, ...]:
    """Canonical RGS from the connected components of a symmetric 0/1 matrix."""
    e = np.asarray(indicators)
    if e.ndim != 2 or e.shape[0] != e.shape[1]:
        raise InputError("edge indicators must be a square matrix")
    if not np.array_equal(e, e.T):
        raise InputError("edge indicators must be symmetric")
    n = e.shape[0]
    label = [-1] * n
    comp = 0
    for s in range(n):
        if label[s] >= 0:
            continue
        stack = [s]
        label[s] = comp
        while stack:
            v = stack.pop()
            for u in np.flatnonzero(e[v] > 0.5):
                if label[u] < 0:
                    label[u] = comp
                    stack.append(int(u))
        comp += 1
    return canonical_rgs(label)


# ---------------------------------------------------------------------------
# graph encodings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncodedGraph:
    """Attributed graph for the GNN branches.

    ``adjacency[i, j]`` is the weight of the directed edge ``j -> i`` (the
    message from ``j`` into ``i``).  ``roles`` marks nodes as input, gate or
    output for problem graphs; mixer graphs have only operator nodes.
    """

    features: np.ndarray
    adjacency: np.ndarray
    roles: np.ndarray
    kind: str  # "problem" or "mixer"
    n_qubits: int

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    def output_nodes(self) -> np.ndarray:
        if self.kind == "mixer":
            return np.arange(self.num_nodes)
        return np.flatnonzero(self.roles == ROLE_OUTPUT)

    def edge_list(self) -> list[tuple[int, int, float]]:
        src_dst = np.argwhere(self.adjacency != 0)
        return [(int(j), int(i), float(self.adjacency[i, j])) for i, j in src_dst]

    def is_acyclic(self) -> bool:
        n = self.num_nodes
        indeg = (self.adjacency != 0).sum(axis=1)
        ready = [v for v in range(n) if indeg[v] == 0]
        seen = 0
        indeg = indeg.copy()
        while ready:
            v = ready.pop()
            seen += 1
            for i in np.flatnonzero(self.adjacency[:, v] != 0):
                indeg[i] -= 1
                if indeg[i] == 0:
                    ready.append(int(i))
        return seen == n


def encode_problem(instance: "ProblemInstance", width: int = FEATURE_WIDTH) -> EncodedGraph:
    """Circuit DAG of ``exp(-i alpha H_C)``: input nodes, one gate per term, output nodes.

    Node features are ``one-hot role (3) | qubit incidence (n) | coefficient``
    zero-padded to ``width``.  Wire edges connect consecutive operations on
    each qubit in term order.
    """
    cost = instance.cost_hamiltonian()
    n = cost.n
    if 3 + n + 1 > width:
        raise CapacityError(f"feature width {width} cannot hold {n} qubit incidences")
    terms = sorted(cost.items(), key=lambda kv: _term_order(kv[0]))
    num_nodes = 2 * n + len(terms)
    feats = np.zeros((num_nodes, width))
    roles = np.zeros(num_nodes, dtype=int)
    adj = np.zeros((num_nodes, num_nodes))
    last = list(range(n))  # current frontier node per qubit
    for q in range(n):
        roles[q] = ROLE_INPUT
        feats[q, ROLE_INPUT] = 1.0
        feats[q, 3 + q] = 1.0
    for k, (letters, coeff) in enumerate(terms):
        node = n + k
        roles[node] = ROLE_GATE
        feats[node, ROLE_GATE] = 1.0
        feats[node, width - 1] = coeff.real
        for q, c in enumerate(letters):
            if c != "I":
                feats[node, 3 + q] = 1.0
                adj[node, last[q]] = 1.0
                last[q] = node
    for q in range(n):
        node = n + len(terms) + q
        roles[node] = ROLE_OUTPUT
        feats[node, ROLE_OUTPUT] = 1.0
        feats[node, 3 + q] = 1.0
        adj[node, last[q]] = 1.0
    return EncodedGraph(feats, adj, roles, "problem", n)


def _term_order(letters: str):
    support = tuple(i for i, c in enumerate(letters) if c != "I")
    return (len(support) == 1, support, letters)


def encode_mixer(spec: MixerSpec, width: int = FEATURE_WIDTH) -> EncodedGraph:
    """Complete graph over operators; edge weight 1 iff the two share a parameter."""
    n = spec.n
    feats = np.zeros((n, width))
    for i, t in enumerate(spec.types):
        feats[i, OPERATOR_TYPES.index(t)] = 1.0
    g = np.asarray(spec.groups)
    adj = (g[:, None] == g[None, :]).astype(float)
    np.fill_diagonal(adj, 0.0)
    return EncodedGraph(feats, adj, np.full(n, -1), "mixer", n)


def encode_soft_mixer(type_probs: np.ndarray, share_probs: np.ndarray, width: int = FEATURE_WIDTH):
    """Continuous counterpart of :func:`encode_mixer` built from probabilities."""
    type_probs = np.asarray(type_probs, dtype=float)
    n = type_probs.shape[0]
    feats = np.zeros((n, width))
    feats[:, : type_probs.shape[1]] = type_probs
    adj = np.asarray(share_probs, dtype=float).copy()
    np.fill_diagonal(adj, 0.0)
    return EncodedGraph(feats, adj, np.full(n, -1), "mixer", n)


def depth_embedding(p: float, d_p: int = 128) -> np.ndarray:
    """Sinusoidal position embedding: ``x[2k] = sin(p / 10000**(2k/d))``, ``x[2k+1] = cos(...)``."""
    if d_p <= 0 or d_p % 2:
        raise InputError(f"embedding width must be a positive even integer, got {d_p}")
    k = np.arange(d_p // 2)
    angle = p / np.power(10000.0, 2 * k / d_p)
    out = np.empty(d_p)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out
