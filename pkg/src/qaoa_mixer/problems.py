"""Problem instances, exact oracles and classical / QAOA-variant baselines."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse.linalg as spla

from .errors import CapacityError, ConsistencyError, InputError, NumericError
from .mixer import MixerSpec, ng_spec
from .pauli import PauliSum
from .simulator import Adam, OptimizeReport, _CostOperator, plus_state

log = logging.getLogger(__name__)

__all__ = [
    "WeightedGraph",
    "ProblemInstance",
    "Solution",
    "AdaptCircuit",
    "maxcut_hamiltonian",
    "tfim_hamiltonian",
    "cut_value",
    "brute_force_maxcut",
    "ground_energy",
    "optimum",
    "approximation_ratio",
    "greedy_maxcut",
    "gw_maxcut",
    "adapt_qaoa",
    "default_adapt_pool",
    "ma_qaoa_spec",
]

MAXCUT, TFIM = "maxcut", "tfim"


@dataclass(frozen=True)
class WeightedGraph:
    n: int
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if self.n < 1:
            raise InputError("graph needs at least one vertex")
        edges = tuple((int(i), int(j), float(w)) for i, j, w in self.edges)
        seen = set()
        for i, j, w in edges:
            if i == j:
                raise InputError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InputError(f"edge ({i}, {j}) outside 0..{self.n - 1}")
            if not math.isfinite(w):
                raise InputError(f"edge ({i}, {j}) has a non-finite weight")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise InputError(f"duplicate edge {key}")
            seen.add(key)
        object.__setattr__(self, "edges", edges)

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def degrees(self) -> list[int]:
        deg = [0] * self.n
        for i, j, _ in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            W[i, j] = W[j, i] = w
        return W

    @classmethod
    def unweighted(cls, n: int, pairs: Sequence[tuple[int, int]]) -> "WeightedGraph":
        return cls(n, tuple((i, j, 1.0) for i, j in pairs))

    @classmethod
    def ring(cls, n: int, weight: float = 1.0) -> "WeightedGraph":
        if n == 2:
            return cls(2, ((0, 1, weight),))
        return cls(n, tuple((i, (i + 1) % n, weight) for i in range(n)))


@dataclass(frozen=True)
class ProblemInstance:
    """Weighted Max-Cut or a transverse-field Ising ring.

    For TFIM the graph edges carry the couplings ``J_ij`` and ``h`` is the
    global field.
    """

    kind: str
    graph: WeightedGraph
    h: float = 0.0

    def __post_init__(self):
        if self.kind not in (MAXCUT, TFIM):
            raise InputError(f"unknown problem kind {self.kind!r}")
        if self.kind == TFIM:
            n = self.graph.n
            ring = {(min(i, (i + 1) % n), max(i, (i + 1) % n)) for i in range(n)}
            if {(min(i, j), max(i, j)) for i, j, _ in self.graph.edges} != ring:
                raise InputError("TFIM instances must be rings with edges (i, i+1 mod n)")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def J(self) -> dict[tuple[int, int], float]:
        return {(i, j): w for i, j, w in self.graph.edges}

    @classmethod
    def maxcut(cls, graph: WeightedGraph) -> "ProblemInstance":
        return cls(MAXCUT, graph)

    @classmethod
    def tfim(cls, couplings: Sequence[float], h: float) -> "ProblemInstance":
        n = len(couplings)
        if n < 2:
            raise InputError("TFIM ring needs at least two spins")
        if n == 2:
            # both ring edges join 0 and 1; their couplings merge into one term
            return cls(TFIM, WeightedGraph(2, ((0, 1, float(sum(couplings))),)), float(h))
        edges = tuple((i, (i + 1) % n, float(couplings[i])) for i in range(n))
        return cls(TFIM, WeightedGraph(n, edges), float(h))

    def cost_hamiltonian(self) -> PauliSum:
        if self.kind == MAXCUT:
            return maxcut_hamiltonian(self.graph)
        return tfim_hamiltonian(self)

    # -- JSON ------------------------------------------------------------------

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n, "edges": [[i, j, w] for i, j, w in self.graph.edges]}
        if self.kind == TFIM:
            d["h"] = self.h
            d["J"] = [[i, j, w] for i, j, w in self.graph.edges]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemInstance":
        try:
            kind = d.get("kind", MAXCUT).lower()
            n = int(d["n"])
            edges = d.get("J") if kind == TFIM and d.get("J") else d["edges"]
            graph = WeightedGraph(n, tuple((int(i), int(j), float(w)) for i, j, w in edges))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed instance record: {exc}") from exc
        return cls(kind, graph, float(d.get("h", 0.0)))

    @classmethod
    def from_json(cls, text: str) -> "ProblemInstance":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise InputError(f"instance file is not valid JSON: {exc}") from exc


@dataclass
class Solution:
    bitstring: tuple[int, ...]
    objective: float
    ratio: float | None
    flags: dict = field(default_factory=dict)


def maxcut_hamiltonian(graph: WeightedGraph) -> PauliSum:
    """``0.5 * sum_ij w_ij Z_i Z_j``."""
    terms: dict[str, float] = {}
    for i, j, w in graph.edges:
        letters = ["I"] * graph.n
        letters[i] = letters[j] = "Z"
        key = "".join(letters)
        terms[key] = terms.get(key, 0.0) + 0.5 * w
    return PauliSum(graph.n, terms)


def tfim_hamiltonian(instance: ProblemInstance) -> PauliSum:
    """``-sum J_ij Z_i Z_j - h sum X_i`` on the ring."""
    n = instance.n
    terms: dict[str, float] = {}
    for i, j, J in instance.graph.edges:
        letters = ["I"] * n
        letters[i] = letters[j] = "Z"
        key = "".join(letters)
        terms[key] = terms.get(key, 0.0) - J
    if instance.h != 0.0:
        for i in range(n):
            terms["I" * i + "X" + "I" * (n - i - 1)] = -instance.h
    return PauliSum(n, terms)


# ---------------------------------------------------------------------------
# exact oracles
# ---------------------------------------------------------------------------


def cut_value(graph: WeightedGraph, bits: Sequence[int]) -> float:
    return float(sum(w for i, j, w in graph.edges if bits[i] != bits[j]))


def _cut_values(graph: WeightedGraph, max_n: int) -> np.ndarray:
    if graph.n > max_n:
        raise CapacityError(f"exhaustive Max-Cut is limited to {max_n} vertices, got {graph.n}")
    n = graph.n
    # vertex 0 stays on side 0; index bits are vertices 1..n-1 (vertex 1 most significant)
    idx = np.arange(1 << (n - 1), dtype=np.int64)
    bits = np.zeros((n, idx.size), dtype=bool)
    for v in range(1, n):
        bits[v] = (idx >> (n - 1 - v)) & 1
    cuts = np.zeros(idx.size)
    for i, j, w in graph.edges:
        cuts += w * (bits[i] != bits[j])
    return cuts


def brute_force_maxcut(graph: WeightedGraph, max_n: int = 22) -> tuple[float, list[tuple[int, ...]]]:
    """Maximum cut and every optimal assignment with vertex 0 on side 0."""
    cuts = _cut_values(graph, max_n)
    best = float(cuts.max())
    n = graph.n
    winners = np.flatnonzero(cuts >= best - 1e-12)
    out = [tuple([0] + [int(b) for b in format(k, f"0{n - 1}b")]) if n > 1 else (0,) for k in winners]
    return best, out


def ground_energy(h: PauliSum, n: int | None = None, method: str = "auto",
                  max_n: int = 16) -> float:
    """Smallest eigenvalue of a Hermitian PauliSum.

    ``method`` is ``"dense"`` (n <= 10), ``"lanczos"`` or ``"auto"``; diagonal
    sums are read off directly.
    """
    n = h.n if n is None else n
    if n != h.n:
        raise InputError(f"Hamiltonian acts on {h.n} qubits, not {n}")
    if not h.is_hermitian(tol=1e-12):
        raise InputError("ground energy needs a Hermitian Hamiltonian")
    if n > max_n:
        raise CapacityError(f"ground energy is limited to {max_n} qubits, got {n}")
    if h.is_diagonal() and method == "auto":
        return float(h.diagonal().real.min())
    if method == "auto":
        method = "dense" if n <= 10 else "lanczos"
    if method == "dense":
        if n > 10:
            raise CapacityError("dense diagonalization is limited to 10 qubits")
        return float(np.linalg.eigvalsh(h.to_dense())[0])
    if method != "lanczos":
        raise InputError(f"unknown method {method!r}")
    mat = h.to_sparse()
    if mat.shape[0] <= 16:
        return float(np.linalg.eigvalsh(mat.toarray())[0])
    v0 = np.ones(mat.shape[0], dtype=complex) / math.sqrt(mat.shape[0])
    try:
        vals = spla.eigsh(mat, k=1, which="SA", tol=1e-13, v0=v0, maxiter=100_000,
                          return_eigenvectors=False)
    except spla.ArpackNoConvergence as exc:
        raise NumericError("Lanczos ground-energy iteration did not converge") from exc
    return float(vals[0])


def optimum(instance: ProblemInstance) -> float:
    """``C_max`` for Max-Cut, ``E_0`` for TFIM."""
    if instance.kind == MAXCUT:
        return brute_force_maxcut(instance.graph)[0]
    return ground_energy(instance.cost_hamiltonian())


def approximation_ratio(instance: ProblemInstance, achieved: float,
                        reference: float | None = None) -> float:
    """Ratio from an achieved ``<H_C>``.

    Max-Cut: ``(W/2 - <H_C>) / C_max``.  TFIM: ``<H> / E_0``.  ``reference``
    may supply a precomputed ``C_max`` / ``E_0``.
    """
    ref = optimum(instance) if reference is None else reference
    if instance.kind == MAXCUT:
        if ref <= 0:
            raise InputError("approximation ratio undefined for a graph with zero maximum cut")
        r = (instance.graph.total_weight / 2 - achieved) / ref
    else:
        if ref >= 0:
            raise InputError("TFIM approximation ratio needs a negative ground energy")
        r = achieved / ref
    if r > 1 + 1e-6:
        raise ConsistencyError(f"approximation ratio {r:.9f} exceeds 1; oracle or expectation is wrong")
    return float(r)


# ---------------------------------------------------------------------------
# classical baselines
# ---------------------------------------------------------------------------


def greedy_maxcut(graph: WeightedGraph) -> Solution:
    """Single pass in index order; move a vertex when that raises the cut."""
    side = [0] * graph.n  # 0 = S-bar, 1 = S
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(graph.n)]
    for i, j, w in graph.edges:
        nbrs[i].append((j, w))
        nbrs[j].append((i, w))
    cut = 0.0
    for v in range(graph.n):
        delta = 0.0
        for u, w in nbrs[v]:
            delta += -w if side[u] != side[v] else w
        if delta > 0:
            side[v] = 1 - side[v]
            cut += delta
    bits = tuple(side)
    return Solution(bits, cut_value(graph, bits), _maybe_ratio(graph, cut_value(graph, bits)))


def _maybe_ratio(graph: WeightedGraph, cut: float, max_n: int = 22) -> float | None:
    if graph.n > max_n or not graph.edges:
        return None
    cmax = brute_force_maxcut(graph, max_n)[0]
    return cut / cmax if cmax > 0 else None


def gw_maxcut(graph: WeightedGraph, rounds: int = 1, rng: np.random.Generator | None = None,
              rank: int | None = None, max_iter: int = 5000, tol: float = 1e-9) -> Solution:
    """Goemans-Williamson with a low-rank (Burer-Monteiro) relaxation.

    Unit vectors ``v_i`` in ``R^rank`` maximize ``sum w_ij (1 - v_i.v_j) / 2`` by
    projected gradient ascent; the best of ``rounds`` random-hyperplane
    roundings is returned (one hyperplane by default, as in the classic
    algorithm).  ``flags['stagnated']`` marks a relaxation that
    hit ``max_iter`` before the objective settled.
    """
    if rounds < 1:
        raise InputError("rounds must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    n = graph.n
    k = rank or max(2, math.ceil(math.sqrt(2 * n)))
    W = graph.weight_matrix()
    V = rng.standard_normal((n, k))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    step = 1.0 / max(1e-12, np.abs(W).sum(axis=1).max())

    def relax(V):
        return 0.25 * float(np.sum(W * (1 - V @ V.T)))

    obj = relax(V)
    stagnated = True
    for _ in range(max_iter):
        # ascent direction of sum w (1 - v_i.v_j)/2 is -W V
        V_new = V - step * (W @ V)
        V_new /= np.linalg.norm(V_new, axis=1, keepdims=True)
        new_obj = relax(V_new)
        if new_obj < obj - 1e-12:
            step *= 0.5
            continue
        V, done = V_new, new_obj - obj <= tol * max(1.0, abs(obj))
        obj = new_obj
        if done:
            stagnated = False
            break
    if stagnated:
        log.warning("GW relaxation did not settle within %d iterations", max_iter)
    best_bits, best_cut = None, -np.inf
    for _ in range(rounds):
        r = rng.standard_normal(k)
        bits = tuple(int(x) for x in (V @ r < 0))
        c = cut_value(graph, bits)
        if c > best_cut:
            best_bits, best_cut = bits, c
    return Solution(best_bits, best_cut, _maybe_ratio(graph, best_cut),
                    {"stagnated": stagnated, "relaxation": obj})


# ---------------------------------------------------------------------------
# QAOA variants
# ---------------------------------------------------------------------------


def ma_qaoa_spec(n: int) -> MixerSpec:
    """Multi-angle QAOA mixer: all-X with one angle per qubit."""
    return ng_spec(n)


def default_adapt_pool(n: int) -> list[PauliSum]:
    def single(q, op):
        return PauliSum.on_qubits(n, {q: op})

    pool = [PauliSum(n, {"I" * q + "X" + "I" * (n - q - 1): 1.0 for q in range(n)})]
    pool += [single(q, "X") for q in range(n)]
    pool += [single(q, "Y") for q in range(n)]
    return pool


@dataclass
class AdaptCircuit:
    """Layered circuit whose k-th mixer is ``exp(-i beta_k A_k)`` for a pool operator."""

    n: int
    cost: PauliSum
    mixers: list[PauliSum]

    @property
    def p(self) -> int:
        return len(self.mixers)

    def as_fg(self) -> bool:
        full = default_adapt_pool(self.n)[0]
        return all(m == full for m in self.mixers)


class _Layered:
    """Adjoint gradients for a sequence of generic Hermitian gates."""

    def __init__(self, cost_op: _CostOperator, ops: list[_CostOperator], psi0: np.ndarray):
        self.cost_op = cost_op
        self.ops = ops
        self.psi0 = psi0

    def gates(self, params):
        for k, op in enumerate(self.ops):
            yield self.cost_op, params[2 * k]
            yield op, params[2 * k + 1]

    def state(self, params):
        psi = self.psi0[None, :].copy()
        for op, th in self.gates(params):
            psi = op.evolve(psi, np.array([th]))
        return psi

    def loss_and_grad(self, params):
        gates = list(self.gates(params))
        phi = self.psi0[None, :].copy()
        for op, th in gates:
            phi = op.evolve(phi, np.array([th]))
        lam = self.cost_op.apply(phi)
        loss = float(np.vdot(phi[0], lam[0]).real)
        grad = np.empty(len(gates))
        for idx in reversed(range(len(gates))):
            op, th = gates[idx]
            grad[idx] = 2 * np.vdot(lam[0], op.apply(phi)[0]).imag
            phi = op.evolve(phi, np.array([-th]))
            lam = op.evolve(lam, np.array([-th]))
        return loss, grad


def adapt_qaoa(instance: ProblemInstance, pool: Sequence[PauliSum] | None = None,
               max_depth: int = 10, grad_threshold: float = 1e-3, epochs: int = 40,
               lr: float = 0.15, alpha0: float = 0.01) -> tuple[AdaptCircuit, OptimizeReport]:
    """Greedy layer-wise mixer selection followed by full re-optimization.

    The score of ``A`` is ``|<phi|[H_C, A]|phi>|`` with
    ``phi = exp(-i alpha0 H_C) psi_{k-1}``.
    """
    cost = instance.cost_hamiltonian()
    n = cost.n
    pool = list(default_adapt_pool(n) if pool is None else pool)
    if not pool:
        raise InputError("ADAPT-QAOA needs a non-empty operator pool")
    for a in pool:
        if a.n != n or not a.is_hermitian(tol=1e-12):
            raise InputError("pool operators must be Hermitian and act on the problem's qubits")
    cost_op = _CostOperator(cost)
    pool_ops = [_CostOperator(a, "dense" if not a.is_diagonal() else "auto") for a in pool]
    psi0 = plus_state(n)
    chosen: list[int] = []
    params = np.zeros(0)
    trace: list[float] = []
    gnorms: list[float] = []
    report = None
    for _ in range(max_depth):
        layered = _Layered(cost_op, [pool_ops[c] for c in chosen], psi0)
        psi = layered.state(params)
        phi = cost_op.evolve(psi, np.array([alpha0]))
        h_phi = cost_op.apply(phi)[0]
        scores = [2 * abs(np.vdot(h_phi, op.apply(phi)[0]).imag) for op in pool_ops]
        best = int(np.argmax(scores))
        if scores[best] < grad_threshold:
            break
        chosen.append(best)
        params = np.concatenate([params, [alpha0, 0.0]])
        layered = _Layered(cost_op, [pool_ops[c] for c in chosen], psi0)
        opt = Adam(params.size, lr)
        for _epoch in range(epochs):
            loss, grad = layered.loss_and_grad(params)
            if not math.isfinite(loss):
                raise NumericError("non-finite loss in ADAPT-QAOA", trace=trace)
            trace.append(loss)
            gnorms.append(float(np.linalg.norm(grad)))
            params = opt.step(params, grad)
    layered = _Layered(cost_op, [pool_ops[c] for c in chosen], psi0)
    if chosen:
        final = layered.loss_and_grad(params)[0]
    else:
        final = float(cost_op.expectation(psi0[None, :])[0])
    report = OptimizeReport(params, trace, gnorms, final, min(trace + [final]),
                            {"selected": chosen})
    return AdaptCircuit(n, cost, [pool[c] for c in chosen]), report
