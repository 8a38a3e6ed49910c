"""Exact statevector QAOA with typed, grouped mixers.

One layer applies ``exp(-i alpha_k H_C)`` and then ``exp(-i beta_kj P_i)`` on
every qubit ``i`` of group ``j``.  The objective ``<H_C>`` is minimized.

Parameters are flat arrays laid out layer by layer as
``[alpha_1, beta_11 .. beta_1K, alpha_2, beta_21 .. ]`` so a circuit of depth
``p`` with ``K`` mixer groups has ``p * (1 + K)`` angles.

The engine works on batches: ``Engine`` evolves ``B`` rows at once that share
the qubit count, depth and cost Hamiltonian but may differ in mixer.  The
single-circuit functions are thin wrappers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .errors import DimensionError, InputError, NumericError, UnsupportedError
from .mixer import MixerSpec
from .pauli import PauliSum

log = logging.getLogger(__name__)

__all__ = [
    "CircuitSpec",
    "OptimizeReport",
    "Engine",
    "plus_state",
    "basis_state",
    "apply_cost_evolution",
    "apply_mixer_layer",
    "evolve",
    "expectation",
    "gradient",
    "parameter_shift_gradient",
    "optimize",
    "optimize_batch",
    "initial_params",
    "sample_bitstring",
    "expm_multiply_krylov",
    "Adam",
]

DENSE_LIMIT = 10
KRYLOV_DIM = 64


def plus_state(n: int) -> np.ndarray:
    return np.full(1 << n, 2 ** (-n / 2), dtype=complex)


def basis_state(bits: str | Sequence[int]) -> np.ndarray:
    bits = [int(b) for b in bits]
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[int("".join(map(str, bits)), 2)] = 1.0
    return psi


def _check_normalized(psi: np.ndarray, n: int) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != 1 << n:
        raise DimensionError(f"state of length {psi.shape[-1]} for {n} qubits")
    norms = np.linalg.norm(psi, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise InputError("state must be normalized")
    return psi


def _check_hermitian(h: PauliSum):
    if not h.is_hermitian(tol=1e-12):
        raise InputError("Hamiltonian must be Hermitian (real Pauli coefficients)")


@dataclass(frozen=True)
class CircuitSpec:
    n: int
    p: int
    cost: PauliSum
    mixer: MixerSpec

    def __post_init__(self):
        if self.p < 1:
            raise InputError("circuit depth must be at least 1")
        if self.cost.n != self.n or self.mixer.n != self.n:
            raise DimensionError("cost, mixer and circuit qubit counts differ")
        _check_hermitian(self.cost)

    @property
    def diagonal_flag(self) -> bool:
        return self.cost.is_diagonal()

    @property
    def num_params(self) -> int:
        return self.mixer.num_params(self.p)

    def split(self, params) -> tuple[np.ndarray, np.ndarray]:
        """``(alphas[p], betas[p, K])`` views of a flat parameter vector."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.num_params,):
            raise InputError(f"expected {self.num_params} parameters, got {params.shape}")
        layers = params.reshape(self.p, 1 + self.mixer.num_groups)
        return layers[:, 0], layers[:, 1:]


@dataclass
class OptimizeReport:
    params: np.ndarray
    loss_trace: list[float]
    grad_norm_trace: list[float]
    final_loss: float
    best_loss: float
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Krylov exponential
# ---------------------------------------------------------------------------


def expm_multiply_krylov(apply_h, v: np.ndarray, t: float, tol: float = 1e-10,
                         m_max: int = KRYLOV_DIM, max_steps: int = 10_000) -> np.ndarray:
    """``exp(-i t H) v`` for Hermitian ``H`` by Lanczos with adaptive time stepping.

    The step is halved whenever the a-posteriori error estimate exceeds
    ``tol * |dt| / |t|``; the Krylov basis is rebuilt (restarted) every step.
    """
    w = np.array(v, dtype=complex)
    beta0 = np.linalg.norm(w)
    if t == 0 or beta0 == 0:
        return w
    remaining = float(t)
    dt = remaining
    steps = 0
    while remaining != 0.0:
        steps += 1
        if steps > max_steps:
            raise NumericError("Krylov exponential did not converge")
        nrm = np.linalg.norm(w)
        V = np.zeros((m_max + 1, w.shape[0]), dtype=complex)
        alpha = np.zeros(m_max)
        beta = np.zeros(m_max)
        V[0] = w / nrm
        m = m_max
        breakdown = False
        for j in range(m_max):
            u = apply_h(V[j])
            alpha[j] = np.vdot(V[j], u).real
            u = u - alpha[j] * V[j] - (beta[j - 1] * V[j - 1] if j else 0)
            # full reorthogonalization keeps the small basis orthonormal
            u -= V[: j + 1].T @ (V[: j + 1].conj() @ u)
            beta[j] = np.linalg.norm(u)
            if beta[j] < 1e-13 * max(1.0, abs(alpha[j])):
                m = j + 1
                breakdown = True
                break
            V[j + 1] = u / beta[j]
        T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
        evals, evecs = np.linalg.eigh(T)
        while True:
            step = np.sign(remaining) * min(abs(dt), abs(remaining))
            small = evecs @ (np.exp(-1j * step * evals) * evecs[0].conj())
            err = 0.0 if breakdown else beta[m - 1] * abs(small[m - 1]) * nrm
            if err <= tol * max(abs(step) / abs(t), 1e-3) or abs(step) < 1e-14:
                break
            dt = step / 2
        w = nrm * (V[:m].T @ small)
        remaining -= step
        if abs(remaining) < 1e-15 * abs(t):
            remaining = 0.0
        dt = step * 2 if err < tol * 1e-3 else step
    return w


# ---------------------------------------------------------------------------
# batched engine
# ---------------------------------------------------------------------------


class _CostOperator:
    """Evolution and application of one cost Hamiltonian on batched states."""

    def __init__(self, cost: PauliSum, method: str = "auto"):
        _check_hermitian(cost)
        self.cost = cost
        self.n = cost.n
        self.diagonal = cost.is_diagonal()
        if method == "auto":
            method = "diagonal" if self.diagonal else ("dense" if self.n <= DENSE_LIMIT else "krylov")
        if method == "diagonal" and not self.diagonal:
            raise InputError("diagonal evolution requested for a non-diagonal cost")
        self.method = method
        if method == "diagonal":
            self.diag = cost.diagonal().real
        else:
            self.sparse = cost.to_sparse()
            if method == "dense":
                self.evals, self.evecs = np.linalg.eigh(self.sparse.toarray())
            elif method != "krylov":
                raise InputError(f"unknown cost evolution method {method!r}")

    def apply(self, psi: np.ndarray) -> np.ndarray:
        if self.method == "diagonal":
            return psi * self.diag
        return np.asarray((self.sparse @ psi.T).T)

    def evolve(self, psi: np.ndarray, alphas: np.ndarray) -> np.ndarray:
        """``exp(-i alpha_b H) psi_b`` row by row; ``alphas`` has shape ``(B,)``."""
        if self.method == "diagonal":
            return _phase_kernel(np.ascontiguousarray(psi, dtype=np.complex128), self.diag,
                                 np.asarray(alphas, dtype=float))
        if self.method == "dense":
            coeffs = psi @ self.evecs.conj()
            coeffs *= np.exp(-1j * alphas[:, None] * self.evals[None, :])
            return coeffs @ self.evecs.T
        out = np.empty_like(psi)
        for b in range(psi.shape[0]):
            out[b] = expm_multiply_krylov(lambda x: self.sparse @ x, psi[b], alphas[b])
        return out

    def expectation(self, psi: np.ndarray) -> np.ndarray:
        if self.method == "diagonal":
            return (np.abs(psi) ** 2) @ self.diag
        return np.einsum("bi,bi->b", psi.conj(), self.apply(psi)).real


@njit(cache=True)
def _phase_kernel(psi, diag, alphas):
    out = np.empty_like(psi)
    for b in range(psi.shape[0]):
        for i in range(psi.shape[1]):
            t = -alphas[b] * diag[i]
            out[b, i] = psi[b, i] * (np.cos(t) + 1j * np.sin(t))
    return out


@njit(cache=True)
def _pauli_overlap_kernel(lam, phi, n, q, ytype):
    B, dim = phi.shape
    stride = 1 << (n - q - 1)
    out = np.empty(B, dtype=np.complex128)
    for b in range(B):
        a = 0j
        c = 0j
        for i in range(dim):
            if i & stride:
                continue
            j = i | stride
            a += np.conj(lam[b, i]) * phi[b, j]
            c += np.conj(lam[b, j]) * phi[b, i]
        # X: a + c;  Y: -i a + i c
        out[b] = 1j * (c - a) if ytype[b] else a + c
    return out


@njit(cache=True)
def _mixer_kernel(psi, n, ytype, betas_q):
    B, dim = psi.shape
    out = psi.copy()
    for b in range(B):
        for q in range(n):
            cs = np.cos(betas_q[b, q])
            sn = np.sin(betas_q[b, q])
            # off-diagonal entries of the 2x2 rotation: X -> (-is, -is), Y -> (-s, +s)
            if ytype[b, q]:
                up = -sn + 0j
                down = sn + 0j
            else:
                up = -1j * sn
                down = -1j * sn
            stride = 1 << (n - q - 1)
            for i in range(dim):
                if i & stride:
                    continue
                j = i | stride
                x0 = out[b, i]
                x1 = out[b, j]
                out[b, i] = cs * x0 + up * x1
                out[b, j] = cs * x1 + down * x0
    return out


def _pauli_overlap(lam: np.ndarray, phi: np.ndarray, n: int, q: int, ytype: np.ndarray) -> np.ndarray:
    """``<lam_b| P_q |phi_b>`` per row without materializing ``P_q phi``."""
    return _pauli_overlap_kernel(np.ascontiguousarray(lam), np.ascontiguousarray(phi), n, q,
                                 np.ascontiguousarray(ytype))


def _mixer_rows(psi: np.ndarray, n: int, ytype: np.ndarray, betas_q: np.ndarray) -> np.ndarray:
    """``prod_q exp(-i beta_bq P_q)`` on each row; ``betas_q`` has shape ``(B, n)``."""
    return _mixer_kernel(np.ascontiguousarray(psi, dtype=np.complex128), n,
                         np.ascontiguousarray(ytype), np.ascontiguousarray(betas_q, dtype=float))


class Engine:
    """Batched QAOA evolution and adjoint gradients.

    All rows share ``n``, ``p`` and the cost Hamiltonian.  Row ``b`` uses
    ``mixers[b]``; its flat parameter vector has ``p * (1 + K_b)`` entries.
    """

    def __init__(self, cost: PauliSum, p: int, mixers: Sequence[MixerSpec],
                 psi0: np.ndarray | None = None, method: str = "auto"):
        if p < 1:
            raise InputError("circuit depth must be at least 1")
        self.n = cost.n
        self.p = int(p)
        self.op = _CostOperator(cost, method)
        self.mixers = list(mixers)
        if not self.mixers:
            raise InputError("at least one mixer is required")
        for m in self.mixers:
            if m.n != self.n:
                raise DimensionError(f"mixer over {m.n} qubits for a {self.n}-qubit cost")
        self.B = len(self.mixers)
        self.psi0 = _check_normalized(plus_state(self.n) if psi0 is None else psi0, self.n)
        # Y rows pick up phases (-i, +i) on the (0, 1) halves after the bit flip
        self.ytype = np.array([[t == "Y" for t in m.types] for m in self.mixers])
        self.group_of = np.array([m.groups for m in self.mixers])
        self.num_groups = np.array([m.num_groups for m in self.mixers])
        self.sizes = self.p * (1 + self.num_groups)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])

    # -- parameter layout ----------------------------------------------------

    def unpack(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated parameters -> ``alphas (B, p)`` and per-qubit ``betas (B, p, n)``."""
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.offsets[-1],):
            raise InputError(f"expected {self.offsets[-1]} parameters, got {flat.shape}")
        alphas = np.empty((self.B, self.p))
        betas = np.empty((self.B, self.p, self.n))
        for b in range(self.B):
            layers = flat[self.offsets[b]: self.offsets[b + 1]].reshape(self.p, -1)
            alphas[b] = layers[:, 0]
            betas[b] = layers[:, 1:][:, self.group_of[b]]
        return alphas, betas

    def pack_grad(self, dalpha: np.ndarray, dbeta_q: np.ndarray) -> np.ndarray:
        out = np.empty(self.offsets[-1])
        for b in range(self.B):
            k = self.num_groups[b]
            layers = np.zeros((self.p, 1 + k))
            layers[:, 0] = dalpha[b]
            np.add.at(layers.T, 1 + self.group_of[b], dbeta_q[b].T)
            out[self.offsets[b]: self.offsets[b + 1]] = layers.ravel()
        return out

    def split_rows(self, flat: np.ndarray) -> list[np.ndarray]:
        return [flat[self.offsets[b]: self.offsets[b + 1]] for b in range(self.B)]

    # -- primitive layers ------------------------------------------------------

    def apply_mixer(self, psi: np.ndarray, betas_q: np.ndarray) -> np.ndarray:
        return _mixer_rows(psi, self.n, self.ytype, betas_q)

    # -- evolution and gradients --------------------------------------------

    def evolve(self, flat: np.ndarray) -> np.ndarray:
        alphas, betas = self.unpack(flat)
        psi = np.repeat(self.psi0[None, :], self.B, axis=0)
        for k in range(self.p):
            psi = self.op.evolve(psi, alphas[:, k])
            psi = self.apply_mixer(psi, betas[:, k])
        return psi

    def loss(self, flat: np.ndarray) -> np.ndarray:
        return self.op.expectation(self.evolve(flat))

    def loss_and_grad(self, flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-row ``<H_C>`` and the concatenated exact gradient (adjoint sweep)."""
        alphas, betas = self.unpack(flat)
        phi = np.repeat(self.psi0[None, :], self.B, axis=0)
        for k in range(self.p):
            phi = self.op.evolve(phi, alphas[:, k])
            phi = self.apply_mixer(phi, betas[:, k])
        lam = self.op.apply(phi)
        loss = np.einsum("bi,bi->b", phi.conj(), lam).real
        dalpha = np.empty((self.B, self.p))
        dbeta = np.empty((self.B, self.p, self.n))
        for k in reversed(range(self.p)):
            # d/dtheta of exp(-i theta G) inserts -iG; dL = 2 Re <lam| -iG |phi>
            for q in range(self.n):
                dbeta[:, k, q] = 2 * _pauli_overlap(lam, phi, self.n, q, self.ytype[:, q]).imag
            phi = self.apply_mixer(phi, -betas[:, k])
            lam = self.apply_mixer(lam, -betas[:, k])
            dalpha[:, k] = 2 * np.einsum("bi,bi->b", lam.conj(), self.op.apply(phi)).imag
            phi = self.op.evolve(phi, -alphas[:, k])
            lam = self.op.evolve(lam, -alphas[:, k])
        return loss, self.pack_grad(dalpha, dbeta)


# ---------------------------------------------------------------------------
# single-circuit API
# ---------------------------------------------------------------------------


def _single_engine(circuit: CircuitSpec, psi0=None, method: str = "auto") -> Engine:
    return Engine(circuit.cost, circuit.p, [circuit.mixer], psi0, method)


def apply_cost_evolution(state: np.ndarray, alpha: float, cost: PauliSum,
                         method: str = "auto") -> np.ndarray:
    state = np.asarray(state, dtype=complex)
    op = _CostOperator(cost, method)
    if state.shape[-1] != 1 << cost.n:
        raise DimensionError(f"state of length {state.shape[-1]} for {cost.n} qubits")
    return op.evolve(state.reshape(1, -1), np.array([alpha], dtype=float))[0]


def apply_mixer_layer(state: np.ndarray, betas: Sequence[float], mixer: MixerSpec) -> np.ndarray:
    betas = np.asarray(betas, dtype=float)
    if betas.shape != (mixer.num_groups,):
        raise InputError(f"{mixer.num_groups} group angles expected, got {betas.shape}")
    state = np.asarray(state, dtype=complex)
    if state.shape[-1] != 1 << mixer.n:
        raise DimensionError(f"state of length {state.shape[-1]} for {mixer.n} qubits")
    ytype = np.array([[t == "Y" for t in mixer.types]])
    return _mixer_rows(state.reshape(1, -1), mixer.n, ytype, betas[list(mixer.groups)][None, :])[0]


def evolve(circuit: CircuitSpec, params, psi0=None, method: str = "auto") -> np.ndarray:
    circuit.split(params)
    return _single_engine(circuit, psi0, method).evolve(np.asarray(params, dtype=float))[0]


def expectation(state: np.ndarray, h: PauliSum) -> float:
    _check_hermitian(h)
    state = np.asarray(state, dtype=complex)
    if state.shape[-1] != 1 << h.n:
        raise DimensionError(f"state of length {state.shape[-1]} for {h.n} qubits")
    if h.is_diagonal():
        return float((np.abs(state) ** 2) @ h.diagonal().real)
    return float(np.vdot(state, h.apply(state)).real)


def gradient(circuit: CircuitSpec, params, psi0=None) -> np.ndarray:
    circuit.split(params)
    _, grad = _single_engine(circuit, psi0).loss_and_grad(np.asarray(params, dtype=float))
    return grad


def parameter_shift_gradient(circuit: CircuitSpec, params, psi0=None,
                             shift: float = np.pi / 2) -> np.ndarray:
    """Two-point shift rule for gates generated by one Pauli string.

    ``shift`` is the rotation angle ``s`` of ``R_P(theta) = exp(-i theta P / 2)``;
    a gate ``exp(-i c beta P)`` is shifted by ``beta +- s / (2c)`` and the
    derivative is ``c * (f_+ - f_-) / sin(s)``.  Multiples of pi are rejected.
    """
    if abs(np.sin(shift)) < 1e-12:
        raise InputError("shift must not be a multiple of pi")
    alphas, betas = circuit.split(params)
    if len(circuit.cost) != 1:
        raise UnsupportedError(
            "cost layer has a multi-term generator; use gradient() instead"
        )
    if any(len(members) != 1 for members in circuit.mixer.group_members()):
        raise UnsupportedError(
            "grouped mixer parameters have multi-term generators; use gradient() instead"
        )
    cost_coeff = next(iter(circuit.cost.items()))[1].real
    params = np.asarray(params, dtype=float)
    k_groups = circuit.mixer.num_groups
    scales = np.ones(params.shape[0])
    scales.reshape(circuit.p, 1 + k_groups)[:, 0] = cost_coeff
    # all shifted circuits evaluated as one batch
    rows = []
    for idx in range(params.shape[0]):
        delta = shift / (2 * scales[idx])
        for sign in (1.0, -1.0):
            th = params.copy()
            th[idx] += sign * delta
            rows.append(th)
    eng = Engine(circuit.cost, circuit.p, [circuit.mixer] * len(rows), psi0)
    values = eng.loss(np.concatenate(rows)).reshape(-1, 2)
    return scales * (values[:, 0] - values[:, 1]) / np.sin(shift)


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------


class Adam:
    """Bias-corrected Adam on a flat parameter vector (elementwise, so batches stay independent)."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(grad)):
            raise NumericError("non-finite gradient")
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def initial_params(size: int, rng: np.random.Generator, scale: float = np.pi / 8) -> np.ndarray:
    return rng.uniform(-scale, scale, size)


def optimize_batch(engine: Engine, init: np.ndarray, epochs: int = 40,
                   lr: float = 0.15) -> list[OptimizeReport]:
    """Independent Adam runs for every row of ``engine``, advanced in lockstep."""
    if epochs < 1:
        raise InputError("epochs must be at least 1")
    params = np.asarray(init, dtype=float).copy()
    opt = Adam(params.shape[0], lr)
    losses = np.empty((epochs, engine.B))
    gnorms = np.empty((epochs, engine.B))
    for epoch in range(epochs):
        loss, grad = engine.loss_and_grad(params)
        losses[epoch] = loss
        gnorms[epoch] = [np.linalg.norm(g) for g in engine.split_rows(grad)]
        if not np.all(np.isfinite(loss)):
            raise NumericError(f"non-finite loss at epoch {epoch}", trace=losses[: epoch + 1].tolist())
        params = opt.step(params, grad)
    final = engine.loss(params)
    reports = []
    for b, row in enumerate(engine.split_rows(params)):
        trace = losses[:, b].tolist()
        reports.append(OptimizeReport(
            params=row.copy(),
            loss_trace=trace,
            grad_norm_trace=gnorms[:, b].tolist(),
            final_loss=float(final[b]),
            best_loss=float(min(min(trace), final[b])),
        ))
    return reports


def optimize(circuit: CircuitSpec, init_params=None, epochs: int = 40, lr: float = 0.15,
             seed: int | None = 0, psi0=None) -> OptimizeReport:
    """Adam minimization of ``<H_C>``; random start ``U[-pi/8, pi/8]`` when no init given."""
    if epochs < 1:
        raise InputError("epochs must be at least 1")
    if init_params is None:
        init_params = initial_params(circuit.num_params, np.random.default_rng(seed))
    circuit.split(init_params)
    return optimize_batch(_single_engine(circuit, psi0), init_params, epochs, lr)[0]


def sample_bitstring(state: np.ndarray, rng: np.random.Generator) -> tuple[int, ...]:
    state = np.asarray(state, dtype=complex)
    n = int(np.log2(state.shape[0]))
    probs = np.abs(state) ** 2
    probs = probs / probs.sum()
    idx = int(rng.choice(state.shape[0], p=probs))
    return tuple(int(b) for b in format(idx, f"0{n}b"))
