"""Pauli-string algebra, Lie closure, effective dimension and graph orbits.

Letters are written left to right as qubits ``0 .. n-1``.  Statevector
indices follow the Kronecker convention: qubit 0 is the most significant
bit of the basis index.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import CapacityError, DimensionError, InputError, NumericError

__all__ = [
    "PauliTerm",
    "PauliSum",
    "AnsatzDesign",
    "OrbitPartition",
    "commutator",
    "commutator_sum",
    "lie_closure",
    "dla_dimension",
    "effective_subspace",
    "effective_dimension",
    "ground_state_in_subspace",
    "automorphism_orbits",
    "fg_design",
    "pg_design",
    "ng_design",
]

LETTERS = "IXYZ"

# single-qubit product table: (a, b) -> (power of i, letter)
_PRODUCT = {
    ("I", "I"): (0, "I"), ("I", "X"): (0, "X"), ("I", "Y"): (0, "Y"), ("I", "Z"): (0, "Z"),
    ("X", "I"): (0, "X"), ("X", "X"): (0, "I"), ("X", "Y"): (1, "Z"), ("X", "Z"): (3, "Y"),
    ("Y", "I"): (0, "Y"), ("Y", "X"): (3, "Z"), ("Y", "Y"): (0, "I"), ("Y", "Z"): (1, "X"),
    ("Z", "I"): (0, "Z"), ("Z", "X"): (1, "Y"), ("Z", "Y"): (3, "X"), ("Z", "Z"): (0, "I"),
}
_I_POWERS = (1, 1j, -1, -1j)


def _check_letters(letters: str) -> str:
    if not letters or any(c not in LETTERS for c in letters):
        raise InputError(f"invalid Pauli letters {letters!r}")
    return letters


def pauli_product(a: str, b: str) -> tuple[int, str]:
    """Return ``(k, c)`` with ``a @ b == i**k * c`` for equal-length strings."""
    if len(a) != len(b):
        raise DimensionError(f"Pauli strings over {len(a)} and {len(b)} qubits")
    power = 0
    out = []
    for x, y in zip(a, b):
        k, c = _PRODUCT[x, y]
        power += k
        out.append(c)
    return power % 4, "".join(out)


def anticommute(a: str, b: str) -> bool:
    clashes = sum(1 for x, y in zip(a, b) if x != "I" and y != "I" and x != y)
    return clashes % 2 == 1


@dataclass(frozen=True)
class PauliTerm:
    letters: str
    coeff: complex = 1.0

    def __post_init__(self):
        _check_letters(self.letters)
        object.__setattr__(self, "coeff", complex(self.coeff))

    @property
    def n(self) -> int:
        return len(self.letters)

    def __mul__(self, other):
        if isinstance(other, PauliTerm):
            k, c = pauli_product(self.letters, other.letters)
            return PauliTerm(c, self.coeff * other.coeff * _I_POWERS[k])
        return PauliTerm(self.letters, self.coeff * other)

    __rmul__ = __mul__

    def __neg__(self):
        return PauliTerm(self.letters, -self.coeff)


class PauliSum:
    """Immutable sum of Pauli strings with distinct letters and nonzero coefficients."""

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[str, complex] | Iterable[PauliTerm] = ()):
        if n < 1:
            raise InputError("qubit count must be positive")
        self.n = int(n)
        acc: dict[str, complex] = {}
        items = terms.items() if isinstance(terms, Mapping) else ((t.letters, t.coeff) for t in terms)
        for letters, coeff in items:
            _check_letters(letters)
            if len(letters) != self.n:
                raise DimensionError(f"term {letters!r} does not act on {self.n} qubits")
            acc[letters] = acc.get(letters, 0.0) + complex(coeff)
        self._terms = {k: v for k, v in acc.items() if v != 0}

    @classmethod
    def single(cls, letters: str, coeff: complex = 1.0) -> "PauliSum":
        return cls(len(letters), {letters: coeff})

    @classmethod
    def on_qubits(cls, n: int, ops: Mapping[int, str], coeff: complex = 1.0) -> "PauliSum":
        letters = ["I"] * n
        for q, op in ops.items():
            letters[q] = op
        return cls(n, {"".join(letters): coeff})

    @property
    def terms(self) -> dict[str, complex]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return (PauliTerm(k, v) for k, v in self._terms.items())

    def __eq__(self, other):
        return isinstance(other, PauliSum) and self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def __repr__(self):
        body = " + ".join(f"({v:g})*{k}" for k, v in sorted(self._terms.items()))
        return f"PauliSum(n={self.n}, {body or '0'})"

    def _same_n(self, other: "PauliSum"):
        if other.n != self.n:
            raise DimensionError(f"PauliSums over {self.n} and {other.n} qubits")

    def __add__(self, other: "PauliSum") -> "PauliSum":
        self._same_n(other)
        acc = dict(self._terms)
        for k, v in other._terms.items():
            acc[k] = acc.get(k, 0.0) + v
        return PauliSum(self.n, acc)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + other * -1

    def __mul__(self, other):
        if isinstance(other, PauliSum):
            self._same_n(other)
            acc: dict[str, complex] = {}
            for a, ca in self._terms.items():
                for b, cb in other._terms.items():
                    k, c = pauli_product(a, b)
                    acc[c] = acc.get(c, 0.0) + ca * cb * _I_POWERS[k]
            return PauliSum(self.n, acc)
        return PauliSum(self.n, {k: v * other for k, v in self._terms.items()})

    def __rmul__(self, scalar):
        return self * scalar

    def __neg__(self):
        return self * -1

    def is_hermitian(self, tol: float = 0.0) -> bool:
        return all(abs(v.imag) <= tol for v in self._terms.values())

    def is_diagonal(self) -> bool:
        return all(set(k) <= {"I", "Z"} for k in self._terms)

    def split(self) -> list["PauliSum"]:
        """One single-term PauliSum per term."""
        return [PauliSum(self.n, {k: v}) for k, v in self._terms.items()]

    # -- dense/sparse views ------------------------------------------------

    def diagonal(self) -> np.ndarray:
        """Diagonal of a Z/I-only sum as a real-or-complex vector of length 2**n."""
        if not self.is_diagonal():
            raise InputError("diagonal() requires a sum of I/Z strings")
        dim = 1 << self.n
        idx = np.arange(dim)
        out = np.zeros(dim, dtype=complex)
        for letters, coeff in self._terms.items():
            zmask = _mask(letters, "Z")
            out += coeff * _parity_sign(idx & zmask)
        if self.is_hermitian():
            return out.real.copy()
        return out

    def to_sparse(self) -> sp.csr_matrix:
        dim = 1 << self.n
        cols = np.arange(dim)
        mat = sp.csr_matrix((dim, dim), dtype=complex)
        for letters, coeff in self._terms.items():
            xmask, zmask, ny = _masks(letters)
            data = coeff * (1j ** ny) * _parity_sign(cols & zmask)
            mat = mat + sp.csr_matrix((data, (cols ^ xmask, cols)), shape=(dim, dim))
        return mat.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Return ``H @ state``; ``state`` may carry leading batch axes."""
        state = np.asarray(state)
        dim = 1 << self.n
        if state.shape[-1] != dim:
            raise DimensionError(f"state of length {state.shape[-1]} for {self.n} qubits")
        idx = np.arange(dim)
        out = np.zeros(np.broadcast_shapes(state.shape), dtype=complex)
        for letters, coeff in self._terms.items():
            xmask, zmask, ny = _masks(letters)
            src = idx ^ xmask
            phase = coeff * (1j ** ny) * _parity_sign(src & zmask)
            out += phase * state[..., src]
        return out

    # -- text format -------------------------------------------------------

    def to_text(self) -> str:
        return "".join(f"{v.real!r} {v.imag!r} {k}\n" for k, v in sorted(self._terms.items()))

    @classmethod
    def from_text(cls, text: str) -> "PauliSum":
        n = None
        acc: dict[str, complex] = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise InputError(f"line {lineno}: expected '<re> <im> <letters>'")
            try:
                coeff = complex(float(parts[0]), float(parts[1]))
            except ValueError as exc:
                raise InputError(f"line {lineno}: bad coefficient") from exc
            letters = _check_letters(parts[2].upper())
            if n is None:
                n = len(letters)
            elif len(letters) != n:
                raise DimensionError(f"line {lineno}: expected {n} letters")
            acc[letters] = acc.get(letters, 0.0) + coeff
        if n is None:
            raise InputError("empty PauliSum text")
        return cls(n, acc)


def _mask(letters: str, which: str) -> int:
    n = len(letters)
    m = 0
    for i, c in enumerate(letters):
        if c in which:
            m |= 1 << (n - 1 - i)
    return m


def _masks(letters: str) -> tuple[int, int, int]:
    return _mask(letters, "XY"), _mask(letters, "ZY"), letters.count("Y")


def _parity_sign(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=np.int64).copy()
    parity = np.zeros_like(v)
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return 1 - 2 * parity


# ---------------------------------------------------------------------------
# commutators and Lie closure
# ---------------------------------------------------------------------------


def commutator(a: PauliTerm, b: PauliTerm) -> PauliTerm | None:
    """``[a, b] = ab - ba``; ``None`` when the strings commute."""
    if a.n != b.n:
        raise DimensionError(f"PauliTerms over {a.n} and {b.n} qubits")
    if not anticommute(a.letters, b.letters):
        return None
    prod = a * b
    return PauliTerm(prod.letters, 2 * prod.coeff)


def commutator_sum(a: PauliSum, b: PauliSum) -> PauliSum:
    a._same_n(b)
    acc: dict[str, complex] = {}
    for la, ca in a.items():
        for lb, cb in b.items():
            if anticommute(la, lb):
                k, c = pauli_product(la, lb)
                acc[c] = acc.get(c, 0.0) + 2 * ca * cb * _I_POWERS[k]
    return PauliSum(a.n, acc)


# Independence is decided exactly in GF(P): every float coefficient is a dyadic
# rational, which maps into the field without loss.  A set of rational vectors
# that is independent over Q stays independent mod P unless P divides one of
# its nonzero minors, which for P = 2**31 - 1 is vanishingly rare; the payoff
# is that coefficients never grow the way rational elimination does.
_P = (1 << 31) - 1
_DENSE_MAX_QUBITS = 7


def _to_field(x: float) -> int:
    f = Fraction(x)
    return f.numerator % _P * pow(f.denominator % _P, _P - 2, _P) % _P


def _hermitian_terms(ps: PauliSum) -> dict[str, float]:
    if not ps.is_hermitian():
        raise InputError("Lie closure generators must be Hermitian (real coefficients)")
    return {k: float(v.real) for k, v in ps.items() if v.real != 0}


def _ad_sign(la: str, lb: str) -> tuple[int, str]:
    """``-i [P_a, P_b] = s * P_c``; returns ``(s, c)`` with ``s`` in {0, 2, -2}."""
    if not anticommute(la, lb):
        return 0, la
    k, c = pauli_product(la, lb)
    return (2 if k == 1 else -2), c


class _SparseSpan:
    """Reduced row-echelon table keyed by Pauli string, entries in GF(P)."""

    def __init__(self):
        self.rows: dict[str, dict[str, int]] = {}  # pivot -> row, row[pivot] == 1

    def __len__(self):
        return len(self.rows)

    def reduce(self, vec: dict[str, int]) -> dict[str, int]:
        v = dict(vec)
        # rows are fully reduced, so subtracting one never creates another pivot
        for pivot in [k for k in v if k in self.rows]:
            c = v[pivot]
            for k, r in self.rows[pivot].items():
                nv = (v.get(k, 0) - c * r) % _P
                if nv:
                    v[k] = nv
                else:
                    v.pop(k, None)
        return v

    def add(self, vec: dict[str, int]) -> bool:
        v = self.reduce(vec)
        if not v:
            return False
        pivot = min(v)
        inv = pow(v[pivot], _P - 2, _P)
        v = {k: c * inv % _P for k, c in v.items()}
        for row in self.rows.values():
            c = row.get(pivot, 0)
            if c:
                for k, r in v.items():
                    nv = (row.get(k, 0) - c * r) % _P
                    if nv:
                        row[k] = nv
                    else:
                        row.pop(k, None)
        self.rows[pivot] = v
        return True


def _sparse_closure(gens: list[dict[str, float]], max_dim: int) -> list[dict[str, float]]:
    span = _SparseSpan()
    basis: list[dict[str, float]] = []
    field_gens = [{k: _to_field(v) for k, v in g.items()} for g in gens]

    def push(fl: dict[str, float], ex: dict[str, int]) -> bool:
        ex = {k: v for k, v in ex.items() if v}
        if not ex or not span.add(ex):
            return False
        top = max(abs(v) for v in fl.values())
        basis.append({k: v / top for k, v in fl.items() if v != 0})
        if len(basis) > max_dim:
            raise CapacityError(f"Lie closure exceeds max_dim={max_dim}", partial=len(basis))
        return True

    fields: list[dict[str, int]] = []
    queue: deque[int] = deque()
    for g, fg in zip(gens, field_gens):
        if push(g, fg):
            fields.append(fg)
            queue.append(len(basis) - 1)
    while queue:
        i = queue.popleft()
        for g, fg in zip(gens, field_gens):
            fl: dict[str, float] = {}
            ex: dict[str, int] = {}
            for la, ca in basis[i].items():
                xa = fields[i].get(la, 0)
                for lb, cb in g.items():
                    s, c = _ad_sign(la, lb)
                    if s:
                        fl[c] = fl.get(c, 0.0) + s * ca * cb
                        ex[c] = (ex.get(c, 0) + s * xa * fg[lb]) % _P
            if push(fl, ex):
                fields.append(ex)
                queue.append(len(basis) - 1)
    return basis


def _letter_digits(n: int) -> np.ndarray:
    idx = np.arange(4**n)
    return np.stack([(idx >> (2 * (n - 1 - q))) & 3 for q in range(n)])  # (n, 4**n)


def _ad_table(n: int, letters: str, digits: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For every basis string ``a``: target index and sign of ``-i[P_a, P_b]``."""
    prod_letter = np.array([[LETTERS.index(_PRODUCT[x, y][1]) for y in LETTERS] for x in LETTERS])
    prod_pow = np.array([[_PRODUCT[x, y][0] for y in LETTERS] for x in LETTERS])
    b = [LETTERS.index(c) for c in letters]
    target = np.zeros(digits.shape[1], dtype=np.int64)
    power = np.zeros(digits.shape[1], dtype=np.int64)
    for q in range(n):
        target = (target << 2) | prod_letter[digits[q], b[q]]
        power += prod_pow[digits[q], b[q]]
    power %= 4
    sign = np.where(power == 1, 2, np.where(power == 3, -2, 0))
    return target, sign


def _to_index(letters: str) -> int:
    out = 0
    for c in letters:
        out = (out << 2) | LETTERS.index(c)
    return out


@njit(cache=True)
def _reduce_kernel(v, rows, pivots, count):
    # rows are fully reduced, so a single pass over the pivots suffices
    for k in range(count):
        c = v[pivots[k]]
        if c != 0:
            row = rows[k]
            for j in range(v.shape[0]):
                if row[j] != 0:
                    v[j] = (v[j] - c * row[j]) % _P


@njit(cache=True)
def _eliminate_kernel(rows, count, v, pivot):
    for k in range(count):
        c = rows[k, pivot]
        if c != 0:
            for j in range(v.shape[0]):
                if v[j] != 0:
                    rows[k, j] = (rows[k, j] - c * v[j]) % _P


class _DenseSpan:
    """Fully reduced echelon rows over GF(P); products stay below 2**62."""

    def __init__(self, width: int):
        self.rows = np.zeros((16, width), dtype=np.int64)
        self.pivots = np.zeros(16, dtype=np.int64)
        self.count = 0

    def __len__(self):
        return self.count

    def add(self, vec: np.ndarray) -> bool:
        v = vec % _P
        _reduce_kernel(v, self.rows, self.pivots, self.count)
        nz = np.flatnonzero(v)
        if nz.size == 0:
            return False
        pivot = int(nz[0])
        v = v * pow(int(v[pivot]), _P - 2, _P) % _P
        _eliminate_kernel(self.rows, self.count, v, pivot)
        if self.count == self.rows.shape[0]:
            self.rows = np.vstack([self.rows, np.zeros_like(self.rows)])
            self.pivots = np.concatenate([self.pivots, np.zeros_like(self.pivots)])
        self.rows[self.count] = v
        self.pivots[self.count] = pivot
        self.count += 1
        return True


def _dense_closure(n: int, gens: list[dict[str, float]], max_dim: int) -> list[dict[str, float]]:
    width = 4**n
    digits = _letter_digits(n)
    tables: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for g in gens:
        for lb in g:
            if lb not in tables:
                tables[lb] = _ad_table(n, lb, digits)

    def ad(vec: np.ndarray, g: dict[str, float], field: bool) -> np.ndarray:
        out = np.zeros(width, dtype=np.int64 if field else float)
        for lb, cb in g.items():
            target, sign = tables[lb]
            if field:
                coef = sign * _to_field(cb) % _P
                out[target] = (out[target] + coef * vec) % _P
            else:
                out[target] += sign * cb * vec
        return out

    span = _DenseSpan(width)
    floats: list[np.ndarray] = []
    fields: list[np.ndarray] = []

    def push_batch(fl_list, ex_list) -> list[int]:
        added = []
        for fl, ex in zip(fl_list, ex_list):
            if span.add(ex):
                floats.append(fl / np.abs(fl).max())
                fields.append(ex)
                added.append(len(floats) - 1)
                if len(floats) > max_dim:
                    raise CapacityError(f"Lie closure exceeds max_dim={max_dim}", partial=len(floats))
        return added

    queue: deque[int] = deque()
    init_fl, init_ex = [], []
    for g in gens:
        fl = np.zeros(width)
        ex = np.zeros(width, dtype=np.int64)
        for k, v in g.items():
            fl[_to_index(k)] = v
            ex[_to_index(k)] = _to_field(v)
        init_fl.append(fl)
        init_ex.append(ex)
    queue.extend(push_batch(init_fl, init_ex))
    while queue:
        i = queue.popleft()
        cand_fl = [ad(floats[i], g, False) for g in gens]
        cand_ex = [ad(fields[i], g, True) for g in gens]
        queue.extend(push_batch(cand_fl, cand_ex))
    names = ["".join(LETTERS[d] for d in col) for col in digits.T]
    return [{names[j]: float(b[j]) for j in np.flatnonzero(np.abs(b) > 0)} for b in floats]


def lie_closure(generators: Sequence[PauliSum], max_dim: int = 4096) -> list[PauliSum]:
    """Basis of the real Lie algebra generated by ``{i*G for G in generators}``.

    Elements are returned as Hermitian PauliSums ``H`` standing for ``i*H``,
    each scaled to unit largest coefficient.  The bracket used is
    ``-i[A, B]``, which maps Hermitian sums to Hermitian sums.  New elements
    are brackets of a generator with an existing element; right-nested
    brackets of generators span the whole algebra, so this is enough.
    Independence is decided exactly on the rational coefficients, reduced
    mod a prime.

    Raises:
        CapacityError: the closure grows past ``max_dim``; ``partial`` holds
            the dimension reached.
    """
    gens = list(generators)
    if not gens:
        return []
    n = gens[0].n
    for g in gens:
        if g.n != n:
            raise DimensionError("generators act on different qubit counts")
    terms = [_hermitian_terms(g) for g in gens]
    if n <= _DENSE_MAX_QUBITS:
        basis = _dense_closure(n, terms, max_dim)
    else:
        basis = _sparse_closure(terms, max_dim)
    return [PauliSum(n, b) for b in basis]


# ---------------------------------------------------------------------------
# ansatz designs and effective dimension
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnsatzDesign:
    generators: tuple[PauliSum, ...]
    label: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if self.label not in ("FG", "PG", "NG", "custom"):
            raise InputError(f"unknown design label {self.label!r}")
        if not self.generators:
            raise InputError("an ansatz design needs at least one generator")
        n = self.generators[0].n
        if any(g.n != n for g in self.generators):
            raise DimensionError("design generators act on different qubit counts")
        if self.label == "FG" and len(self.generators) != 2:
            raise InputError("FG design has exactly two generators {H_M, H_C}")
        if self.label == "NG" and any(len(g) != 1 for g in self.generators):
            raise InputError("NG generators must be single Pauli terms")

    @property
    def n(self) -> int:
        return self.generators[0].n


def x_mixer(n: int, types: str | None = None) -> PauliSum:
    types = types or "X" * n
    return PauliSum(n, {("I" * i + t + "I" * (n - i - 1)): 1.0 for i, t in enumerate(types)})


def fg_design(cost: PauliSum, mixer: PauliSum | None = None) -> AnsatzDesign:
    mixer = mixer if mixer is not None else x_mixer(cost.n)
    return AnsatzDesign((mixer, cost), "FG")


def ng_design(cost: PauliSum, mixer: PauliSum | None = None) -> AnsatzDesign:
    mixer = mixer if mixer is not None else x_mixer(cost.n)
    return AnsatzDesign(tuple(mixer.split()) + tuple(cost.split()), "NG")


def pg_design(cost: PauliSum, orbits: "OrbitPartition", mixer_type: str = "X") -> AnsatzDesign:
    """One mixer generator per vertex orbit and one cost generator per edge orbit.

    Cost terms on a single qubit (e.g. a transverse field) are grouped by the
    vertex orbit of that qubit.
    """
    n = cost.n
    gens = [
        PauliSum(n, {("I" * i + mixer_type + "I" * (n - i - 1)): 1.0 for i in orbit})
        for orbit in orbits.vertex_orbits
    ]
    edge_block = {e: k for k, orbit in enumerate(orbits.edge_orbits) for e in orbit}
    vertex_block = {v: k for k, orbit in enumerate(orbits.vertex_orbits) for v in orbit}
    edge_terms: dict[int, dict[str, complex]] = {}
    vertex_terms: dict[int, dict[str, complex]] = {}
    for letters, coeff in cost.items():
        support = tuple(i for i, c in enumerate(letters) if c != "I")
        if len(support) == 2 and support in edge_block:
            edge_terms.setdefault(edge_block[support], {})[letters] = coeff
        elif len(support) == 1:
            vertex_terms.setdefault(vertex_block[support[0]], {})[letters] = coeff
        else:
            raise InputError(f"cost term {letters} is not covered by the orbit partition")
    gens += [PauliSum(n, t) for _, t in sorted(edge_terms.items())]
    gens += [PauliSum(n, t) for _, t in sorted(vertex_terms.items())]
    return AnsatzDesign(tuple(gens), "PG")


def dla_dimension(design: AnsatzDesign, max_dim: int = 4096) -> int:
    return len(lie_closure(design.generators, max_dim))


def _check_state(psi0: np.ndarray, n: int) -> np.ndarray:
    psi0 = np.asarray(psi0, dtype=complex).reshape(-1)
    if psi0.shape[0] != 1 << n:
        raise DimensionError(f"state of length {psi0.shape[0]} for {n} qubits")
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-9:
        raise InputError("initial state must be normalized")
    return psi0


def effective_subspace(design: AnsatzDesign, psi0: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Orthonormal basis (columns) of the smallest generator-invariant subspace holding ``psi0``.

    New directions are orthogonalized twice against the accepted basis and
    dropped when their residual norm falls below ``tol`` relative to the
    norm of the candidate vector.
    """
    n = design.n
    if n > 14:
        raise CapacityError(f"effective dimension is limited to 14 qubits, got {n}")
    psi0 = _check_state(psi0, n)
    dim = 1 << n
    mats = [g.to_sparse() for g in design.generators]
    Q = np.zeros((dim, min(dim, 64)), dtype=complex)
    Q[:, 0] = psi0
    k = 1
    frontier = slice(0, 1)
    for _ in range(dim + 1):
        start = k
        for mat in mats:
            W = np.asarray(mat @ Q[:, frontier])
            ref = np.linalg.norm(W, axis=0)
            for _pass in range(2):
                W -= Q[:, :start] @ (Q[:, :start].conj().T @ W)
            for j in range(W.shape[1]):
                if ref[j] == 0.0:
                    continue
                v = W[:, j]
                for _pass in range(2):
                    if k > start:
                        block = Q[:, start:k]
                        v = v - block @ (block.conj().T @ v)
                norm = np.linalg.norm(v)
                if norm > tol * max(1.0, ref[j]):
                    if k == Q.shape[1]:
                        Q = np.concatenate([Q, np.zeros((dim, Q.shape[1]), dtype=complex)], axis=1)
                    Q[:, k] = v / norm
                    k += 1
                    if k > dim:
                        raise NumericError("invariant subspace exceeded the Hilbert space dimension")
        if k == start:
            return Q[:, :k].copy()
        frontier = slice(start, k)
    raise NumericError("effective dimension iteration did not reach a fixed point")


def effective_dimension(design: AnsatzDesign, psi0: np.ndarray, tol: float = 1e-8) -> int:
    return effective_subspace(design, psi0, tol).shape[1]


def ground_state_in_subspace(
    basis: np.ndarray, hamiltonian: PauliSum, tol: float = 1e-8
) -> bool:
    """Whether some ground state of ``hamiltonian`` lies inside span(``basis``)."""
    if hamiltonian.is_diagonal():
        diag = hamiltonian.diagonal().real
        e0 = diag.min()
        idx = np.flatnonzero(diag <= e0 + tol)
        ground = np.zeros((diag.shape[0], idx.size), dtype=complex)
        ground[idx, np.arange(idx.size)] = 1.0
    else:
        vals, vecs = np.linalg.eigh(hamiltonian.to_dense())
        ground = vecs[:, vals <= vals[0] + tol]
    overlaps = np.linalg.svd(basis.conj().T @ ground, compute_uv=False)
    return bool(overlaps.max() >= 1.0 - 1e-6)


# ---------------------------------------------------------------------------
# permutation symmetry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrbitPartition:
    vertex_orbits: tuple[tuple[int, ...], ...]
    edge_orbits: tuple[tuple[tuple[int, int], ...], ...] = field(default=())

    @property
    def all_singletons(self) -> bool:
        return all(len(o) == 1 for o in self.vertex_orbits) and all(
            len(o) == 1 for o in self.edge_orbits
        )


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)

    def blocks(self):
        out: dict = {}
        for x in self.parent:
            out.setdefault(self.find(x), []).append(x)
        return tuple(sorted(tuple(sorted(b)) for b in out.values()))


class _AutomorphismSearch:
    def __init__(self, n: int, edges: Sequence[tuple[int, int, float]], decimals: int = 12):
        self.n = n
        self.w: dict[tuple[int, int], float] = {}
        self.adj: list[list[int]] = [[] for _ in range(n)]
        for i, j, wt in edges:
            key = round(float(wt), decimals)
            self.w[i, j] = self.w[j, i] = key
            self.adj[i].append(j)
            self.adj[j].append(i)
        self.profile = [tuple(sorted(self.w[v, u] for u in self.adj[v])) for v in range(n)]
        # visit high-degree, well-connected vertices first for early pruning
        order: list[int] = []
        seen = set()
        for root in sorted(range(n), key=lambda v: -len(self.adj[v])):
            if root in seen:
                continue
            queue = deque([root])
            seen.add(root)
            while queue:
                v = queue.popleft()
                order.append(v)
                for u in sorted(self.adj[v], key=lambda u: -len(self.adj[u])):
                    if u not in seen:
                        seen.add(u)
                        queue.append(u)
        self.order = order

    def _consistent(self, v: int, image: int, perm: dict[int, int]) -> bool:
        if self.profile[v] != self.profile[image]:
            return False
        for a, pa in perm.items():
            if self.w.get((v, a)) != self.w.get((image, pa)):
                return False
        return True

    def find(self, fixed: dict[int, int]) -> list[int] | None:
        perm: dict[int, int] = {}
        for v, img in fixed.items():
            if img in perm.values() or not self._consistent(v, img, perm):
                return None
            perm[v] = img
        rest = [v for v in self.order if v not in perm]
        used = set(perm.values())

        def extend(pos: int) -> bool:
            if pos == len(rest):
                return True
            v = rest[pos]
            for img in range(self.n):
                if img in used or not self._consistent(v, img, perm):
                    continue
                perm[v] = img
                used.add(img)
                if extend(pos + 1):
                    return True
                del perm[v]
                used.discard(img)
            return False

        if not extend(0):
            return None
        return [perm[v] for v in range(self.n)]


def automorphism_orbits(graph, max_n: int = 10) -> OrbitPartition:
    """Vertex and edge orbits under the weight-preserving automorphism group.

    ``graph`` needs ``n`` and ``edges`` as ``(i, j, w)`` triples.  The search
    is exhaustive backtracking, pruned by incident-weight profiles.
    """
    n = graph.n
    if n > max_n:
        raise CapacityError(f"automorphism search is limited to {max_n} vertices, got {n}")
    edges = [(min(i, j), max(i, j), w) for i, j, w in graph.edges]
    search = _AutomorphismSearch(n, edges)
    vuf = _UnionFind(range(n))
    euf = _UnionFind([(i, j) for i, j, _ in edges])

    def absorb(perm: list[int]):
        for v in range(n):
            vuf.union(v, perm[v])
        for i, j, _ in edges:
            a, b = perm[i], perm[j]
            euf.union((i, j), (min(a, b), max(a, b)))

    for u, v in itertools.combinations(range(n), 2):
        if vuf.find(u) == vuf.find(v):
            continue
        perm = search.find({u: v})
        if perm is not None:
            absorb(perm)
    keys = [(i, j) for i, j, _ in edges]
    for e, f in itertools.combinations(keys, 2):
        if euf.find(e) == euf.find(f):
            continue
        for target in (f, f[::-1]):
            perm = search.find({e[0]: target[0], e[1]: target[1]})
            if perm is not None:
                absorb(perm)
                break
    return OrbitPartition(vuf.blocks(), euf.blocks() if keys else ())
