"""Oracle-aided public-key quantum money: interface and three toy schemes.

All schemes verify with classical oracle queries and projective note
measurements, so valid notes are perfectly correct and perfectly reusable.

hash-tag     banknote = |R(s||1) ... R(s||m)> (classical basis state).
conjugate    qubit i prepared in basis R(s||i||0) holding bit R(s||i||1).
counterexample  wraps conjugate: mint makes one quantum query on a uniform
             serial superposition, measures the serial s, and attaches the
             bit R(s) to an inner conjugate banknote; verification checks
             h = R(s) plus the inner checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .hilbert import DensityOp, RegisterLayout
from .oracle import ORACLE_L_CAP, OracleError, TruthTable, sample_oracle
from .synth import VerifierSpec, embed_unitary

_H = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2)
_CH = np.eye(4, dtype=np.complex128)
_CH[2:, 2:] = _H  # controlled-H, control qubit first


class MoneyError(ValueError):
    pass


@dataclass(frozen=True)
class SchemeProfile:
    name: str
    l: int
    m: int
    q: int
    q_prime: int
    mint_query_mode: str

    def __post_init__(self):
        if self.l > ORACLE_L_CAP:
            raise MoneyError(f"l = {self.l} exceeds cap {ORACLE_L_CAP}")
        if self.q < 0 or self.q_prime < 0:
            raise MoneyError("query counts must be non-negative")


@dataclass(frozen=True)
class KeyPair:
    sk: str
    pk: str


@dataclass(frozen=True)
class Banknote:
    serial: tuple
    state: DensityOp

    def to_json(self) -> str:
        mat = self.state.matrix
        return json.dumps({
            "serial": list(self.serial),
            "matrix": [[float(z.real), float(z.imag)] for z in mat.reshape(-1)],
            "qubits": self.state.layout.total_qubits,
        })


class WorldHandle:
    """Routes oracle queries and instruments who asked what.

    sampled mode holds an explicit truth table; lazy mode samples each
    position on first use, which reproduces the purified oracle's statistics
    for the query patterns used here (the one quantum query any scheme makes
    is immediately followed by a measurement of its input register, so
    sampling it eagerly commutes with the rest of the run).
    """

    def __init__(self, kind: str, l: int, stream=None, table: TruthTable | None = None):
        if kind not in ("sampled", "lazy"):
            raise MoneyError(f"unknown world kind {kind!r}")
        self.kind = kind
        self.l = l
        if kind == "sampled":
            if table is None:
                if stream is None:
                    raise MoneyError("sampled world needs a table or a stream")
                table = sample_oracle(l, stream)
            self.table = table
            self.bits = None
        else:
            self.table = None
            self.bits = {}
            if stream is None:
                raise MoneyError("lazy world needs a stream")
            self.stream = stream
        self.dr = []                  # append-only classical query record
        self.classical_positions = {}  # caller -> set of positions
        self.quantum_positions = {}    # caller -> set of positions
        self.query_counts = {}

    def _bit(self, x: int) -> int:
        if not (0 <= x < (1 << self.l)):
            raise MoneyError(f"oracle position {x} out of range for l = {self.l}")
        if self.kind == "sampled":
            return self.table(x)
        if x not in self.bits:
            self.bits[x] = int(self.stream.integers(0, 2))
        return self.bits[x]

    def query(self, x: int, caller: str, quantum: bool = False) -> int:
        z = self._bit(x)
        self.query_counts[caller] = self.query_counts.get(caller, 0) + 1
        if quantum:
            self.quantum_positions.setdefault(caller, set()).add(x)
        else:
            self.dr.append((x, z))
            self.classical_positions.setdefault(caller, set()).add(x)
        return z

    def positions_touched_by(self, *callers) -> set:
        out = set()
        for c in callers:
            out |= self.classical_positions.get(c, set())
            out |= self.quantum_positions.get(c, set())
        return out


def _measure_qubit(rho: np.ndarray, n: int, qubit: int, proj: np.ndarray, rng):
    """Projective binary measurement {proj, 1-proj} of one qubit of rho."""
    p_full = embed_unitary(proj, [qubit], n)
    p1 = float(np.trace(p_full @ rho).real)
    p1 = min(max(p1, 0.0), 1.0)
    hit = 1 if rng.random() < p1 else 0
    if hit:
        rho2 = p_full @ rho @ p_full
        rho2 = rho2 / p1
    else:
        q_full = np.eye(1 << n) - p_full
        rho2 = q_full @ rho @ q_full
        rho2 = rho2 / max(1.0 - p1, 1e-300)
    return hit, rho2


def _basis_proj(bit: int) -> np.ndarray:
    p = np.zeros((2, 2), dtype=np.complex128)
    p[bit, bit] = 1.0
    return p


def _conjugate_proj(basis: int, bit: int) -> np.ndarray:
    vec = np.zeros(2, dtype=np.complex128)
    vec[bit] = 1.0
    if basis:
        vec = _H @ vec
    return np.outer(vec, vec.conj())


def _flip_ans_perm(n: int, ans_qubit: int, pred) -> np.ndarray:
    """Permutation flipping the answer qubit where pred(basis index) holds."""
    dim = 1 << n
    shift = n - 1 - ans_qubit
    u = np.zeros((dim, dim), dtype=np.complex128)
    for src in range(dim):
        dst = src ^ (1 << shift) if pred(src) else src
        u[dst, src] = 1.0
    return u


def _qbit(idx: int, n: int, q: int) -> int:
    return (idx >> (n - 1 - q)) & 1


class MoneyScheme:
    profile: SchemeProfile

    def key_gen(self, world: WorldHandle, stream) -> KeyPair:
        return KeyPair(sk="", pk="")

    def note_layout(self) -> RegisterLayout:
        return RegisterLayout((("M", self.profile.m),))

    def verify_positions(self, serial) -> list:
        raise NotImplementedError

    def mint(self, sk, world, stream) -> Banknote:
        raise NotImplementedError

    def verify(self, pk, note: Banknote, world: WorldHandle, stream):
        raise NotImplementedError

    def sim_verifier(self, pk, serial, d: dict) -> VerifierSpec:
        raise NotImplementedError


class HashTagScheme(MoneyScheme):
    """Classical banknote: the oracle's bits at m serial-derived points."""

    def __init__(self, l: int = 6, m: int = 2):
        tag_bits = max(1, math.ceil(math.log2(m))) if m > 1 else 1
        s_bits = l - tag_bits
        if s_bits < 1 or m > (1 << tag_bits):
            raise MoneyError("l too small for the requested m")
        self.tag_bits = tag_bits
        self.s_bits = s_bits
        self.profile = SchemeProfile("hash-tag", l, m, q=m, q_prime=m,
                                     mint_query_mode="classical")

    def _pos(self, s: int, i: int) -> int:
        return (s << self.tag_bits) | i

    def verify_positions(self, serial) -> list:
        (s,) = serial
        return [self._pos(s, i) for i in range(self.profile.m)]

    def mint(self, sk, world, stream) -> Banknote:
        s = int(stream.integers(0, 1 << self.s_bits))
        bits = [world.query(self._pos(s, i), "mint") for i in range(self.profile.m)]
        idx = 0
        for b in bits:
            idx = (idx << 1) | b
        dim = 1 << self.profile.m
        mat = np.zeros((dim, dim), dtype=np.complex128)
        mat[idx, idx] = 1.0
        return Banknote(serial=(s,), state=DensityOp(self.note_layout(), mat))

    def verify(self, pk, note: Banknote, world: WorldHandle, stream):
        (s,) = note.serial
        m = self.profile.m
        rho = note.state.matrix
        ok = True
        for i in range(m):
            z = world.query(self._pos(s, i), "ver")
            hit, rho = _measure_qubit(rho, m, i, _basis_proj(z), stream)
            ok = ok and bool(hit)
        return ok, Banknote(note.serial, DensityOp(self.note_layout(), rho))

    def sim_verifier(self, pk, serial, d: dict) -> VerifierSpec:
        (s,) = serial
        m = self.profile.m
        known = {}
        unknown = []
        for i in range(m):
            pos = self._pos(s, i)
            if pos in d:
                known[i] = d[pos]
            else:
                unknown.append(i)
        u_cnt = len(unknown)
        n = m + u_cnt + 1
        anc_of = {i: m + j for j, i in enumerate(unknown)}
        v = np.eye(1 << n, dtype=np.complex128)
        for i in unknown:
            v = embed_unitary(_H, [anc_of[i]], n) @ v

        def pred(idx):
            for i in range(m):
                want = known[i] if i in known else _qbit(idx, n, anc_of[i])
                if _qbit(idx, n, i) != want:
                    return False
            return True

        v = _flip_ans_perm(n, n - 1, pred) @ v
        return VerifierSpec(m=m, k=u_cnt + 1, v_hat=v, ans_index=n - 1)


class ConjugateScheme(MoneyScheme):
    """Conjugate-coding banknote: oracle-derived bases and bits per qubit."""

    def __init__(self, l: int = 6, m: int = 2):
        tag_bits = (max(1, math.ceil(math.log2(m))) if m > 1 else 1) + 1
        s_bits = l - tag_bits
        if s_bits < 1 or m > (1 << (tag_bits - 1)):
            raise MoneyError("l too small for the requested m")
        self.tag_bits = tag_bits
        self.s_bits = s_bits
        self.profile = SchemeProfile("conjugate", l, m, q=2 * m, q_prime=2 * m,
                                     mint_query_mode="classical")

    def _pos(self, s: int, i: int, b: int) -> int:
        return (s << self.tag_bits) | (i << 1) | b

    def verify_positions(self, serial) -> list:
        (s,) = serial
        return [self._pos(s, i, b) for i in range(self.profile.m) for b in (0, 1)]

    def mint(self, sk, world, stream) -> Banknote:
        s = int(stream.integers(0, 1 << self.s_bits))
        mat = np.array([[1.0]], dtype=np.complex128)
        for i in range(self.profile.m):
            basis = world.query(self._pos(s, i, 0), "mint")
            bit = world.query(self._pos(s, i, 1), "mint")
            mat = np.kron(mat, _conjugate_proj(basis, bit))
        return Banknote(serial=(s,), state=DensityOp(self.note_layout(), mat))

    def verify(self, pk, note: Banknote, world: WorldHandle, stream):
        (s,) = note.serial
        m = self.profile.m
        rho = note.state.matrix
        ok = True
        for i in range(m):
            basis = world.query(self._pos(s, i, 0), "ver")
            bit = world.query(self._pos(s, i, 1), "ver")
            hit, rho = _measure_qubit(rho, m, i, _conjugate_proj(basis, bit), stream)
            ok = ok and bool(hit)
        return ok, Banknote(note.serial, DensityOp(self.note_layout(), rho))

    def sim_verifier(self, pk, serial, d: dict) -> VerifierSpec:
        (s,) = serial
        m = self.profile.m
        anc = []
        basis_src = {}
        bit_src = {}
        for i in range(m):
            pb = self._pos(s, i, 0)
            pv = self._pos(s, i, 1)
            basis_src[i] = ("known", d[pb]) if pb in d else ("anc", len(anc))
            if pb not in d:
                anc.append(("basis", i))
            bit_src[i] = ("known", d[pv]) if pv in d else ("anc", len(anc))
            if pv not in d:
                anc.append(("bit", i))
        n = m + len(anc) + 1
        v = np.eye(1 << n, dtype=np.complex128)
        for j in range(len(anc)):
            v = embed_unitary(_H, [m + j], n) @ v
        for i in range(m):
            kind, val = basis_src[i]
            if kind == "known":
                if val == 1:
                    v = embed_unitary(_H, [i], n) @ v
            else:
                v = embed_unitary(_CH, [m + val, i], n) @ v

        def pred(idx):
            for i in range(m):
                kind, val = bit_src[i]
                want = val if kind == "known" else _qbit(idx, n, m + val)
                if _qbit(idx, n, i) != want:
                    return False
            return True

        v = _flip_ans_perm(n, n - 1, pred) @ v
        return VerifierSpec(m=m, k=len(anc) + 1, v_hat=v, ans_index=n - 1)


class CounterexampleScheme(MoneyScheme):
    """Quantum-mint wrapper: serial from a measured quantum query, note
    carries the bit R(s) plus an inner conjugate banknote."""

    def __init__(self, l: int = 6, m: int = 2):
        inner_tags = 2 * m
        tag_bits = math.ceil(math.log2(inner_tags + 1))
        s_bits = l - tag_bits
        if s_bits < 1:
            raise MoneyError("l too small for the requested m")
        self.tag_bits = tag_bits
        self.s_bits = s_bits
        self.inner_m = m
        self.profile = SchemeProfile("counterexample", l, m + 1,
                                     q=1 + 2 * m, q_prime=1 + 2 * m,
                                     mint_query_mode="quantum")

    def _wrap_pos(self, s: int) -> int:
        return s << self.tag_bits

    def _inner_pos(self, s: int, i: int, b: int) -> int:
        return (s << self.tag_bits) | (1 + (i << 1) + b)

    def verify_positions(self, serial) -> list:
        s, s_inner = serial
        out = [self._wrap_pos(s)]
        out += [self._inner_pos(s_inner, i, b)
                for i in range(self.inner_m) for b in (0, 1)]
        return out

    def mint(self, sk, world, stream) -> Banknote:
        # one quantum query on the uniform serial superposition, then the
        # serial register is measured; sampling s first is equivalent
        s = int(stream.integers(0, 1 << self.s_bits))
        h = world.query(self._wrap_pos(s), "mint", quantum=True)
        s_inner = int(stream.integers(0, 1 << self.s_bits))
        inner_mat = np.array([[1.0]], dtype=np.complex128)
        for i in range(self.inner_m):
            basis = world.query(self._inner_pos(s_inner, i, 0), "mint")
            bit = world.query(self._inner_pos(s_inner, i, 1), "mint")
            inner_mat = np.kron(inner_mat, _conjugate_proj(basis, bit))
        h_mat = np.zeros((2, 2), dtype=np.complex128)
        h_mat[h, h] = 1.0
        mat = np.kron(h_mat, inner_mat)
        return Banknote(serial=(s, s_inner),
                        state=DensityOp(self.note_layout(), mat))

    def verify(self, pk, note: Banknote, world: WorldHandle, stream):
        s, s_inner = note.serial
        n = self.profile.m
        rho = note.state.matrix
        want_h = world.query(self._wrap_pos(s), "ver")
        hit, rho = _measure_qubit(rho, n, 0, _basis_proj(want_h), stream)
        ok = bool(hit)
        for i in range(self.inner_m):
            basis = world.query(self._inner_pos(s_inner, i, 0), "ver")
            bit = world.query(self._inner_pos(s_inner, i, 1), "ver")
            hit, rho = _measure_qubit(rho, n, 1 + i,
                                      _conjugate_proj(basis, bit), stream)
            ok = ok and bool(hit)
        return ok, Banknote(note.serial, DensityOp(self.note_layout(), rho))

    def sim_verifier(self, pk, serial, d: dict) -> VerifierSpec:
        s, s_inner = serial
        m = self.profile.m  # note qubits: h at 0, inner at 1..m-1
        anc = []
        wrap_pos = self._wrap_pos(s)
        h_src = ("known", d[wrap_pos]) if wrap_pos in d else ("anc", len(anc))
        if wrap_pos not in d:
            anc.append(("h", 0))
        basis_src = {}
        bit_src = {}
        for i in range(self.inner_m):
            pb = self._inner_pos(s_inner, i, 0)
            pv = self._inner_pos(s_inner, i, 1)
            basis_src[i] = ("known", d[pb]) if pb in d else ("anc", len(anc))
            if pb not in d:
                anc.append(("basis", i))
            bit_src[i] = ("known", d[pv]) if pv in d else ("anc", len(anc))
            if pv not in d:
                anc.append(("bit", i))
        n = m + len(anc) + 1
        v = np.eye(1 << n, dtype=np.complex128)
        for j in range(len(anc)):
            v = embed_unitary(_H, [m + j], n) @ v
        for i in range(self.inner_m):
            kind, val = basis_src[i]
            if kind == "known":
                if val == 1:
                    v = embed_unitary(_H, [1 + i], n) @ v
            else:
                v = embed_unitary(_CH, [m + val, 1 + i], n) @ v

        def pred(idx):
            kind, val = h_src
            want = val if kind == "known" else _qbit(idx, n, m + val)
            if _qbit(idx, n, 0) != want:
                return False
            for i in range(self.inner_m):
                kind, val = bit_src[i]
                want = val if kind == "known" else _qbit(idx, n, m + val)
                if _qbit(idx, n, 1 + i) != want:
                    return False
            return True

        v = _flip_ans_perm(n, n - 1, pred) @ v
        return VerifierSpec(m=m, k=len(anc) + 1, v_hat=v, ans_index=n - 1)


SCHEMES = {
    "hash-tag": HashTagScheme,
    "conjugate": ConjugateScheme,
    "counterexample": CounterexampleScheme,
}


def make_scheme(name: str, l: int = 6, m: int = 2) -> MoneyScheme:
    if name not in SCHEMES:
        raise MoneyError(f"unknown scheme {name!r}")
    return SCHEMES[name](l=l, m=m)


def reuse_loop(scheme: MoneyScheme, pk, note: Banknote, world: WorldHandle,
               count: int, stream) -> list:
    if count < 1:
        raise MoneyError("count must be >= 1")
    accepts = []
    for _ in range(count):
        ok, note = scheme.verify(pk, note, world, stream)
        accepts.append(bool(ok))
    return accepts
