"""Dense state-vector simulation over named qubit registers.

Index arithmetic is big-endian over the declared register order: the first
register holds the most significant bits of the computational-basis index,
and the first qubit inside a register is that register's most significant
bit.  This ordering is the single source of truth; every operation that
touches a subset of registers embeds itself by name.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

STRUCT_TOL = 1e-9    # structural invariants: norms, hermiticity, idempotence
UNITARY_TOL = 1e-6   # admission threshold for user-supplied unitaries


def qubit_cap() -> int:
    return int(os.environ.get("QMSEP_QUBIT_CAP", "22"))


class HilbertError(ValueError):
    pass


@dataclass(frozen=True)
class RegisterLayout:
    registers: tuple

    def __post_init__(self):
        regs = tuple((str(n), int(w)) for n, w in self.registers)
        object.__setattr__(self, "registers", regs)
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            raise HilbertError(f"duplicate register names in {names}")
        if any(w < 1 for _, w in regs):
            raise HilbertError("register widths must be >= 1")
        if self.total_qubits > qubit_cap():
            raise HilbertError(
                f"layout needs {self.total_qubits} qubits, cap is {qubit_cap()}")

    @property
    def total_qubits(self) -> int:
        return sum(w for _, w in self.registers)

    @property
    def dim(self) -> int:
        return 1 << self.total_qubits

    @property
    def names(self):
        return tuple(n for n, _ in self.registers)

    def width(self, name: str) -> int:
        for n, w in self.registers:
            if n == name:
                return w
        raise HilbertError(f"unknown register {name!r}")

    def axes(self, names) -> list:
        """Global qubit axes occupied by the named registers, in order."""
        if isinstance(names, str):
            names = [names]
        offsets = {}
        pos = 0
        for n, w in self.registers:
            offsets[n] = (pos, w)
            pos += w
        out = []
        for name in names:
            if name not in offsets:
                raise HilbertError(f"unknown register {name!r}")
            o, w = offsets[name]
            out.extend(range(o, o + w))
        return out

    def subdim(self, names) -> int:
        return 1 << len(self.axes(names))


@dataclass(frozen=True)
class QState:
    layout: RegisterLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.layout.dim,):
            raise HilbertError(
                f"amplitude vector has shape {amps.shape}, layout dim {self.layout.dim}")
        object.__setattr__(self, "amplitudes", amps)

    def check_norm(self) -> "QState":
        n2 = float(np.vdot(self.amplitudes, self.amplitudes).real)
        if abs(n2 - 1.0) > STRUCT_TOL:
            raise HilbertError(f"state norm^2 = {n2}, not 1 within {STRUCT_TOL}")
        return self

    def density(self) -> "DensityOp":
        a = self.amplitudes
        return DensityOp(self.layout, np.outer(a, a.conj()))


@dataclass(frozen=True)
class DensityOp:
    layout: RegisterLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        d = self.layout.dim
        if m.shape != (d, d):
            raise HilbertError(f"density matrix shape {m.shape}, expected {(d, d)}")
        object.__setattr__(self, "matrix", m)

    def check(self) -> "DensityOp":
        m = self.matrix
        if np.abs(m - m.conj().T).max() > STRUCT_TOL:
            raise HilbertError("density matrix not Hermitian")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > STRUCT_TOL:
            raise HilbertError(f"density matrix trace {tr}, not 1")
        w = np.linalg.eigvalsh(m)
        if w.min() < -STRUCT_TOL:
            raise HilbertError(f"density matrix has eigenvalue {w.min()} < 0")
        return self


@dataclass(frozen=True)
class Projector:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise HilbertError("projector must be square")
        if np.abs(m - m.conj().T).max() > STRUCT_TOL:
            raise HilbertError("projector not Hermitian")
        if np.abs(m @ m - m).max() > STRUCT_TOL:
            raise HilbertError("projector not idempotent")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def complement(self) -> "Projector":
        return Projector(np.eye(self.dim) - self.matrix)


def _apply_matrix(amps: np.ndarray, layout: RegisterLayout, mat: np.ndarray,
                  targets) -> np.ndarray:
    """Apply mat to the named target registers, identity elsewhere."""
    axes = layout.axes(targets)
    n = layout.total_qubits
    t = len(axes)
    if mat.shape != (1 << t, 1 << t):
        raise HilbertError(
            f"matrix dim {mat.shape[0]} does not match target width {t} qubits")
    tensor = amps.reshape((2,) * n)
    tensor = np.moveaxis(tensor, axes, range(t))
    flat = tensor.reshape(1 << t, -1)
    flat = mat @ flat
    tensor = flat.reshape((2,) * n)
    tensor = np.moveaxis(tensor, range(t), axes)
    return tensor.reshape(-1)


def apply_on(state: QState, u: np.ndarray, targets) -> QState:
    u = np.asarray(u, dtype=np.complex128)
    d = u.shape[0]
    if np.abs(u.conj().T @ u - np.eye(d)).max() > UNITARY_TOL:
        raise HilbertError("matrix is not unitary within tolerance")
    out = _apply_matrix(state.amplitudes, state.layout, u, targets)
    return QState(state.layout, out).check_norm()


def apply_projector(state: QState, pi: Projector, targets=None) -> np.ndarray:
    """Pi|psi> as a raw (unnormalized) amplitude vector."""
    if targets is None:
        if pi.dim != state.layout.dim:
            raise HilbertError("projector dimension mismatch")
        return pi.matrix @ state.amplitudes
    return _apply_matrix(state.amplitudes, state.layout, pi.matrix, targets)


def max_entangled(dim_per_side: int, names=("M", "Aux")) -> QState:
    m = int(dim_per_side).bit_length() - 1
    if dim_per_side < 2 or (1 << m) != dim_per_side:
        raise HilbertError(f"dim_per_side {dim_per_side} is not a power of two >= 2")
    layout = RegisterLayout(((names[0], m), (names[1], m)))
    amps = np.zeros(layout.dim, dtype=np.complex128)
    for i in range(dim_per_side):
        amps[i * dim_per_side + i] = 1.0
    amps /= np.sqrt(dim_per_side)
    return QState(layout, amps)


def partial_trace(state, keep) -> DensityOp:
    if isinstance(keep, str):
        keep = [keep]
    layout = state.layout
    keep_axes = layout.axes(keep)
    n = layout.total_qubits
    other_axes = [a for a in range(n) if a not in keep_axes]
    dk = 1 << len(keep_axes)
    dt = 1 << len(other_axes)
    widths = dict(layout.registers)
    sub = RegisterLayout(tuple((nm, widths[nm]) for nm in keep))
    if isinstance(state, QState):
        tensor = state.amplitudes.reshape((2,) * n)
        tensor = np.moveaxis(tensor, keep_axes, range(len(keep_axes)))
        mat = tensor.reshape(dk, dt)
        rho = mat @ mat.conj().T
    else:
        perm = keep_axes + other_axes
        tensor = state.matrix.reshape((2,) * (2 * n))
        tensor = tensor.transpose(perm + [n + p for p in perm])
        tensor = tensor.reshape(dk, dt, dk, dt)
        rho = np.einsum("itjt->ij", tensor)
    return DensityOp(sub, rho)


def measure_projective(state: QState, pi: Projector, rng, targets=None):
    """Measure {Pi, I-Pi}; returns (outcome, post_state, prob_one)."""
    proj = apply_projector(state, pi, targets)
    prob_one = float(np.vdot(proj, proj).real)
    prob_one = min(max(prob_one, 0.0), 1.0)
    outcome = 1 if rng.random() < prob_one else 0
    if outcome == 1:
        post = proj / np.sqrt(prob_one)
    else:
        rest = state.amplitudes - proj
        post = rest / np.sqrt(max(1.0 - prob_one, 0.0))
    return outcome, QState(state.layout, post), prob_one


def measure_coherently(state: QState, pi: Projector, outcome_register: str,
                       targets=None) -> QState:
    """Pi (x) X + (I-Pi) (x) I onto a fresh |0> outcome qubit."""
    layout = state.layout
    if layout.width(outcome_register) != 1:
        raise HilbertError("outcome register must be a single qubit")
    n = layout.total_qubits
    axis = layout.axes(outcome_register)[0]
    tensor = state.amplitudes.reshape((2,) * n)
    tensor = np.moveaxis(tensor, axis, n - 1)
    if np.abs(tensor[..., 1]).max() > STRUCT_TOL:
        raise HilbertError("outcome qubit is not fresh |0>")
    flat0 = np.moveaxis(tensor, n - 1, axis).reshape(-1)
    if targets is None:
        tnames = [nm for nm, _ in layout.registers if nm != outcome_register]
    else:
        tnames = targets
    proj = _apply_matrix(flat0, layout, pi.matrix, tnames)
    rest = flat0 - proj
    # outcome qubit: Pi branch flips to |1>, complement stays |0>
    pt = np.moveaxis(proj.reshape((2,) * n), axis, n - 1)
    rt = np.moveaxis(rest.reshape((2,) * n), axis, n - 1)
    out = np.empty_like(pt)
    out[..., 1] = pt[..., 0]
    out[..., 0] = rt[..., 0]
    out = np.moveaxis(out, n - 1, axis).reshape(-1)
    return QState(layout, out).check_norm()


def trace_distance(a: DensityOp, b: DensityOp) -> float:
    if a.matrix.shape != b.matrix.shape:
        raise HilbertError("trace_distance: dimension mismatch")
    sv = np.linalg.svd(a.matrix - b.matrix, compute_uv=False)
    return float(0.5 * sv.sum())


def haar_unitary(dim: int, rng) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
