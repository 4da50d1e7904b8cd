"""Density matrices and Kraus-form quantum operations."""

import hashlib

import numpy as np

from .config import DEFAULT_TOLERANCES as TOL

MAX_DIM = 64

KINDS = ("unitary", "measurement-branch", "general")


class QuantumError(ValueError):
    """Raised for invalid states, operations or impossible branches."""


def _as_matrix(data, dim=None):
    m = np.array(data, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise QuantumError(f"expected a square matrix, got shape {m.shape}")
    if dim is not None and m.shape[0] != dim:
        raise QuantumError(f"dimension mismatch: {m.shape[0]} != {dim}")
    if m.shape[0] > MAX_DIM or m.shape[0] < 1:
        raise QuantumError(f"dimension {m.shape[0]} outside 1..{MAX_DIM}")
    m.setflags(write=False)
    return m


class DensityMatrix:
    """A possibly unnormalised density operator.

    ``weight`` is the trace, which drops below one after a measurement
    branch is applied.
    """

    __slots__ = ("entries", "_fp")

    def __init__(self, entries, check=True, tol=TOL):
        self.entries = _as_matrix(entries)
        self._fp = None
        if check:
            self.validate(tol)

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def weight(self):
        return float(np.real(np.trace(self.entries)))

    def validate(self, tol=TOL):
        m = self.entries
        if np.max(np.abs(m - m.conj().T)) > tol.exact:
            raise QuantumError("state is not Hermitian")
        hermitian = (m + m.conj().T) / 2
        if np.linalg.eigvalsh(hermitian).min() < -tol.validate:
            raise QuantumError("state is not positive semidefinite")
        w = self.weight
        if not (w > 0 and w <= 1 + tol.exact):
            raise QuantumError(f"state trace {w} outside (0, 1]")

    def normalized(self):
        return DensityMatrix(self.entries / self.weight, check=False)

    def fingerprint(self, digits=9):
        """Stable short digest of the entries rounded to ``digits`` places."""
        if self._fp is None:
            r = np.round(self.entries, digits) + 0.0  # folds -0.0 into 0.0
            parts = np.concatenate([r.real.ravel(), r.imag.ravel()]) + 0.0
            h = hashlib.sha1(np.ascontiguousarray(parts).tobytes())
            h.update(str(self.dim).encode())
            self._fp = h.hexdigest()[:16]
        return self._fp

    def __eq__(self, other):
        return (isinstance(other, DensityMatrix) and other.dim == self.dim
                and np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim}, weight={self.weight:.6g})"

    def to_list(self):
        return [[[float(z.real), float(z.imag)] for z in row] for row in self.entries]


def basis_state(dim, index=0):
    m = np.zeros((dim, dim), dtype=complex)
    m[index, index] = 1.0
    return DensityMatrix(m)


def maximally_mixed(dim):
    return DensityMatrix(np.eye(dim, dtype=complex) / dim)


class SuperOp:
    """A trace-nonincreasing quantum operation in Kraus form.

    :param name: operation name
    :param kraus: non-empty list of square matrices of equal dimension
    :param kind: one of ``unitary``, ``measurement-branch`` or ``general``
    :param reverse: optional explicit reverse operation used in inverse mode
    """

    __slots__ = ("name", "kraus", "kind", "reverse")

    def __init__(self, name, kraus, kind="general", reverse=None, tol=TOL):
        if kind not in KINDS:
            raise QuantumError(f"unknown operation kind {kind!r}")
        if len(kraus) == 0:
            raise QuantumError("Kraus list must be non-empty")
        mats = [_as_matrix(k) for k in kraus]
        dim = mats[0].shape[0]
        for k in mats:
            if k.shape[0] != dim:
                raise QuantumError("Kraus operators of differing dimension")
        self.name = name
        self.kraus = tuple(mats)
        self.kind = kind
        self.reverse = reverse
        if reverse is not None and reverse.dim != dim:
            raise QuantumError("reverse operation has a different dimension")
        if kind == "unitary" and len(mats) != 1:
            raise QuantumError("unitary operations take exactly one Kraus matrix")
        if not kraus_valid(mats, trace_preserving=(kind == "unitary"), threshold=tol.validate):
            raise QuantumError(f"Kraus set of {name!r} violates completeness")

    @property
    def dim(self):
        return self.kraus[0].shape[0]

    def __repr__(self):
        return f"SuperOp({self.name!r}, kind={self.kind}, kraus={len(self.kraus)})"


def kraus_deviation(kraus):
    """Return ``sum M^dagger M - I`` for a Kraus list."""
    dim = kraus[0].shape[0]
    total = sum(np.asarray(k).conj().T @ np.asarray(k) for k in kraus)
    return total - np.eye(dim)


def kraus_valid(kraus, trace_preserving, threshold=TOL.kraus_reject):
    """Completeness check on a Kraus set.

    Trace-preserving sets must satisfy ``||sum M^dagger M - I|| <= threshold``
    (spectral norm); otherwise the sum must be below the identity, i.e. the
    largest eigenvalue of the deviation is at most ``threshold``.
    """
    dev = kraus_deviation(kraus)
    if trace_preserving:
        return float(np.linalg.norm(dev, 2)) <= threshold
    herm = (dev + dev.conj().T) / 2
    return float(np.linalg.eigvalsh(herm).max()) <= threshold


def apply(op, rho, tol=TOL):
    if op.dim != rho.dim:
        raise QuantumError(f"dimension mismatch: op {op.dim} vs state {rho.dim}")
    r = rho.entries
    out = sum(k @ r @ k.conj().T for k in op.kraus)
    out = (out + out.conj().T) / 2
    if np.real(np.trace(out)) < tol.min_trace:
        raise QuantumError(f"impossible branch: {op.name!r} yields trace below {tol.min_trace}")
    return DensityMatrix(out, check=False)


def adjoint_op(op):
    if op.kind != "unitary":
        raise QuantumError(f"{op.name!r} is not unitary; no adjoint reverse")
    return SuperOp(op.name + "^dag", [op.kraus[0].conj().T], kind="unitary")


def inverse_of(op):
    if op.reverse is not None:
        return op.reverse
    if op.kind == "unitary":
        return adjoint_op(op)
    raise QuantumError(f"no reverse operation declared for {op.name!r}")


def reverse_apply(op, key, ledger, rho, mode="snapshot"):
    """Undo ``op`` (the history with ``key``).

    In snapshot mode ``ledger`` maps keys to recorded pre-states and the
    recorded state is returned. In inverse mode the reverse operation is
    applied to ``rho``.
    """
    if mode == "snapshot":
        try:
            return ledger[key]
        except KeyError:
            raise QuantumError(f"no snapshot recorded for history key {key}") from None
    if mode == "inverse":
        return apply(inverse_of(op), rho)
    raise QuantumError(f"unknown reversal mode {mode!r}")


def tensor(rho1, rho2):
    return DensityMatrix(np.kron(rho1.entries, rho2.entries), check=False)


def trace_distance(rho1, rho2):
    if rho1.dim != rho2.dim:
        raise QuantumError(f"dimension mismatch: {rho1.dim} vs {rho2.dim}")
    diff = rho1.entries - rho2.entries
    diff = (diff + diff.conj().T) / 2
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


_S2 = 1 / np.sqrt(2)
NAMED_GATES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
    "H": np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    "CNOT": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
}


def named_gate(gate, name=None):
    try:
        m = NAMED_GATES[gate]
    except KeyError:
        raise QuantumError(f"unknown gate {gate!r}") from None
    return SuperOp(name or gate, [m], kind="unitary")


def identity_op(dim, name="I"):
    return SuperOp(name, [np.eye(dim, dtype=complex)], kind="unitary")


def projector_op(dim, index, name=None):
    p = np.zeros((dim, dim), dtype=complex)
    p[index, index] = 1.0
    return SuperOp(name or f"P{index}", [p], kind="measurement-branch")


def embed(op, position, n_qubits, name=None):
    """Lift a single-qubit unitary to ``n_qubits`` qubits at ``position``."""
    mats = [np.eye(2, dtype=complex)] * n_qubits
    out = []
    for k in op.kraus:
        mats = list(mats)
        mats[position] = k
        full = mats[0]
        for m in mats[1:]:
            full = np.kron(full, m)
        out.append(full)
    return SuperOp(name or op.name, out, kind=op.kind)


# random sampling -----------------------------------------------------------

def random_unitary(dim, rng):
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_density(dim, rng, rank=None):
    rank = rank or dim
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    m = g @ g.conj().T
    m = m / np.real(np.trace(m))
    return DensityMatrix((m + m.conj().T) / 2)


def random_kraus(dim, count, rng, trace_preserving=True):
    """Random Kraus set from a slice of a Haar-ish isometry."""
    u = random_unitary(dim * count, rng)
    mats = [u[i * dim:(i + 1) * dim, :dim] for i in range(count)]
    if not trace_preserving:
        scale = rng.uniform(0.3, 1.0)
        mats = [np.sqrt(scale) * m for m in mats]
    return mats


def random_superop(dim, rng, kind=None, name="op"):
    kind = kind or rng.choice(["unitary", "measurement-branch", "general"])
    if kind == "unitary":
        return SuperOp(name, [random_unitary(dim, rng)], kind="unitary")
    if kind == "measurement-branch":
        u = random_unitary(dim, rng)
        rank = int(rng.integers(1, dim + 1))
        proj = u[:, :rank] @ u[:, :rank].conj().T
        return SuperOp(name, [proj], kind="measurement-branch")
    count = int(rng.integers(1, 4))
    return SuperOp(name, random_kraus(dim, count, rng, trace_preserving=bool(rng.integers(0, 2))),
                   kind="general")
