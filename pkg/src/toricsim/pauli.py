"""Symplectic bit-mask algebra for n-qubit Pauli strings and real-linear
combinations of them.

Encoding
--------
A Pauli string on ``n`` qubits is stored as a pair of bit masks plus a
quarter-phase exponent:

    P = i**phase * L_{n-1} (x) ... (x) L_1 (x) L_0

where the letter on qubit ``j`` is read from bit ``j`` of the masks:

    (x_j, z_j) = (0, 0) -> I      (1, 0) -> X
                 (1, 1) -> Y      (0, 1) -> Z

Qubit 0 is the least-significant bit of a computational basis-state index,
and the *leftmost* letter of a text label such as ``"ZYII"`` is qubit 0
(ascending local indices left to right).  ``phase`` is defined modulo 4, so
the represented operator is one of ``+P, +iP, -P, -iP`` with ``P`` the
Hermitian tensor product of letters.

Products follow from the single-qubit table via Y = i X Z; the accumulated
quarter-phase of a product is

    phase(ab) = phase(a) + phase(b) + s(a) + s(b) - s(ab) + 2*|z_a & x_b|

with ``s(p) = |x_p & z_p|`` (number of Y letters) and ``|.|`` a popcount.
Two strings commute iff the symplectic form ``|x_a & z_b| + |z_a & x_b|``
is even; anticommuting strings satisfy [a, b] = 2ab.
"""

from __future__ import annotations

import json
from typing import Iterable, Iterator, Mapping

import numpy as np

# Hard ceiling for dense conversions: 2**12 x 2**12 complex entries.
DENSE_QUBIT_CAP = 12

# Coefficients with magnitude below this floor are dropped from sums.
PRUNE_TOL = 1e-12

_LETTERS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}
_MASKS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_PHASE_PREFIX = {0: "+", 1: "+i·", 2: "-", 3: "-i·"}

_SINGLE_DENSE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _popcount(mask: int) -> int:
    return bin(mask).count("1")


class PauliString:
    """One n-qubit Pauli string ``i**phase * (letter tensor product)``."""

    __slots__ = ("n_qubits", "x_mask", "z_mask", "phase_quarter")

    def __init__(self, n_qubits: int, x_mask: int, z_mask: int, phase_quarter: int = 0):
        if n_qubits < 1:
            raise ValueError(f"need at least one qubit, got {n_qubits}")
        full = (1 << n_qubits) - 1
        if x_mask & ~full or z_mask & ~full:
            raise ValueError("mask has bits beyond n_qubits")
        object.__setattr__(self, "n_qubits", n_qubits)
        object.__setattr__(self, "x_mask", x_mask)
        object.__setattr__(self, "z_mask", z_mask)
        object.__setattr__(self, "phase_quarter", phase_quarter % 4)

    def __setattr__(self, name, value):  # immutable: safe as a dict key
        raise AttributeError("PauliString is immutable")

    # -- constructors -------------------------------------------------

    @classmethod
    def identity(cls, n_qubits: int) -> "PauliString":
        return cls(n_qubits, 0, 0, 0)

    @classmethod
    def from_label(cls, label: str, phase_quarter: int = 0) -> "PauliString":
        """Parse ``"ZYII"`` or ``"+i·ZYII"`` (leftmost letter = qubit 0)."""
        text = label.strip()
        if text.startswith("+i·") or text.startswith("+i"):
            phase_quarter += 1
            text = text[3:] if text.startswith("+i·") else text[2:]
        elif text.startswith("-i·") or text.startswith("-i"):
            phase_quarter += 3
            text = text[3:] if text.startswith("-i·") else text[2:]
        elif text.startswith("+"):
            text = text[1:]
        elif text.startswith("-"):
            phase_quarter += 2
            text = text[1:]
        x = z = 0
        for j, letter in enumerate(text):
            try:
                xj, zj = _MASKS[letter]
            except KeyError:
                raise ValueError(f"unknown Pauli letter {letter!r} in {label!r}") from None
            x |= xj << j
            z |= zj << j
        return cls(len(text), x, z, phase_quarter)

    @classmethod
    def single(cls, n_qubits: int, qubit: int, letter: str) -> "PauliString":
        """One non-identity letter on ``qubit``, identity elsewhere."""
        if not 0 <= qubit < n_qubits:
            raise ValueError(f"qubit {qubit} outside register of {n_qubits}")
        xj, zj = _MASKS[letter]
        return cls(n_qubits, xj << qubit, zj << qubit)

    # -- inspection ---------------------------------------------------

    @property
    def weight(self) -> int:
        """Number of non-identity letters."""
        return _popcount(self.x_mask | self.z_mask)

    @property
    def support(self) -> tuple[int, ...]:
        mask = self.x_mask | self.z_mask
        return tuple(j for j in range(self.n_qubits) if (mask >> j) & 1)

    @property
    def is_hermitian(self) -> bool:
        return self.phase_quarter % 2 == 0

    def letter(self, qubit: int) -> str:
        return _LETTERS[((self.x_mask >> qubit) & 1, (self.z_mask >> qubit) & 1)]

    def label(self, with_phase: bool = True) -> str:
        letters = "".join(self.letter(j) for j in range(self.n_qubits))
        if not with_phase:
            return letters
        return _PHASE_PREFIX[self.phase_quarter] + letters

    def __repr__(self) -> str:
        return f"PauliString({self.label()!r})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliString):
            return NotImplemented
        return (self.n_qubits, self.x_mask, self.z_mask, self.phase_quarter) == (
            other.n_qubits, other.x_mask, other.z_mask, other.phase_quarter)

    def __hash__(self) -> int:
        return hash((self.n_qubits, self.x_mask, self.z_mask, self.phase_quarter))

    # -- algebra ------------------------------------------------------

    def canonical(self) -> tuple["PauliString", complex]:
        """Split into a phase-free string and the scalar ``i**phase``."""
        return (PauliString(self.n_qubits, self.x_mask, self.z_mask, 0),
                1j ** self.phase_quarter)

    def __mul__(self, other: "PauliString") -> "PauliString":
        if not isinstance(other, PauliString):
            return NotImplemented
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit counts differ")
        x = self.x_mask ^ other.x_mask
        z = self.z_mask ^ other.z_mask
        phase = (self.phase_quarter + other.phase_quarter
                 + _popcount(self.x_mask & self.z_mask)
                 + _popcount(other.x_mask & other.z_mask)
                 - _popcount(x & z)
                 + 2 * _popcount(self.z_mask & other.x_mask))
        return PauliString(self.n_qubits, x, z, phase)

    def adjoint(self) -> "PauliString":
        return PauliString(self.n_qubits, self.x_mask, self.z_mask, -self.phase_quarter)

    def commutes_with(self, other: "PauliString") -> bool:
        """Symplectic predicate; ignores the scalar phases."""
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit counts differ")
        form = _popcount(self.x_mask & other.z_mask) + _popcount(self.z_mask & other.x_mask)
        return form % 2 == 0

    def embedded(self, n_qubits: int, positions: Iterable[int]) -> "PauliString":
        """Map local qubit ``j`` onto global qubit ``positions[j]``."""
        positions = tuple(positions)
        if len(positions) != self.n_qubits:
            raise ValueError("positions must match the local qubit count")
        if len(set(positions)) != len(positions):
            raise ValueError("positions must be distinct")
        x = z = 0
        for j, q in enumerate(positions):
            if not 0 <= q < n_qubits:
                raise ValueError(f"position {q} outside register of {n_qubits}")
            x |= ((self.x_mask >> j) & 1) << q
            z |= ((self.z_mask >> j) & 1) << q
        return PauliString(n_qubits, x, z, self.phase_quarter)

    # -- dense / state action -----------------------------------------

    def apply(self, state: np.ndarray) -> np.ndarray:
        """Apply to a state vector of length 2**n (qubit 0 = LSB of the index)."""
        dim = 1 << self.n_qubits
        state = np.asarray(state)
        if state.shape[0] != dim:
            raise ValueError(f"state length {state.shape[0]} != {dim}")
        idx = np.arange(dim, dtype=np.uint64)
        src = idx ^ np.uint64(self.x_mask)
        signs = 1.0 - 2.0 * (np.bitwise_count(src & np.uint64(self.z_mask)) & 1)
        scalar = 1j ** ((self.phase_quarter + _popcount(self.x_mask & self.z_mask)) % 4)
        return scalar * signs * state[src]

    def to_dense(self, force: bool = False) -> np.ndarray:
        if self.n_qubits > DENSE_QUBIT_CAP and not force:
            raise ValueError(
                f"{self.n_qubits} qubits exceeds the dense cap of {DENSE_QUBIT_CAP}; "
                "pass force=True to override")
        dim = 1 << self.n_qubits
        idx = np.arange(dim, dtype=np.uint64)
        rows = idx ^ np.uint64(self.x_mask)
        signs = 1.0 - 2.0 * (np.bitwise_count(idx & np.uint64(self.z_mask)) & 1)
        scalar = 1j ** ((self.phase_quarter + _popcount(self.x_mask & self.z_mask)) % 4)
        out = np.zeros((dim, dim), dtype=complex)
        out[rows, idx] = scalar * signs
        return out


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a @ b`` with the exact quarter-phase."""
    return a * b


def commutator(a: PauliString, b: PauliString) -> "PauliSum":
    """[a, b] as a PauliSum: zero if they commute, else 2ab."""
    if a.commutes_with(b):
        return PauliSum.zero(a.n_qubits)
    prod = a * b
    string, scalar = prod.canonical()
    return PauliSum({string: 2.0 * scalar})


class PauliSum:
    """Complex-linear combination of phase-free Pauli strings.

    Keys are canonical (phase 0, Hermitian) strings; all quarter-phases are
    folded into the complex coefficients.  Terms below ``PRUNE_TOL`` in
    magnitude are dropped on construction and after arithmetic.
    """

    __slots__ = ("n_qubits", "_terms")

    def __init__(self, terms: Mapping[PauliString, complex], n_qubits: int | None = None,
                 prune_tol: float = PRUNE_TOL):
        folded: dict[PauliString, complex] = {}
        for string, coeff in terms.items():
            base, scalar = string.canonical()
            value = folded.get(base, 0.0) + complex(coeff) * scalar
            folded[base] = value
            if n_qubits is None:
                n_qubits = string.n_qubits
            elif n_qubits != string.n_qubits:
                raise ValueError("mixed qubit counts in one sum")
        if n_qubits is None:
            raise ValueError("empty sum needs an explicit n_qubits")
        self._terms = {s: c for s, c in folded.items() if abs(c) > prune_tol}
        self.n_qubits = n_qubits

    @classmethod
    def zero(cls, n_qubits: int) -> "PauliSum":
        return cls({}, n_qubits=n_qubits)

    @classmethod
    def from_terms(cls, pairs: Iterable[tuple[complex, PauliString]],
                   n_qubits: int | None = None) -> "PauliSum":
        acc: dict[PauliString, complex] = {}
        for coeff, string in pairs:
            acc[string] = acc.get(string, 0.0) + coeff
            if n_qubits is None:
                n_qubits = string.n_qubits
        return cls(acc, n_qubits=n_qubits)

    @classmethod
    def from_string(cls, string: PauliString, coeff: complex = 1.0) -> "PauliSum":
        return cls({string: coeff})

    @classmethod
    def from_labels(cls, n_qubits: int, labels: Mapping[str, complex]) -> "PauliSum":
        return cls({PauliString.from_label(l): c for l, c in labels.items()},
                   n_qubits=n_qubits)

    # -- container protocol -------------------------------------------

    def items(self) -> Iterator[tuple[PauliString, complex]]:
        return iter(self._terms.items())

    def items_by_label(self) -> list[tuple[str, complex]]:
        """(label, coefficient) rows sorted by label; stable across runs."""
        return sorted((s.label(with_phase=False), c) for s, c in self._terms.items())

    def coefficient(self, string: PauliString | str) -> complex:
        if isinstance(string, str):
            string = PauliString.from_label(string)
        base, scalar = string.canonical()
        return self._terms.get(base, 0.0) * scalar

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[PauliString]:
        return iter(self._terms)

    def __repr__(self) -> str:
        if not self._terms:
            return f"PauliSum(0 on {self.n_qubits} qubits)"
        parts = [f"({c:.6g})*{s.label(with_phase=False)}" for s, c in sorted(
            self._terms.items(), key=lambda kv: kv[0].label(with_phase=False))]
        return "PauliSum(" + " + ".join(parts) + ")"

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit counts differ")
        acc = dict(self._terms)
        for s, c in other._terms.items():
            acc[s] = acc.get(s, 0.0) + c
        return PauliSum(acc, n_qubits=self.n_qubits)

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (other * -1.0)

    def __mul__(self, scalar: complex) -> "PauliSum":
        if isinstance(scalar, PauliSum):
            return self.product(scalar)
        return PauliSum({s: c * scalar for s, c in self._terms.items()},
                        n_qubits=self.n_qubits)

    __rmul__ = __mul__

    def product(self, other: "PauliSum") -> "PauliSum":
        """Operator product, fully distributed."""
        if self.n_qubits != other.n_qubits:
            raise ValueError("qubit counts differ")
        acc: dict[PauliString, complex] = {}
        for sa, ca in self._terms.items():
            for sb, cb in other._terms.items():
                prod = sa * sb
                base, scalar = prod.canonical()
                acc[base] = acc.get(base, 0.0) + ca * cb * scalar
        return PauliSum(acc, n_qubits=self.n_qubits)

    def adjoint(self) -> "PauliSum":
        return PauliSum({s: np.conj(c) for s, c in self._terms.items()},
                        n_qubits=self.n_qubits)

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag) <= tol for c in self._terms.values())

    def prune(self, tol: float) -> "PauliSum":
        return PauliSum({s: c for s, c in self._terms.items() if abs(c) > tol},
                        n_qubits=self.n_qubits)

    def max_abs_coeff(self) -> float:
        return max((abs(c) for c in self._terms.values()), default=0.0)

    def l2_norm(self) -> float:
        """Normalized Frobenius norm sqrt(tr(A†A)/2^n) = sqrt(sum |c|^2)."""
        return float(np.sqrt(sum(abs(c) ** 2 for c in self._terms.values())))

    # -- dense / state action -----------------------------------------

    def apply(self, state: np.ndarray) -> np.ndarray:
        out = np.zeros(np.asarray(state).shape, dtype=complex)
        for string, coeff in self._terms.items():
            out += coeff * string.apply(state)
        return out

    def to_dense(self, force: bool = False) -> np.ndarray:
        if self.n_qubits > DENSE_QUBIT_CAP and not force:
            raise ValueError(
                f"{self.n_qubits} qubits exceeds the dense cap of {DENSE_QUBIT_CAP}; "
                "pass force=True to override")
        dim = 1 << self.n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for string, coeff in self._terms.items():
            out += coeff * string.to_dense(force=force)
        return out

    # -- serialization -------------------------------------------------

    def to_json(self) -> str:
        rows = sorted(
            (s.label(with_phase=False), float(np.real(c)), float(np.imag(c)))
            for s, c in self._terms.items())
        return json.dumps({"n_qubits": self.n_qubits, "terms": rows})

    @classmethod
    def from_json(cls, text: str) -> "PauliSum":
        data = json.loads(text)
        terms = {PauliString.from_label(label): complex(re, im)
                 for label, re, im in data["terms"]}
        return cls(terms, n_qubits=data["n_qubits"])


def decompose(matrix: np.ndarray, prune_tol: float = PRUNE_TOL) -> PauliSum:
    """Expand a 2**n x 2**n matrix in the Pauli basis.

    Coefficients are c_P = tr(P† M) / 2**n, computed by recursive 2x2 block
    reduction over the most-significant qubit, O(n 4**n) total.
    """
    matrix = np.asarray(matrix, dtype=complex)
    dim = matrix.shape[0]
    if matrix.shape != (dim, dim) or dim & (dim - 1):
        raise ValueError("matrix must be square with power-of-two size")
    n = dim.bit_length() - 1
    if n > DENSE_QUBIT_CAP:
        raise ValueError(f"{n} qubits exceeds the dense cap of {DENSE_QUBIT_CAP}")

    terms: dict[PauliString, complex] = {}

    def recurse(block: np.ndarray, qubits_left: int, x: int, z: int):
        if qubits_left == 0:
            coeff = complex(block[0, 0])
            if abs(coeff) > prune_tol:
                terms[PauliString(n, x, z, 0)] = coeff
            return
        half = block.shape[0] // 2
        q = qubits_left - 1  # most-significant remaining qubit
        a = block[:half, :half]
        b = block[:half, half:]
        c = block[half:, :half]
        d = block[half:, half:]
        recurse((a + d) / 2, q, x, z)                       # I
        recurse((b + c) / 2, q, x | (1 << q), z)            # X
        recurse(1j * (b - c) / 2, q, x | (1 << q), z | (1 << q))  # Y
        recurse((a - d) / 2, q, x, z | (1 << q))            # Z

    recurse(matrix, n, 0, 0)
    return PauliSum(terms, n_qubits=n)


def kron_dense(labels: str) -> np.ndarray:
    """Dense matrix for a letter string via an explicit Kronecker chain.

    Qubit 0 is the leftmost letter and the least-significant index bit, so
    the chain runs right to left: kron(L_{n-1}, ..., L_0).
    """
    out = np.array([[1.0 + 0j]])
    for letter in labels:  # qubit 0 first: each new letter lands in higher bits
        out = np.kron(_SINGLE_DENSE[letter], out)
    return out
