"""Pauli algebra against an independent dense Kronecker oracle."""

import json

import numpy as np
import pytest

from toricsim.pauli import (PauliString, PauliSum, commutator, decompose,
                            kron_dense, multiply)

RNG = np.random.default_rng(20260814)
LETTERS = "IXYZ"


def random_label(n):
    return "".join(RNG.choice(list(LETTERS)) for _ in range(n))


def test_label_round_trip():
    for label in ("IIII", "XYZI", "ZZZZ", "YIXZ"):
        p = PauliString.from_label(label)
        assert p.label(with_phase=False) == label
        assert p.label() == "+" + label
    p = PauliString.from_label("-i·XZ")
    assert p.phase_quarter == 3
    assert p.label() == "-i·XZ"
    assert PauliString.from_label(p.label()) == p


def test_single_and_embedded():
    p = PauliString.single(4, 2, "Y")
    assert p.label(with_phase=False) == "IIYI"
    small = PauliString.from_label("XZ")
    big = small.embedded(5, (3, 1))
    assert big.label(with_phase=False) == "IZIXI"


def test_dense_matches_kron_oracle():
    for _ in range(100):
        n = int(RNG.integers(1, 6))
        label = random_label(n)
        np.testing.assert_allclose(
            PauliString.from_label(label).to_dense(), kron_dense(label),
            atol=1e-14)


def test_products_match_dense_oracle():
    for _ in range(100):
        n = int(RNG.integers(1, 5))
        a = PauliString.from_label(random_label(n), int(RNG.integers(0, 4)))
        b = PauliString.from_label(random_label(n), int(RNG.integers(0, 4)))
        np.testing.assert_allclose(
            multiply(a, b).to_dense(), a.to_dense() @ b.to_dense(), atol=1e-13)


def test_commutators_match_dense_oracle():
    for _ in range(100):
        n = int(RNG.integers(1, 5))
        a = PauliString.from_label(random_label(n))
        b = PauliString.from_label(random_label(n))
        da, db = a.to_dense(), b.to_dense()
        np.testing.assert_allclose(
            commutator(a, b).to_dense(force=True), da @ db - db @ da, atol=1e-13)
        assert a.commutes_with(b) == np.allclose(da @ db, db @ da)


def test_apply_matches_dense():
    for _ in range(50):
        n = int(RNG.integers(1, 7))
        p = PauliString.from_label(random_label(n), int(RNG.integers(0, 4)))
        state = RNG.normal(size=2**n) + 1j * RNG.normal(size=2**n)
        np.testing.assert_allclose(p.apply(state), p.to_dense() @ state, atol=1e-12)


def test_generator_commutators_frozen():
    # the two-body generators close onto the four-body stabilizer:
    # [ZYII, IXYI] = -2i ZZYI and [[ZYII, IXYI], IIXZ] = -4 ZZZZ
    s1 = PauliString.from_label("ZYII")
    s2 = PauliString.from_label("IXYI")
    s3 = PauliString.from_label("IIXZ")
    c12 = commutator(s1, s2)
    assert len(c12) == 1
    assert c12.coefficient("ZZYI") == pytest.approx(-2j)
    c123 = commutator_sum(c12, s3)
    assert len(c123) == 1
    assert c123.coefficient("ZZZZ") == pytest.approx(-4.0)


def commutator_sum(s: PauliSum, p: PauliString) -> PauliSum:
    out = PauliSum.zero(s.n_qubits)
    for term, coeff in s.items():
        out = out + coeff * commutator(term, p)
    return out


def test_sum_arithmetic_and_hermiticity():
    a = PauliSum.from_labels(4, {"XYII": 1.5, "ZZZZ": -0.25})
    b = PauliSum.from_labels(4, {"XYII": -1.5, "IXIZ": 2.0})
    s = a + b
    assert s.coefficient("XYII") == 0
    assert s.coefficient("IXIZ") == pytest.approx(2.0)
    assert a.is_hermitian()
    assert not (1j * a).is_hermitian()
    np.testing.assert_allclose((2.0 * a).to_dense(), 2.0 * a.to_dense())


def test_sum_apply_and_norm():
    n = 5
    terms = {random_label(n): float(RNG.normal()) for _ in range(6)}
    h = PauliSum.from_labels(n, terms)
    state = RNG.normal(size=2**n) + 1j * RNG.normal(size=2**n)
    np.testing.assert_allclose(h.apply(state), h.to_dense() @ state, atol=1e-12)
    dense_rows = np.array([c * kron_dense(l).reshape(-1)
                           for l, c in h.items_by_label()])
    # Pauli strings are orthogonal under the normalized trace inner product
    expect = np.sqrt(sum(abs(c)**2 for _, c in h.items()))
    assert h.l2_norm() == pytest.approx(expect)
    assert len(dense_rows) == len(h)


def test_decompose_round_trip():
    for _ in range(20):
        n = int(RNG.integers(1, 5))
        terms = {random_label(n): complex(RNG.normal(), RNG.normal())
                 for _ in range(4)}
        h = PauliSum.from_labels(n, terms)
        back = decompose(h.to_dense())
        assert (h - back).max_abs_coeff() < 1e-12


def test_decompose_random_dense():
    for _ in range(10):
        n = int(RNG.integers(1, 4))
        m = RNG.normal(size=(2**n, 2**n)) + 1j * RNG.normal(size=(2**n, 2**n))
        np.testing.assert_allclose(decompose(m).to_dense(), m, atol=1e-12)


def test_json_round_trip():
    h = PauliSum.from_labels(3, {"XYZ": 1.0 + 2.0j, "ZII": -0.5})
    back = PauliSum.from_json(h.to_json())
    assert (h - back).max_abs_coeff() == 0
    json.loads(h.to_json())  # valid document


def test_dense_cap_guard():
    p = PauliString.identity(20)
    with pytest.raises(ValueError):
        p.to_dense()


def test_phase_canonicalization():
    p = PauliString.from_label("XY", 3)  # -i XY
    base, scalar = p.canonical()
    assert base.phase_quarter == 0
    np.testing.assert_allclose(scalar * base.to_dense(), p.to_dense())
    assert p.adjoint().phase_quarter == 1
