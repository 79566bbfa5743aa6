"""Torus geometry, stabilizers, loop operators, and the cubic embedding."""

import itertools
import json
from collections import Counter

import pytest

from toricsim import lattice as lt
from toricsim.pauli import PauliString, multiply


@pytest.fixture(scope="module", params=[2, 3, 4])
def lat(request):
    return lt.build(request.param)


def test_counts(lat):
    assert lat.n_links == 2 * lat.L**2
    assert lat.n_vertices == lat.L**2
    assert lat.n_plaquettes == lat.L**2


def test_rejects_tiny_lattice():
    with pytest.raises(ValueError):
        lt.build(1)


def test_every_link_in_two_neighborhoods(lat):
    cv = Counter(l for links in lat.vertex_links for l in links)
    cp = Counter(l for links in lat.plaquette_links for l in links)
    assert all(cv[l] == 2 for l in range(lat.n_links))
    assert all(cp[l] == 2 for l in range(lat.n_links))


def test_link_endpoint_tables_consistent(lat):
    for link in range(lat.n_links):
        va, vb = lat.link_vertices(link)
        assert va != vb
        assert link in lat.vertex_links[va]
        assert link in lat.vertex_links[vb]
        pa, pb = lat.link_plaquettes(link)
        assert pa != pb
        assert link in lat.plaquette_links[pa]
        assert link in lat.plaquette_links[pb]


def test_stabilizers_commute_and_multiply_to_identity(lat):
    vs = [lt.vertex_stabilizer(lat, i) for i in range(lat.n_vertices)]
    ps = [lt.plaquette_stabilizer(lat, i) for i in range(lat.n_plaquettes)]
    for a, b in itertools.combinations(vs + ps, 2):
        assert a.commutes_with(b)
    for group in (vs, ps):
        acc = PauliString.identity(lat.n_links)
        for s in group:
            acc = multiply(acc, s)
        assert acc == PauliString.identity(lat.n_links)


def test_stabilizer_weights_and_flavors(lat):
    for i in range(lat.n_vertices):
        s = lt.vertex_stabilizer(lat, i)
        assert s.weight == 4
        assert all(s.letter(q) in "IZ" for q in range(lat.n_links))
    for i in range(lat.n_plaquettes):
        s = lt.plaquette_stabilizer(lat, i)
        assert s.weight == 4
        assert all(s.letter(q) in "IX" for q in range(lat.n_links))


def test_loops_commute_with_stabilizers(lat):
    stabs = [lt.vertex_stabilizer(lat, i) for i in range(lat.n_vertices)]
    stabs += [lt.plaquette_stabilizer(lat, i) for i in range(lat.n_plaquettes)]
    for loop in lt.z_loops(lat) + lt.x_loops(lat):
        assert loop.weight == lat.L
        for s in stabs:
            assert loop.commutes_with(s)


def test_loop_anticommutation_pairing(lat):
    zl, xl = lt.z_loops(lat), lt.x_loops(lat)
    # conjugate pairs anticommute, everything else commutes
    assert not zl[0].commutes_with(xl[0])
    assert not zl[1].commutes_with(xl[1])
    assert zl[0].commutes_with(xl[1])
    assert zl[1].commutes_with(xl[0])
    assert zl[0].commutes_with(zl[1])
    assert xl[0].commutes_with(xl[1])


def test_neighbor_pairs_unique_and_shared(lat):
    pairs = lt.neighbor_pairs(lat)
    assert len(pairs) == 3 * lat.L**2
    assert len(set(pairs)) == len(pairs)
    # every pair is consecutive in exactly one vertex and one plaquette order
    for a, b in pairs:
        in_v = sum(any({a, b} == {x, y} for x, y in zip(ls, ls[1:]))
                   for ls in lat.vertex_links)
        in_p = sum(any({a, b} == {x, y} for x, y in zip(ls, ls[1:]))
                   for ls in lat.plaquette_links)
        assert (in_v, in_p) == (1, 1)


def test_embedding_validates(lat):
    emb = lt.plan_cubic_embedding(lat)
    report = lt.validate_embedding(emb, lat)
    assert report.ok, report.violations
    wrapped = sum(1 for p in emb.swap_paths.values() if p)
    assert wrapped == 4 * lat.L - 1
    # bulk pairs sit adjacent with zero swaps
    assert sum(1 for p in emb.swap_paths.values() if not p) == (
        3 * lat.L**2 - wrapped)


def test_embedding_homes_in_plane(lat):
    emb = lt.plan_cubic_embedding(lat)
    for coord in emb.logical_to_physical.values():
        assert coord[2] == 0
    for path in emb.swap_paths.values():
        for coord in path[1:]:
            assert coord[2] == 1  # shuttling stays in the aux layer


def test_validator_flags_corruption():
    lat2 = lt.build(2)
    emb = lt.plan_cubic_embedding(lat2)
    bad = lt.CubicEmbedding(L=2,
                            logical_to_physical=dict(emb.logical_to_physical),
                            swap_paths=dict(emb.swap_paths))
    bad.logical_to_physical[0] = bad.logical_to_physical[1]
    wrap = next(k for k, v in bad.swap_paths.items() if v)
    bad.swap_paths[wrap] = bad.swap_paths[wrap][:-1]
    report = lt.validate_embedding(bad, lat2)
    assert not report.ok
    assert len(report.violations) >= 2


def test_exports_parse():
    lat2 = lt.build(2)
    emb = lt.plan_cubic_embedding(lat2)
    geo = json.loads(lt.lattice_to_json(lat2))
    assert geo["L"] == 2 and len(geo["links"]) == 8
    plan = json.loads(emb.to_json())
    assert len(plan["sites"]) == 8
    rows = emb.schedule_rows()
    assert all(len(r) == 6 for r in rows)
    assert emb.swap_count == sum(max(len(p) - 1, 0)
                                 for p in emb.swap_paths.values())
