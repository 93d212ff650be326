"""Finite-graph flow layer: feasibility vs exhaustive cut checking,
max-flow/min-cut agreement, and rounding invariants."""

import itertools

import numpy as np
import pytest

from equidecomp._maxflow import ArrayDinic, _ranges, solve_supply_flow
from equidecomp.dyadic import Dyadic
from equidecomp.finiteflow import (
    CutCertificate,
    FiniteGraph,
    FlowValues,
    capacity_fn,
    f_flow_feasible,
    round_flow,
    st_max_flow,
)


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------

def cut_feasible(g, f, cap):
    """Direct check of the cut condition over every vertex subset."""
    c = capacity_fn(cap)
    if sum(f.get(x, 0) for x in range(g.n)) != 0:
        return False
    for r in range(1, g.n + 1):
        for F in itertools.combinations(range(g.n), r):
            fs = set(F)
            tot = sum(f.get(x, 0) for x in F)
            out_cap = sum(c(x, y) for x in F for y in g.adj[x] if y not in fs)
            in_cap = sum(c(y, x) for x in F for y in g.adj[x] if y not in fs)
            if tot > out_cap or tot < -in_cap:
                return False
    return True


def random_graph(rng, n, p=0.6):
    pairs = list(itertools.combinations(range(n), 2))
    keep = rng.random(len(pairs)) < p
    return FiniteGraph(n, [p_ for p_, k in zip(pairs, keep) if k])


def random_caps(rng, g, hi=2):
    caps = {}
    for u, v in g.edges:
        caps[(u, v)] = int(rng.integers(0, hi + 1))
        caps[(v, u)] = int(rng.integers(0, hi + 1))
    return caps


# ---------------------------------------------------------------------------
# graph / flow containers
# ---------------------------------------------------------------------------

def test_graph_normalizes_edges():
    g = FiniteGraph(4, [(2, 1), (1, 2), (3, 0)])
    assert g.edges == ((0, 3), (1, 2))
    assert g.adj[1] == (2,) and g.adj[3] == (0,)
    assert g.has_edge(2, 1) and not g.has_edge(0, 1)
    with pytest.raises(ValueError):
        FiniteGraph(3, [(1, 1)])
    with pytest.raises(ValueError):
        FiniteGraph(3, [(0, 3)])


def test_flow_values_antisymmetric():
    g = FiniteGraph(3, [(0, 1), (1, 2)])
    fl = FlowValues(g)
    fl.set_value(1, 0, 5)            # stored canonically as (0,1) = -5
    assert fl.value(0, 1) == -5 and fl.value(1, 0) == 5
    fl.set_value(1, 2, Dyadic(3, 1))
    assert fl.divergence(1) == 5 + Dyadic(3, 1)
    assert not fl.is_integral()
    fl.set_value(1, 2, 0)            # zeroing removes the entry
    assert fl.items() == [((0, 1), -5)]
    assert fl.is_integral()
    with pytest.raises(KeyError):
        fl.set_value(0, 2, 1)


# ---------------------------------------------------------------------------
# f-flow feasibility vs the subset oracle
# ---------------------------------------------------------------------------

def balanced_f(rng, n):
    while True:
        f = rng.integers(-2, 3, size=n)
        if f.sum() == 0:
            return {x: int(f[x]) for x in range(n)}


def test_feasibility_matches_cut_oracle():
    rng = np.random.default_rng(11)
    agree = feasible_seen = infeasible_seen = 0
    for i in range(800):
        n = int(rng.integers(2, 6))
        g = random_graph(rng, n)
        caps = random_caps(rng, g)
        if i % 2:
            f = {x: int(rng.integers(-2, 3)) for x in range(n)}
        else:
            f = balanced_f(rng, n)
        want = cut_feasible(g, f, caps)
        got = f_flow_feasible(g, f, caps)
        if isinstance(got, FlowValues):
            assert want, "solver found a flow the cut condition forbids"
            feasible_seen += 1
            c = capacity_fn(caps)
            for x in range(n):
                assert got.divergence(x) == f[x]
                for y in g.adj[x]:
                    assert got.value(x, y) <= c(x, y)
            assert got.is_integral()
        else:
            assert not want, "solver rejected a flow the cut condition allows"
            infeasible_seen += 1
            assert got.verify(g, f, caps)
        agree += 1
    assert agree == 800
    assert feasible_seen > 100 and infeasible_seen > 100


def test_unbalanced_supply_is_whole_set_certificate():
    g = FiniteGraph(3, [(0, 1), (1, 2)])
    cert = f_flow_feasible(g, {0: 2, 1: 0, 2: -1}, 10)
    assert isinstance(cert, CutCertificate)
    assert cert.F == frozenset({0, 1, 2}) and cert.slack == 1


def test_certificate_verify_rejects_tampering():
    g = FiniteGraph(2, [(0, 1)])
    f = {0: 2, 1: -2}
    cert = f_flow_feasible(g, f, 1)
    assert isinstance(cert, CutCertificate)
    assert cert.verify(g, f, 1)
    bad_slack = CutCertificate(F=cert.F, side=cert.side, slack=cert.slack + 1)
    assert not bad_slack.verify(g, f, 1)
    wrong_set = CutCertificate(F=frozenset({0, 1}), side="lower", slack=cert.slack)
    assert not wrong_set.verify(g, f, 1)


def test_negative_capacity_rejected():
    g = FiniteGraph(2, [(0, 1)])
    with pytest.raises(ValueError):
        f_flow_feasible(g, {0: 1, 1: -1}, {(0, 1): -1, (1, 0): 0})


# ---------------------------------------------------------------------------
# s-t max flow
# ---------------------------------------------------------------------------

def test_max_flow_pinned_network():
    g = FiniteGraph(4, [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)])
    caps = {(0, 1): 3, (0, 2): 2, (1, 2): 1, (1, 3): 2, (2, 3): 3}
    res = st_max_flow(g, 0, 3, caps)
    assert res.value == 5
    assert res.cut_side == frozenset({0})
    assert res.cut_edges == ((0, 1), (0, 2))
    assert res.flow.divergence(0) == 5 and res.flow.divergence(3) == -5
    assert res.flow.divergence(1) == 0 and res.flow.divergence(2) == 0


def test_max_flow_cut_duality_random():
    # st_max_flow asserts flow value == cut value internally; this exercises
    # that dual check across many shapes and validates the reported cut.
    rng = np.random.default_rng(7)
    for _ in range(150):
        n = int(rng.integers(2, 7))
        g = random_graph(rng, n)
        caps = random_caps(rng, g, hi=3)
        s, t = 0, n - 1
        res = st_max_flow(g, s, t, caps)
        assert s in res.cut_side and t not in res.cut_side
        c = capacity_fn(caps)
        assert res.value == sum(c(x, y) for x, y in res.cut_edges)
        for x, y in res.cut_edges:
            assert x in res.cut_side and y not in res.cut_side


def test_max_flow_input_validation():
    g = FiniteGraph(2, [(0, 1)])
    with pytest.raises(ValueError):
        st_max_flow(g, 1, 1, 1)
    with pytest.raises(ValueError):
        st_max_flow(g, 0, 1, Dyadic(1, 1))


# ---------------------------------------------------------------------------
# rounding
# ---------------------------------------------------------------------------

def random_dyadic_flow(rng, g, triangles):
    """Integer flow everywhere plus dyadic circulations around the given
    triangles, so the divergence stays integral."""
    phi = FlowValues(g)
    for u, v in g.edges:
        phi.set_value(u, v, int(rng.integers(-3, 4)))
    for a, b, c in triangles:
        delta = Dyadic(int(rng.integers(-15, 16)), int(rng.integers(1, 4)))
        for x, y in ((a, b), (b, c), (c, a)):
            phi.set_value(x, y, phi.value(x, y) + delta)
    return phi


def test_round_flow_invariants():
    rng = np.random.default_rng(23)
    g = FiniteGraph(5, list(itertools.combinations(range(5), 2)))
    tris = list(itertools.combinations(range(5), 3))
    fractional_edges = 0
    for _ in range(200):
        picks = [tris[i] for i in rng.choice(len(tris), size=2, replace=False)]
        phi = random_dyadic_flow(rng, g, picks)
        f = {x: phi.divergence(x) for x in range(5)}
        assert all(isinstance(v, int) or v.is_integer for v in f.values())
        f = {x: v if isinstance(v, int) else v.floor() for x, v in f.items()}
        out = round_flow(g, f, phi)
        assert out.is_integral()
        for x in range(5):
            assert out.divergence(x) == f[x]
        for u, v in g.edges:
            dev = out.value(u, v) - phi.value(u, v)
            assert -1 < dev < 1
            pv = phi.value(u, v)
            if isinstance(pv, int) or pv.is_integer:
                assert out.value(u, v) == pv
            else:
                fractional_edges += 1
    assert fractional_edges > 200


def test_round_flow_pure_circulation():
    g = FiniteGraph(3, [(0, 1), (1, 2), (0, 2)])
    phi = FlowValues(g)
    for x, y in ((0, 1), (1, 2), (2, 0)):
        phi.set_value(x, y, Dyadic(1, 1))     # half a unit around the triangle
    out = round_flow(g, {}, phi)
    assert out.is_integral()
    assert all(out.divergence(x) == 0 for x in range(3))
    vals = {abs(out.value(0, 1)), abs(out.value(1, 2)), abs(out.value(2, 0))}
    assert vals <= {0, 1}


def test_round_flow_checks_divergence():
    g = FiniteGraph(2, [(0, 1)])
    phi = FlowValues(g)
    phi.set_value(0, 1, Dyadic(1, 1))
    with pytest.raises(ValueError):
        round_flow(g, {0: 3, 1: -3}, phi)


# ---------------------------------------------------------------------------
# array engine
# ---------------------------------------------------------------------------

def test_ranges_concatenates_spans():
    got = _ranges(np.array([0, 5, 9]), np.array([2, 3, 0]))
    assert got.tolist() == [0, 1, 5, 6, 7]
    assert _ranges(np.array([], dtype=np.int64), np.array([], dtype=np.int64)).size == 0


def test_array_engine_matches_reference():
    rng = np.random.default_rng(31)
    for _ in range(120):
        n = int(rng.integers(2, 7))
        g = random_graph(rng, n)
        caps = random_caps(rng, g, hi=3)
        ref = st_max_flow(g, 0, n - 1, caps)
        din = ArrayDinic(n)
        if g.edges:
            u = np.array([e[0] for e in g.edges])
            v = np.array([e[1] for e in g.edges])
            cuv = np.array([caps[(a, b)] for a, b in g.edges])
            cvu = np.array([caps[(b, a)] for a, b in g.edges])
            din.add_edges(u, v, cuv, cvu)
        else:
            din._finalize()
        assert din.max_flow(0, n - 1) == ref.value


def test_array_engine_deterministic():
    def build():
        din = ArrayDinic(6)
        u = np.array([0, 0, 1, 2, 3, 4, 1])
        v = np.array([1, 2, 3, 4, 5, 5, 2])
        din.add_edges(u, v, np.array([3, 2, 2, 3, 2, 2, 1]), 0)
        din.max_flow(0, 5)
        return din.net_flow()
    assert np.array_equal(build(), build())


def test_array_engine_rejects_bad_input():
    din = ArrayDinic(3)
    with pytest.raises(ValueError):
        din.add_edges([0], [1], [-1], [0])
    din.add_edges([0], [1], [1], [0])
    din.max_flow(0, 1)
    with pytest.raises(RuntimeError):
        din.add_edges([1], [2], [1], [0])


def test_supply_flow_round_trip():
    rng = np.random.default_rng(43)
    for _ in range(60):
        n = int(rng.integers(3, 8))
        g = random_graph(rng, n, p=0.7)
        if not g.edges:
            continue
        caps = random_caps(rng, g, hi=3)
        # build a supply that is realizable by construction
        net = np.array([int(rng.integers(-caps[(v, u)], caps[(u, v)] + 1))
                        for u, v in g.edges])
        supply = np.zeros(n, dtype=np.int64)
        for (u, v), w in zip(g.edges, net.tolist()):
            supply[u] += w
            supply[v] -= w
        din = ArrayDinic(n + 2)
        u = np.array([e[0] for e in g.edges])
        v = np.array([e[1] for e in g.edges])
        din.add_edges(u, v, np.array([caps[e] for e in g.edges]),
                      np.array([caps[(b, a)] for a, b in g.edges]))
        ok, got = solve_supply_flow(n, din, supply)
        assert ok
        div = np.zeros(n, dtype=np.int64)
        for (a, b), w in zip(g.edges, got.tolist()):
            div[a] += w
            div[b] -= w
        assert np.array_equal(div, supply)
        for (a, b), w in zip(g.edges, got.tolist()):
            assert -caps[(b, a)] <= w <= caps[(a, b)]


def test_supply_flow_reports_infeasible():
    din = ArrayDinic(4)          # vertices 0,1 real; no edge between them
    ok, _ = solve_supply_flow(2, din, np.array([1, -1]))
    assert not ok


def test_supply_flow_validation():
    din = ArrayDinic(4)
    with pytest.raises(ValueError):
        solve_supply_flow(2, din, np.array([1, 0, -1]))
    with pytest.raises(ValueError):
        solve_supply_flow(2, ArrayDinic(4), np.array([1, 1]))
