"""Acceptance criteria, one test per criterion at the stated tolerance.

Each test records a ``PASS``/``FAIL`` line in ``RESULTS``; the lines are
printed in the terminal summary (see ``conftest.py``) and when the file is
run as a script.
"""

import time

import numpy as np
import pytest
from scipy.linalg import subspace_angles

from butterfly_dof import cli, schemes
from butterfly_dof.analysis import (
    butterfly_cut,
    default_topology,
    dof_slope,
    genie_cutset_bound,
    monte_carlo_residual,
    rate_sweep,
    sample_usable,
)
from butterfly_dof.beamform import (
    build_nulling_system,
    feasibility_count,
    nullspace,
    nullspace_rref,
    run_mimo_scheme,
    solve_v2,
)
from butterfly_dof.netmodel import (
    MessageSet,
    Topology,
    first_hop,
    sample_channels,
    second_hop,
)

RESULTS: list[str] = []

POWERS = [10.0 ** (d / 10.0) for d in range(40, 101, 10)]
N_REALIZATIONS = 10


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def slopes(scheme, p=None, n=N_REALIZATIONS):
    topo = default_topology(scheme)
    out = []
    for seed in range(n):
        ch = sample_usable(scheme, topo, seed)
        out.append(dof_slope(rate_sweep(scheme, ch, POWERS, p)))
    return out


def test_c1_no_cache_slope():
    t0 = time.perf_counter()
    est = slopes("no_cache")
    elapsed = time.perf_counter() - t0
    totals = [e.total for e in est]
    ok = all(1.9 <= s <= 2.1 for s in totals) and elapsed < 10
    record("C1 no-cache slope", ok,
           f"slopes in [{min(totals):.4f}, {max(totals):.4f}] over {len(totals)} realizations, {elapsed:.2f} s")


def test_c2_cache_slope():
    est = slopes("cache")
    totals = [e.total for e in est]
    users = [s for e in est for s in e.slopes]
    ok = all(3.9 <= s <= 4.1 for s in totals) and all(0.95 <= s <= 1.05 for s in users)
    record("C2 cache slope", ok,
           f"total in [{min(totals):.4f}, {max(totals):.4f}], per-user in [{min(users):.4f}, {max(users):.4f}]")


def test_c3_time_sharing():
    worst = 0.0
    parts = []
    for p in (0.0, 0.25, 0.5, 0.75, 1.0):
        totals = [e.total for e in slopes("cache_partial", p)]
        err = max(abs(s - (2 + 2 * p)) for s in totals)
        worst = max(worst, err)
        parts.append(f"p={p}: {np.mean(totals):.4f}")
    record("C3 time sharing", worst <= 0.1, f"{', '.join(parts)}; max deviation {worst:.4f}")


def test_c4_mimo_slope():
    totals, identical = [], True
    for seed in range(N_REALIZATIONS):
        ch = sample_usable("mimo", Topology.mimo(3), seed)
        totals.append(dof_slope(rate_sweep("mimo", ch, POWERS)).total)
        for P in POWERS:
            a = run_mimo_scheme(ch, P, use_side_relays=True)
            b = run_mimo_scheme(ch, P, use_side_relays=False)
            identical &= dict(a.gains) == dict(b.gains) and a.rates == b.rates
    ok = all(3.9 <= s <= 4.1 for s in totals) and identical
    record("C4 MIMO slope", ok,
           f"total in [{min(totals):.4f}, {max(totals):.4f}], side relays removed bitwise equal={identical}")


def test_c5_exact_nulling():
    t0 = time.perf_counter()
    cache = monte_carlo_residual("cache", 1000, 0)
    mimo = monte_carlo_residual("mimo", 1000, 0)
    elapsed = time.perf_counter() - t0
    ok = cache <= 1e-9 and mimo <= 1e-9 and elapsed < 30
    record("C5 exact nulling", ok, f"cache {cache:.2e}, mimo {mimo:.2e} over 1000 trials each, {elapsed:.2f} s")


def test_c6a_nullspace_rank():
    hits = 0
    ranks = {}
    for seed in range(1000):
        ns = nullspace(build_nulling_system(sample_channels(Topology.mimo(3), seed)).matrix)
        ranks[(ns.rank, ns.dim)] = ranks.get((ns.rank, ns.dim), 0) + 1
        hits += ns.rank == 8 and ns.dim == 1
    census = ", ".join(f"rank {r} dim {d}: {n}" for (r, d), n in sorted(ranks.items()))
    record("C6a nullspace rank 8 / dim 1", hits == 1000, f"{hits}/1000 ({census})")


def test_c6b_solver_agreement():
    worst = 0.0
    for seed in range(100):
        M = build_nulling_system(sample_channels(Topology.mimo(3), 5000 + seed)).matrix
        a, b = nullspace(M), nullspace_rref(M)
        angle = float(np.max(subspace_angles(a.basis, b.basis))) if a.dim == b.dim else np.inf
        worst = max(worst, angle)
    record("C6b solver cross-check", worst <= 1e-8, f"max principal angle {worst:.2e} over 100 instances")


def test_c7_parameter_counting():
    a = feasibility_count(2, True)
    b = feasibility_count(3, False)
    got = ((a["parameters"], a["constraints"], a["counting_feasible"]),
           (b["parameters"], b["constraints"], b["counting_feasible"]))
    record("C7 parameter counting", got == ((6, 8, False), (9, 8, True)),
           f"n=2 side {got[0]}, n=3 no side {got[1]}")


def test_c8_genie_bound():
    bounds, measured = [], []
    for seed in range(N_REALIZATIONS):
        ch = sample_usable("no_cache", Topology.single(), seed)
        bounds.append(genie_cutset_bound(butterfly_cut(), ch).total)
        measured.append(dof_slope(rate_sweep("no_cache", ch, POWERS)).total)
    ok = all(b == 2 for b in bounds) and max(measured) <= 2.1
    record("C8 genie bound", ok, f"bound {sorted(set(bounds))}, max no-cache slope {max(measured):.4f}")


def _linearity(rng):
    ch = sample_channels(Topology.mimo(3), int(rng.integers(2**31)))
    x1, x2 = (rng.standard_normal((4, 5)) + 1j * rng.standard_normal((4, 5)) for _ in range(2))
    a, b = complex(*rng.standard_normal(2)), complex(*rng.standard_normal(2))
    y = first_hop(ch, a * x1 + b * x2)
    y1, y2 = first_hop(ch, x1), first_hop(ch, x2)
    return all(np.allclose(y[k], a * y1[k] + b * y2[k], rtol=1e-12, atol=1e-12) for k in y)


def _no_leakage(rng):
    ch = sample_channels(Topology.single(), int(rng.integers(2**31)))
    ok = True
    for s in range(1, 5):
        x = np.zeros(4, dtype=complex)
        x[s - 1] = 1.0
        y = first_hop(ch, x)
        ok &= all((y[k] != 0) == ((s, k) in ch.first_links) for k in y)
    for k in ch.topology.relays:
        xr = {j: np.zeros(1, dtype=complex) for j in ch.topology.relays}
        xr[k][0] = 1.0
        y = second_hop(ch, xr)
        ok &= all((y[d][0] != 0) == ((k, d) in ch.second_links) for d in y)
    return ok


def _scale_invariance(rng):
    ch = sample_channels(Topology.mimo(3), int(rng.integers(2**31)))
    V2 = solve_v2(ch, 1.0).V2
    c = complex(*rng.standard_normal(2))
    M = build_nulling_system(ch)
    base = np.linalg.norm(V2) * ch.h_max ** 2
    return np.max(np.abs(M.apply(c * V2))) <= 1e-9 * abs(c) * base


def _xor_roundtrip(rng):
    ch = sample_usable("cache", Topology.single(), int(rng.integers(2**31)))
    msgs = MessageSet.random(64, int(rng.integers(2**31)))
    out = schemes.deliver_cached(ch, msgs)
    return all(np.array_equal(out[d], msgs[d]) for d in range(1, 5))


def _seed_determinism():
    cfg = cli.SimulationConfig(scheme="cache_partial", p=0.5, seed=11, trials=2)
    return cli.simulate(cfg)["csv"].encode() == cli.simulate(cfg)["csv"].encode()


def test_c9_property_suites():
    rng = np.random.default_rng(2024)
    checks = {
        "linearity": all(_linearity(rng) for _ in range(50)),
        "no-leakage": all(_no_leakage(rng) for _ in range(50)),
        "nulling scale invariance": all(_scale_invariance(rng) for _ in range(50)),
        "XOR round trip": all(_xor_roundtrip(rng) for _ in range(20)),
        "seed determinism": _seed_determinism(),
    }
    detail = ", ".join(f"{k}={'ok' if v else 'FAILED'}" for k, v in checks.items())
    record("C9 property suites", all(checks.values()), detail)


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                pass
