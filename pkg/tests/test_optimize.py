import math

import numpy as np
import pytest

from bangbang import cone, oracle
from bangbang import optimize as opt
from bangbang.freefermion import infinite_energy_ff
from bangbang.model import (
    AngleSchedule,
    ApConfig,
    Lattice,
    ap_schedule,
    end_ramp_profile,
    expand_uniform,
)

G = 1.1
INF = Lattice.infinite_chain(G)


def test_zero_offsets_reproduce_base(rng):
    lat = Lattice.open_chain(20, G)
    base = expand_uniform(AngleSchedule(rng.uniform(0, 1, 2), rng.uniform(0, 1, 2)), lat)
    region = cone.cone_for_depth(lat, 2, 4)
    for engine in ("ff", "fmps", "sv"):
        obj = opt.region_objective(base, region, engine)
        assert opt.evaluate(obj, np.zeros(obj.dim)) == opt.schedule_energy(engine, lat, base)


def test_sign_symmetry_and_periodic_cross_section(rng):
    obj = opt.uniform_objective(INF, 3, "itebd")
    x = rng.uniform(0, 1, 6)
    e = opt.evaluate(obj, x)
    assert opt.evaluate(obj, -x) == pytest.approx(e, abs=1e-10)
    per = obj.periods()
    for k in range(6):
        y = x.copy()
        y[k] += per[k]
        assert opt.evaluate(obj, y) == pytest.approx(e, abs=1e-10)
    # smooth cross-section: second differences are small on a fine grid
    ts = np.linspace(0, per[0], 41)
    vals = np.array([opt.evaluate(obj, np.r_[t, x[1:]]) for t in ts])
    assert np.abs(np.diff(vals, 2)).max() < 0.05


def test_grad_matches_fd(rng):
    lat = Lattice.open_chain(16, G)
    base = expand_uniform(AngleSchedule(rng.uniform(0, 1, 3), rng.uniform(0, 1, 3)), lat)
    obj = opt.region_objective(base, cone.cone_for_depth(lat, 3, 2), "ff")
    x = rng.uniform(-0.2, 0.2, obj.dim)
    e, g = opt.evaluate_with_grad(obj, x)
    assert e == pytest.approx(opt.evaluate(obj, x), abs=1e-14)
    h = 1e-6
    for k in range(obj.dim):
        d = np.zeros(obj.dim)
        d[k] = h
        fd = (opt.evaluate(obj, x + d) - opt.evaluate(obj, x - d)) / (2 * h)
        assert g[k] == pytest.approx(fd, abs=1e-8)
    with pytest.raises(ValueError):
        opt.evaluate_with_grad(opt.region_objective(base, cone.ends_region(lat, 3), "sv"), np.zeros(6))


def test_objective_validation():
    with pytest.raises(ValueError):
        opt.uniform_objective(Lattice.open_chain(6, G), 2, "itebd")
    with pytest.raises(ValueError):
        opt.uniform_objective(Lattice.ring(6, G), 2, "fmps")
    with pytest.raises(ValueError):
        opt.uniform_objective(INF, 2, "bogus")
    with pytest.raises(ValueError):
        opt.evaluate(opt.uniform_objective(INF, 2, "ff"), np.zeros(3))


def test_config_validation():
    with pytest.raises(ValueError):
        opt.OptimizerConfig(method="newton")
    with pytest.raises(ValueError):
        opt.OptimizerConfig(ftol=0)
    with pytest.raises(ValueError):
        opt.OptimizerConfig(hops=-1)


def test_optimize_bb_n2_table_value():
    obj = opt.uniform_objective(INF, 2, "itebd")
    x0 = ap_schedule(ApConfig(2, 0.3)).as_vector()
    res = opt.optimize_bb(obj, opt.OptimizerConfig(hops=5, seed=3), x0)
    assert res.energy == pytest.approx(-1.324301, abs=2e-5)
    best = [r.best for r in res.trace]
    assert all(a >= b for a, b in zip(best, best[1:]))
    assert res.energy <= min(r.energy for r in res.trace)
    # folded representative has the same energy
    assert opt.evaluate(obj, res.x_folded) == pytest.approx(res.energy, abs=1e-10)
    assert opt.evaluate(obj, -res.x) == pytest.approx(res.energy, abs=1e-10)
    per = obj.periods()
    assert np.all(res.x_folded >= 0) and np.all(res.x_folded < per)


def test_optimize_bb_deterministic():
    obj = opt.uniform_objective(INF, 2, "ff")
    cfg = opt.OptimizerConfig(method="bfgs", hops=4, seed=11)
    x0 = np.array([0.3, 0.1, 0.2, 0.5])
    a = opt.optimize_bb(obj, cfg, x0)
    b = opt.optimize_bb(obj, cfg, x0)
    assert np.array_equal(a.x, b.x) and a.energy == b.energy
    assert [r.energy for r in a.trace] == [r.energy for r in b.trace]


def test_canonical_representative_is_lexicographic_min(rng):
    obj = opt.uniform_objective(INF, 2, "ff")
    x = rng.uniform(-3, 3, 4)
    c = opt.canonical_representative(obj, x)
    per = obj.periods()
    alt = np.mod(-x, per)
    assert tuple(c) <= tuple(alt)
    assert opt.evaluate(obj, c) == pytest.approx(opt.evaluate(obj, x), abs=1e-12)


def test_optimize_ap():
    dt, e = opt.optimize_ap(2, G, "itebd")
    assert e == pytest.approx(-1.145280, abs=1e-5)
    assert dt == pytest.approx(0.2926, abs=1e-3)
    e0 = opt.schedule_energy("itebd", INF, ap_schedule(ApConfig(10, 1e-9)))
    assert e0 == pytest.approx(-G, abs=1e-8)
    with pytest.raises(opt.NoBracketError):
        opt.optimize_ap(2, G, "ff", dt_max=0.1)
    # under an explicit ramp-time cap a boundary optimum is accepted
    dt_c, e_c = opt.optimize_ap(10, G, "ff", tau_max=2.5)
    assert dt_c == pytest.approx(0.25, abs=1e-8)
    assert e_c == pytest.approx(-1.325426, abs=1e-5)


def test_stage_one_small():
    r = opt.stage_one(2, G, opt.OptimizerConfig(method="bfgs", hops=3))
    assert r.energy == pytest.approx(-1.324302, abs=2e-6)
    assert r.source == "ap-basin"
    assert r.energy >= oracle.infinite_gs_energy(G)
    assert r.schedule.as_vector() == pytest.approx([0.1882, 0.3374, 0.5902, 0.5587], abs=1e-3)


def test_interpolate_schedule():
    s = AngleSchedule([0.1, 0.3], [0.4, 0.4])
    t = opt.interpolate_schedule(s, 3)
    assert t.N == 3 and t.betas == pytest.approx([0.1, 0.2, 0.3])
    assert t.alphas[-1] == pytest.approx(0.4)


@pytest.fixture(scope="module")
def n2_schedule():
    return opt.stage_one(2, G, opt.OptimizerConfig(method="bfgs", hops=0)).schedule


def test_boundary_empty_region_is_baseline(n2_schedule):
    lat = Lattice.open_chain(40, G)
    r = opt.optimize_boundary(lat, n2_schedule, cone.empty_region(lat, 2))
    assert r.energy == r.start_energy
    assert r.schedule == expand_uniform(n2_schedule, lat)


def test_boundary_never_worse(n2_schedule):
    lat = Lattice.open_chain(40, G)
    for region in (cone.ends_region(lat, 2), cone.cone_for_depth(lat, 2, 5)):
        r = opt.optimize_boundary(lat, n2_schedule, region)
        assert r.energy <= r.start_energy
        assert r.energy >= oracle.finite_gs(lat).energy_per_site
        # bulk gates untouched
        base = expand_uniform(n2_schedule, lat)
        free = set(region.slots())
        for j in range(2):
            for b in range(lat.n_bonds):
                if ("beta", j, b) not in free:
                    assert r.schedule.beta_layers[j, b] == base.beta_layers[j, b]


def test_boundary_lattice_mismatch(n2_schedule):
    with pytest.raises(ValueError):
        opt.optimize_boundary(Lattice.open_chain(30, G), n2_schedule,
                              cone.ends_region(Lattice.open_chain(40, G), 2))


def test_assign_local_angles_uniform(n2_schedule):
    lat = Lattice.open_chain(12, G)
    got = opt.assign_local_angles(lat, {G: n2_schedule})
    assert got == expand_uniform(n2_schedule, lat)


def test_assign_local_angles_interpolates():
    lib = {1.0: AngleSchedule([0.0], [1.0]), 2.0: AngleSchedule([1.0], [3.0])}
    lat = Lattice.open_chain(3, [1.0, 1.5, 2.0])
    s = opt.assign_local_angles(lat, lib)
    assert s.alpha_layers[0] == pytest.approx([1.0, 2.0, 3.0])
    assert s.beta_layers[0] == pytest.approx([0.25, 0.75])  # bond fields 1.25, 1.75
    same = {1.0: AngleSchedule([0.2], [0.3]), 2.0: AngleSchedule([0.2], [0.3])}
    assert np.all(opt.assign_local_angles(lat, same).alpha_layers == 0.3)
    with pytest.raises(ValueError):
        opt.assign_local_angles(Lattice.open_chain(2, [0.5, 1.0]), lib)
    with pytest.raises(ValueError):
        opt.assign_local_angles(lat, {})


def test_local_angles_beat_bulk_angles_near_the_end():
    # holds for deep circuits; at N <= 5 the bulk angles win by accident
    N, L = 7, 100
    prof = end_ramp_profile(L, 1.1, 1.3)
    lat = Lattice.open_chain(L, prof)
    lib = opt.angle_library(N, [1.1, 1.2, 1.3], opt.OptimizerConfig(method="bfgs", hops=2))
    ref = oracle.finite_gs(lat)
    from bangbang.freefermion import run_bb_ff

    def err(s, n):
        x, _ = run_bb_ff(lat, s).observables()
        return np.abs(x[:n] - ref.x[:n]).max()

    local = opt.assign_local_angles(lat, lib)
    bulk = expand_uniform(lib[1.3], lat)
    assert err(local, 40) <= err(bulk, 40)
    assert err(local, 10) < err(bulk, 10)


def test_result_record_and_trace(tmp_path):
    obj = opt.uniform_objective(INF, 1, "ff")
    res = opt.optimize_bb(obj, opt.OptimizerConfig(method="bfgs", hops=2, seed=5), np.array([0.2, 0.3]))
    rec = opt.result_record(res, obj)
    for key in ("seed = 5", "N = 1", "engine = ff", "mask = ", "x_folded = ", "energy = ",
                "evaluations = ", "wall_time = "):
        assert key in rec
    p = tmp_path / "trace.csv"
    opt.write_trace_csv(p, res)
    lines = p.read_text().splitlines()
    assert lines[0] == "hop,energy,accepted,best" and len(lines) == len(res.trace) + 1
    assert infinite_energy_ff(AngleSchedule.from_vector(res.x), G) == pytest.approx(res.energy)


def test_2d_corner_objective_small():
    lat = Lattice.open_square(3, 3, 3.1)
    s = AngleSchedule([0.08], [0.2])
    r = opt.optimize_boundary(lat, s, cone.corner_region(lat, 1),
                              opt.OptimizerConfig(method="bfgs", hops=0))
    assert r.energy <= r.start_energy
    assert math.isfinite(r.energy)
