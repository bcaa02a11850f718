"""Acceptance criteria, one test per criterion.

Each test runs inside ``criterion(n, title)``; the terminal summary prints
one PASS/FAIL line per criterion.
"""

import math
import time

import numpy as np
import pytest

from conftest import three_room_dict
from oracles import dijkstra, free_cell, logspace_filter, probability_form, random_field
from semmap.bayes_filter import EXACT, FilterConfig, PlaceFilter
from semmap.catalog import new_catalog, whitelist_prior
from semmap.expansion import (TrainingSet, combine_likelihood, expanded_likelihood, score,
                              train_one_vs_all)
from semmap.harness import config_from_dict, ingest_log, run_pipeline, write_log
from semmap.harness.pipeline import log_header, simulate_frames
from semmap.object_boost import boost, load_prior_table, top_k
from semmap.planner import CostTable, build_costmap, plan
from semmap.semantic_grid import (GridGeometry, LaserScan, Pose2D, SensorGate, dump_bytes,
                                  loads_map, new_map, semantic_increment, sigmoid, update_semantic,
                                  winning_label_render)
from semmap.simulator import FeatureModel, WorldSpec, generate_world, three_room_spec


# 1 ---------------------------------------------------------------------------

def test_01_filter_product_oracle(criterion):
    with criterion(1, "filter equals normalized prior x product of likelihoods") as c:
        rng = np.random.default_rng(101)
        cat = new_catalog([f"l{i}" for i in range(5)])
        worst, t0 = 0.0, time.perf_counter()
        for _ in range(1000):
            prior = rng.uniform(0.05, 1.0, 5)
            prior[rng.random(5) < 0.2] = 0.0
            if prior.sum() == 0:
                prior[0] = 1.0
            prior /= prior.sum()
            # likelihoods bounded away from zero keep every live entry above the
            # 1e-12 floor, where the filter is the pure product
            liks = rng.uniform(0.2, 1.0, (int(rng.integers(1, 51)), 5))
            f = PlaceFilter(cat, prior, EXACT)
            for lik in liks:
                f.update(lik)
            want = logspace_filter(prior, liks)
            assert want[prior > 0].min() > EXACT.epsilon_floor
            worst = max(worst, float(np.abs(f.belief - want).max()))
        elapsed = time.perf_counter() - t0
        c.note(f"max error {worst:.2e}, {elapsed:.2f} s")
        assert worst <= 1e-9
        assert elapsed < 5.0


# 2 ---------------------------------------------------------------------------

def test_02_probability_and_logodds_forms_agree(criterion):
    with criterion(2, "probability-form and log-odds cell updates agree") as c:
        rng = np.random.default_rng(202)
        n_seq, max_len = 1000, 50
        t0 = time.perf_counter()
        # one layer per sequence; the clamp is far outside anything reachable
        m = new_map(GridGeometry(1.0, 3, 1), [f"s{i}" for i in range(n_seq)], clamp=(-1e6, 1e6))
        lengths = rng.integers(1, max_len + 1, n_seq)
        obs = rng.uniform(0.02, 0.98, (max_len, n_seq))
        pose, scan, gate = Pose2D(0.5, 0.5, 0.0), LaserScan(0.0, 0.1, [2.0], 10.0), SensorGate(0.5)
        for step in range(max_len):
            post = np.where(step < lengths, obs[step], 0.5)  # 0.5 leaves a layer unchanged
            update_semantic(m, pose, scan, gate, post)
        got = sigmoid(m.layers[:, 0, 1])
        want = np.array([probability_form(obs[:lengths[i], i], 0.5) for i in range(n_seq)])
        elapsed = time.perf_counter() - t0
        worst = float(np.abs(got - want).max())
        c.note(f"max error {worst:.2e}, {elapsed:.2f} s")
        assert worst <= 1e-9
        assert elapsed < 5.0


# 3 ---------------------------------------------------------------------------

def test_03_clamp_never_exceeded(criterion):
    with criterion(3, "stored log-odds stay within the clamp under fuzzing") as c:
        rng = np.random.default_rng(303)
        g = GridGeometry(0.1, 30, 30)
        checked = 0
        for trial in range(10):
            l_min = -float(rng.uniform(0.5, 4.0))
            l_max = float(rng.uniform(0.5, 6.0))
            k = int(rng.integers(2, 6))
            m = new_map(g, [f"c{i}" for i in range(k)], clamp=(l_min, l_max))
            gate = SensorGate(float(rng.uniform(0.1, math.pi)), float(rng.uniform(0.5, 5.0)))
            for _ in range(1000):
                pose = Pose2D(*rng.uniform(0.0, 3.0, 2), float(rng.uniform(-math.pi, math.pi)))
                n = int(rng.integers(1, 40))
                ranges = rng.uniform(0.05, 4.0, n)
                ranges[rng.random(n) < 0.2] = np.inf
                scan = LaserScan(-1.5, 3.0 / max(n - 1, 1), ranges, 3.5)
                post = rng.dirichlet(np.full(k, float(rng.choice([0.05, 1.0, 10.0]))))
                update_semantic(m, pose, scan, gate, post)
                assert m.layers.min() >= l_min and m.layers.max() <= l_max
                assert m.occupancy.min() >= l_min and m.occupancy.max() <= l_max
                checked += 1
        c.note(f"{checked} updates")
        assert checked == 10_000


# 4 ---------------------------------------------------------------------------

def _scalar_recovery(l_min, l_max, up, down, n_wrong):
    """Contradicting updates needed, from a two-layer scalar recursion.

    ``up``/``down`` are the per-update log-odds steps, taken as floats from
    the map so ties at zero resolve identically.
    """
    clamp = lambda v: min(max(v, l_min), l_max)
    right = wrong = 0.0
    for _ in range(n_wrong):
        wrong, right = clamp(wrong + up), clamp(right + down)
    n = 0
    # the correct class has index 0, so it wins ties
    while not (right >= wrong and sigmoid(right) >= 0.5):
        wrong, right = clamp(wrong + down), clamp(right + up)
        n += 1
    return n


def test_04_map_recovery_bound(criterion):
    with criterion(4, "wrongly labeled cell recovers within ceil((l_max-l_min)/d)+1 updates") as c:
        rng = np.random.default_rng(404)
        pose, scan, gate = Pose2D(0.5, 0.5, 0.0), LaserScan(0.0, 0.1, [2.0], 10.0), SensorGate(0.5)
        worst_slack = math.inf
        for _ in range(300):
            clamp = (-float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.5, 6.0)))
            p = float(rng.uniform(0.55, 0.999))
            delta = float(np.log(p / (1 - p)))
            n_wrong = int(rng.integers(1, 60))
            m = new_map(GridGeometry(1.0, 3, 1), ["right", "wrong"], clamp=clamp)
            for _ in range(n_wrong):
                update_semantic(m, pose, scan, gate, [1 - p, p])
            assert winning_label_render(m)[0, 1] == 1
            n = 0
            while winning_label_render(m)[0, 1] != 0:
                update_semantic(m, pose, scan, gate, [p, 1 - p])
                n += 1
                assert n < 10_000
            bound = math.ceil((clamp[1] - clamp[0]) / delta) + 1
            down, up = (float(v) for v in semantic_increment(m, [1 - p, p]))
            assert n == _scalar_recovery(clamp[0], clamp[1], up, down, n_wrong)
            assert n <= min(bound, n_wrong + 1)
            worst_slack = min(worst_slack, bound - n)
        c.note(f"300 cases, smallest slack to bound {worst_slack}")


# 5 ---------------------------------------------------------------------------

def test_05_smoothing_three_room(criterion, tmp_path):
    with criterion(5, "MAP smoother and more accurate than ML on the three-room run") as c:
        cfg = config_from_dict(three_room_dict(frames=2000, seed=0), tmp_path)
        t0 = time.perf_counter()
        res = run_pipeline(cfg, write=False)
        elapsed = time.perf_counter() - t0
        mt = res.metrics
        gain = mt.map_accuracy - mt.ml_accuracy
        c.note(f"switches MAP {mt.map_switches} vs ML {mt.ml_switches}, "
               f"accuracy MAP {mt.map_accuracy:.4f} vs ML {mt.ml_accuracy:.4f}, {elapsed:.1f} s")
        assert mt.n_frames == 2000
        assert mt.map_switches < mt.ml_switches
        assert gain >= 0.05
        assert elapsed < 30.0


# 6 ---------------------------------------------------------------------------

def test_06_whitelist_masking(criterion, tmp_path):
    with criterion(6, "masked labels have zero posterior and never render") as c:
        rng = np.random.default_rng(606)
        g = GridGeometry(0.1, 20, 20)
        steps = 0
        for trial in range(60):
            k = int(rng.integers(3, 7))
            cat = new_catalog([f"c{i}" for i in range(k)])
            allowed = sorted(rng.choice(k, size=int(rng.integers(1, k)), replace=False).tolist())
            masked = [i for i in range(k) if i not in allowed]
            prior = whitelist_prior(cat, [cat.name(i) for i in allowed])
            cfg = [EXACT, FilterConfig(), FilterConfig(0.3, prior_mode="at_init_only")][trial % 3]
            f = PlaceFilter(cat, prior, cfg)
            m = new_map(g, cat)
            for _ in range(40):
                lik = rng.uniform(0.01, 1.0, k)
                if rng.random() < 0.5:
                    lik[rng.choice(masked)] = 50.0  # evidence pointing at a masked label
                b = f.update(lik)
                assert np.all(b[masked] == 0.0)
                pose = Pose2D(*rng.uniform(0.0, 2.0, 2), float(rng.uniform(-math.pi, math.pi)))
                update_semantic(m, pose, LaserScan(-1.0, 0.1, rng.uniform(0.1, 2.5, 21), 3.0),
                                SensorGate(1.2), b)
                steps += 1
            for conf in (float(sigmoid(m.clamp[0])) + 1e-9, 0.5, 0.8):
                r = winning_label_render(m, conf)
                assert not np.isin(r, masked).any()
        # and end to end: a whitelist without the kitchenette
        cfgrun = config_from_dict(three_room_dict(frames=600,
                                                  whitelist=["corridor", "office"]), tmp_path)
        res = run_pipeline(cfgrun, write=False)
        assert np.all(res.trace.posterior[:, 2] == 0.0)
        assert not (winning_label_render(res.map) == 2).any()
        c.note(f"{steps} fuzzed steps + 600-frame run")


# 7 ---------------------------------------------------------------------------

def test_07_expansion(criterion):
    with criterion(7, "appended class wins on matching frames; combine sums to 1") as c:
        cat = new_catalog(["corridor", "office", "kitchenette"])
        door = cat.append_label("door")
        fm = FeatureModel(16, 4, seed=5)
        model = train_one_vs_all(fm.training_set(door, 200, 600), door, catalog=cat)
        prior = whitelist_prior(cat)
        rng = np.random.default_rng(707)
        # 300 door frames; the base classifier sees corridor-like scenes there
        n_door, n_door_frames_won = 0, 0
        stream = PlaceFilter(cat, prior, FilterConfig())
        truth = np.repeat([0, 3, 1, 3, 2, 3], 50)
        stream_won, min_score, stream_map = 0, 1.0, []
        for lab in truth:
            base = np.full(3, 0.15)
            base[0 if lab == 3 else lab] = 0.7
            feat = fm.sample(int(lab))
            lik = expanded_likelihood(base, [model], feat, 1)
            assert abs(lik.sum() - 1.0) <= 1e-9
            b = stream.update(lik)
            stream_map.append(int(np.argmax(b)))
            if lab == 3:
                n_door += 1
                min_score = min(min_score, score(model, feat))
                # fused into the prior belief, each door frame on its own is decisive
                single = PlaceFilter(cat, prior, FilterConfig()).update(lik)
                n_door_frames_won += int(np.argmax(single) == door)
                stream_won += int(np.argmax(b) == door)
        assert n_door_frames_won == n_door
        # in a running belief the door takes over after a short lag and then holds
        lags = []
        for seg in range(1, 6, 2):
            run = np.asarray(stream_map[seg * 50:(seg + 1) * 50])
            first = int(np.argmax(run == door))
            assert run[first] == door and np.all(run[first:] == door)
            lags.append(first)
        # combine examples
        np.testing.assert_allclose(combine_likelihood([0.5, 0.5]), [0.5, 0.5], atol=1e-4)
        np.testing.assert_allclose(combine_likelihood([0.6, 0.4], [0.5]), [0.4, 0.2667, 0.3333],
                                   atol=1e-4)
        assert abs(combine_likelihood([1.0, 0.0], [1.0])[2] - 0.5) <= 1e-4
        # combine always sums to one
        for _ in range(5000):
            k, j = int(rng.integers(1, 10)), int(rng.integers(0, 4))
            base = rng.uniform(0, 1, k) * (rng.random(k) < 0.8)
            if base.sum() == 0 and j == 0:
                continue
            out = combine_likelihood(base, rng.uniform(0, 1, j))
            assert abs(out.sum() - 1.0) <= 1e-9
        c.note(f"door MAP on {n_door_frames_won}/{n_door} frames from the prior, "
               f"{stream_won}/{n_door} in the stream (lags {lags}), lowest door score {min_score:.3f}")


# 8 ---------------------------------------------------------------------------

@pytest.mark.slow
def test_08_one_vs_all_training(criterion):
    with criterion(8, "one-vs-all: blob accuracy >= 0.99, fast small and full-size training") as c:
        rng = np.random.default_rng(808)
        pos = rng.normal(1.0, 0.5, (100, 16))
        neg = rng.normal(-1.0, 0.5, (100, 16))
        t0 = time.perf_counter()
        model = train_one_vs_all(TrainingSet(pos, neg), 0)
        small = time.perf_counter() - t0
        acc = (np.sum(model.predict_proba(pos) > 0.5) + np.sum(model.predict_proba(neg) <= 0.5)) / 200
        assert acc >= 0.99
        assert small < 1.0

        n, dim, n_pos = 26_080, 4096, 2_608
        big_pos = rng.standard_normal((n_pos, dim), dtype=np.float32)
        big_pos += np.float32(0.05)
        big_neg = rng.standard_normal((n - n_pos, dim), dtype=np.float32)
        t0 = time.perf_counter()
        big = train_one_vs_all(TrainingSet(big_pos, big_neg), 0)
        large = time.perf_counter() - t0
        big_acc = float(np.mean(np.r_[big.predict_proba(big_pos[:500]) > 0.5,
                                      big.predict_proba(big_neg[:500]) <= 0.5]))
        c.note(f"blob accuracy {acc:.3f}; 200x16 in {small * 1e3:.0f} ms; "
               f"26080x4096 in {large:.1f} s (accuracy {big_acc:.2f})")
        assert large < 60.0
        assert np.all(np.isfinite(big.weights))


# 9 ---------------------------------------------------------------------------

def test_09_planner_optimality(criterion):
    with criterion(9, "A* cost equals Dijkstra, never expands more") as c:
        rng = np.random.default_rng(909)
        planner_time, cases, reachable = 0.0, 0, 0
        for _ in range(200):
            cost = random_field(rng, 30)
            s, g = free_cell(rng, cost), free_cell(rng, cost)
            t0 = time.perf_counter()
            res = plan(cost, s, g)
            planner_time += time.perf_counter() - t0
            want, n_dij = dijkstra(cost, s, g)
            if math.isinf(want):
                assert not res.found and math.isinf(res.total_cost)
            else:
                reachable += 1
                assert abs(res.total_cost - want) <= 1e-9
            assert res.expanded_nodes <= n_dij
            cases += 1
        c.note(f"{cases} fields ({reachable} reachable), A* total {planner_time:.2f} s")
        assert cases == 200
        assert planner_time < 10.0


# 10 --------------------------------------------------------------------------

def two_route_world():
    """Corridor detour below, an office shortcut above; doors on both office walls."""
    g = GridGeometry(0.1, 60, 40)
    regions = [(0, 0, 6, 4, "corridor"), (2, 1, 4, 4, "office")]
    walls = [(2, 0.6, 4, 1.0),                              # separates detour from office
             (2, 1.0, 2.2, 1.6), (2, 2.4, 2.2, 4),          # west office wall, door at 1.6-2.4
             (3.8, 1.0, 4, 1.6), (3.8, 2.4, 4, 4)]          # east office wall
    return generate_world(WorldSpec(g, regions, walls, "corridor"), new_catalog(["corridor", "office"]))


def truth_map(world):
    m = new_map(world.geometry, world.catalog)
    for k in range(m.n_layers):
        m.layers[k] = np.where(world.labels == k, m.clamp[1], m.clamp[0])
    m.observed[:] = ~world.wall
    m.occupancy[:] = np.where(world.wall, m.clamp[1], m.clamp[0])
    return m


def test_10_route_flips_with_office_cost(criterion):
    with criterion(10, "office multiplier 1 -> 10 flips the route out of the office") as c:
        world = two_route_world()
        m = truth_map(world)
        start, goal = world.geometry.world_to_cell(1.0, 2.0), world.geometry.world_to_cell(5.0, 2.0)
        office = world.catalog.index("office")

        def office_cells(mult):
            field_ = build_costmap(m, CostTable({"corridor": 1.0, "office": mult}))
            res = plan(field_, start, goal)
            assert res.found
            return res, sum(world.labels[iy, ix] == office for ix, iy in res.path)

        night, n_night = office_cells(1.0)
        day, n_day = office_cells(10.0)
        c.note(f"office cells {n_night} -> {n_day}, cost {night.total_cost:.1f} -> "
               f"{day.total_cost:.1f}")
        assert night.path != day.path
        assert n_night > 0
        assert n_day == 0


# 11 --------------------------------------------------------------------------

def test_11_object_boost(criterion):
    with criterion(11, "object boost: uniform column keeps ranking, kitchen flip, normalized") as c:
        rng = np.random.default_rng(1111)
        objects = [f"o{i}" for i in range(12)]
        uniform = load_prior_table([], objects, ["kitchen", "office"])
        worst = 0.0
        for _ in range(2000):
            lik = rng.dirichlet(np.full(12, 0.3))
            if rng.random() < 0.3:
                lik = np.round(lik, 2)
                lik /= lik.sum()  # coarse values produce ties
            post = boost(lik, uniform, 0)
            assert [i for i, _ in top_k(post, 12)] == [i for i, _ in top_k(lik, 12)]
            counts = [(o, "kitchen", float(v)) for o, v in zip(objects, rng.integers(0, 50, 12))]
            post2 = boost(lik, load_prior_table(counts, objects, ["kitchen", "office"]), 0)
            worst = max(worst, abs(post.sum() - 1), abs(post2.sum() - 1))
            assert post2.min() >= 0
        kitchen = load_prior_table([("cup", "kitchen", 9), ("bike", "kitchen", 1)],
                                   ["cup", "bike"], ["kitchen"])
        flip = boost([0.3, 0.7], kitchen, 0)
        c.note(f"kitchen example {flip.round(4).tolist()}, max normalization error {worst:.1e}")
        assert abs(flip[0] - 0.794) <= 1e-3 and abs(flip[1] - 0.206) <= 1e-3
        assert top_k(flip, 1)[0][0] == 0
        assert worst <= 1e-9


# 12 --------------------------------------------------------------------------

def test_12_determinism_and_roundtrip(criterion, tmp_path):
    with criterion(12, "byte-identical reruns, log replay equals in-memory run, map round-trip") as c:
        d = three_room_dict(frames=800, features={"dim": 8})
        runs = []
        for name in ("a", "b"):
            cfg = config_from_dict(dict(d, output=str(tmp_path / name)), tmp_path)
            runs.append(run_pipeline(cfg))
        for f in ("map.smap", "metrics.json", "trace.csv", "map.ppm"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

        cfg = config_from_dict(dict(d, output=str(tmp_path / "mem")), tmp_path)
        cat = cfg.validate()
        frames, _ = simulate_frames(cfg, cat)
        write_log(tmp_path / "run.jsonl", log_header(cfg, cat), frames)
        assert ingest_log(tmp_path / "run.jsonl")[1] == frames
        mem = run_pipeline(cfg, frames=frames, catalog=cat)
        replay_cfg = config_from_dict(dict(d, output=str(tmp_path / "replay"),
                                           log=str(tmp_path / "run.jsonl")), tmp_path)
        rep = run_pipeline(replay_cfg)
        for f in ("map.smap", "metrics.json", "trace.csv"):
            assert (tmp_path / "mem" / f).read_bytes() == (tmp_path / "replay" / f).read_bytes()
        assert (tmp_path / "mem" / "map.smap").read_bytes() == (tmp_path / "a" / "map.smap").read_bytes()
        assert rep.metrics == mem.metrics

        blob = dump_bytes(mem.map)
        again = loads_map(blob)
        assert dump_bytes(again) == blob
        assert again.layers.tobytes() == mem.map.layers.tobytes()
        assert again.occupancy.tobytes() == mem.map.occupancy.tobytes()
        c.note(f"{len(blob)} byte map dump")


# 13 --------------------------------------------------------------------------

FIVE = ["corridor", "office", "kitchenette", "meeting_room", "lab"]


@pytest.fixture(scope="module")
def long_log(tmp_path_factory):
    d = tmp_path_factory.mktemp("long")
    spec = three_room_spec()
    world = spec.to_dict()
    world["regions"] += [{"box": [0, 7, 5, 10], "label": "meeting_room"},
                         {"box": [5, 7, 10, 10], "label": "lab"}]
    cfg_d = three_room_dict(frames=10_000, world=world, grid=spec.geometry.to_dict())
    cfg_d["catalog"] = {"base": FIVE}
    cfg = config_from_dict(cfg_d, d)
    cat = cfg.validate()
    frames, _ = simulate_frames(cfg, cat)
    write_log(d / "long.jsonl", log_header(cfg, cat), frames)
    return cfg_d, d


@pytest.mark.slow
def test_13_replay_throughput(criterion, long_log):
    with criterion(13, "10,000-frame replay, 100x100 map, 5 labels, under 60 s") as c:
        cfg_d, d = long_log
        cfg = config_from_dict(dict(cfg_d, log=str(d / "long.jsonl"), output=str(d / "out")), d)
        t0 = time.perf_counter()
        res = run_pipeline(cfg)
        elapsed = time.perf_counter() - t0
        c.note(f"{elapsed:.1f} s, {res.metrics.n_frames} frames, "
               f"MAP accuracy {res.metrics.map_accuracy:.3f}")
        assert res.metrics.n_frames == 10_000
        assert res.map.layers.shape == (5, 100, 100)
        assert elapsed < 60.0
