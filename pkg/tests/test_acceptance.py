"""Acceptance criteria, one test per criterion.

Each test enforces the stated tolerances and runtime budget and prints a
single PASS line; run with `pytest -s tests/test_acceptance.py` to see the
lines as the suite executes.
"""
import json
import math
import time
from contextlib import contextmanager

import numpy as np

from scenediff.attention import (
    ModulationParams,
    SegmentSpec,
    base_attention,
    build_condition_map,
    build_range_maps,
    build_size_map,
    lambda_schedule,
    modulate,
)
from scenediff.cli import main
from scenediff.dtxl import read_dtxl
from scenediff.engine import (
    AnalyticGaussianBackend,
    MockBackend,
    NoiseSchedule,
    RngStream,
    ZeroBackend,
    reverse_run,
    vcjd,
)
from scenediff.geometry import Window, WindowPlan, crop, plan_windows, stitch
from scenediff.layout import (
    BoundingBox,
    GroupLayout,
    InstanceLayout,
    Keypoints,
    SceneLayout,
    assign_instances_to_groups,
    inclusion_check,
    numerical_matching,
    spatial_matching,
)
from scenediff.pyramid import interpolate, pixel_perturb


@contextmanager
def criterion(name: str, budget_seconds: float):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    elapsed = time.perf_counter() - start
    assert elapsed < budget_seconds, (
        f"{name} took {elapsed:.1f}s, budget {budget_seconds}s"
    )
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s)")


# ---------------------------------------------------------------------------


def _random_plan(rng) -> WindowPlan:
    """A covering plan with 1-6 windows on a canvas up to 96x96."""
    while True:
        h = int(rng.integers(8, 97))
        w = int(rng.integers(8, 97))
        wh = int(rng.integers((h + 1) // 2, h + 1))
        ww = int(rng.integers((w + 1) // 2, w + 1))
        sh = int(rng.integers(max(1, wh // 2), wh + 1))
        sw = int(rng.integers(max(1, ww // 2), ww + 1))
        plan = plan_windows((h, w), (wh, ww), (sh, sw))
        if len(plan.windows) > 5:
            continue
        windows = list(plan.windows)
        if rng.random() < 0.5 and len(windows) < 6:
            eh = int(rng.integers(1, h + 1))
            ew = int(rng.integers(1, w + 1))
            windows.append(Window(
                len(windows),
                int(rng.integers(0, h - eh + 1)),
                int(rng.integers(0, w - ew + 1)),
                eh, ew,
            ))
        return WindowPlan(h, w, tuple(windows))


def test_stitching_consensus():
    with criterion("stitching-consensus", 10.0):
        rng = np.random.default_rng(20240)
        for _ in range(200):
            plan = _random_plan(rng)
            canvas = (plan.canvas_height, plan.canvas_width)
            channels = int(rng.integers(1, 4))
            z = rng.standard_normal(canvas + (channels,))
            views = [(crop(z, win), win) for win in plan.windows]
            assert 1 <= len(views) <= 6

            # consensus: cropped views of one canvas stitch back exactly
            assert np.array_equal(stitch(views, canvas), z)

            # averaging of disagreeing views matches the per-pixel
            # accumulate-and-divide oracle to 1e-12
            noisy = [
                (x + rng.standard_normal(x.shape), win) for x, win in views
            ]
            got = stitch(noisy, canvas)
            total = np.zeros(canvas + (channels,))
            count = np.zeros(canvas + (1,))
            for x, win in noisy:
                total[win.slices] += x
                count[win.slices] += 1
            assert np.max(np.abs(got - total / count)) <= 1e-12


def test_degenerate_tiling_equivalence():
    with criterion("degenerate-tiling", 5.0):
        sched = NoiseSchedule.linear(50)
        z = np.random.default_rng(7).standard_normal((32, 32, 2))
        plan = plan_windows((32, 32), (32, 32), 16)
        backends = (
            AnalyticGaussianBackend(mean=0.5, std=1.5),
            ZeroBackend(),
            MockBackend(),
        )
        for backend in backends:
            joint = vcjd(z, None, 50, plan, backend, sched, RngStream(404))
            plain = reverse_run(z, 50, None, backend, sched, RngStream(404))
            assert joint.dtype == plain.dtype
            assert np.array_equal(joint, plain)


def test_analytic_moment_recovery():
    with criterion("analytic-moments", 60.0):
        sched = NoiseSchedule.linear(200)
        backend = AnalyticGaussianBackend(mean=2.0, std=1.0)
        plan = plan_windows((64, 64), (40, 40), 24)
        assert len(plan.windows) == 4  # 2x2 overlapping windows
        pixels = []
        for seed in range(5):
            rng = RngStream(9_000 + seed)
            z = rng.child(0).generator().standard_normal((64, 64, 1))
            out = vcjd(z, None, 200, plan, backend, sched, rng.child(1))
            pixels.append(out.ravel())
        pooled = np.concatenate(pixels)
        tolerance = 4.0 / math.sqrt(64 * 64)
        assert abs(pooled.mean() - 2.0) < tolerance
        assert 0.9 < pooled.var() < 1.1


def test_pixel_perturbation_statistics():
    with criterion("pppi-statistics", 10.0):
        gamma, distance = 0.05, 1
        low = np.random.default_rng(77).standard_normal((128, 128, 1))
        interp = interpolate(low, 2.0)
        assert interp.shape == (256, 256, 1)

        out = pixel_perturb(low, interp, 2.0, gamma, distance,
                            RngStream(555).child(0))
        swapped = (out != interp).any(axis=2)
        n = swapped.size
        fraction = swapped.mean()
        half_width = 3.2905 * math.sqrt(gamma * (1 - gamma) / n)
        assert gamma - half_width < fraction < gamma + half_width

        # every perturbed value exists in the declared source neighborhood
        for r, c in np.argwhere(swapped):
            base_r = int(np.floor(r / 2.0 + 0.5))
            base_c = int(np.floor(c / 2.0 + 0.5))
            r0, r1 = max(base_r - distance, 0), min(base_r + distance, 127)
            c0, c1 = max(base_c - distance, 0), min(base_c + distance, 127)
            assert out[r, c, 0] in low[r0:r1 + 1, c0:c1 + 1, 0]

        # gamma = 0 reproduces the interpolation bit-for-bit
        untouched = pixel_perturb(low, interp, 2.0, 0.0, distance,
                                  RngStream(555).child(1))
        assert np.array_equal(untouched, interp)


def test_pyramid_dimensions_and_replay(tmp_path, capsys):
    with criterion("pyramid-dimensions", 120.0):
        out = tmp_path / "pyramid.dtxl"
        # base 64x48 latent canvas (512x384 pixels at 1/8), alpha 2, P 3
        assert main([
            "generate", "--canvas", "512x384", "--latent-scale", "8",
            "--window", "512", "--stride", "256", "--steps", "40",
            "--pyramid-phases", "3", "--alpha", "2.0", "--tp", "0.5",
            "--backend", "analytic", "--seed", "31", "--out", str(out),
        ]) == 0
        capsys.readouterr()
        tensor = read_dtxl(out)
        assert tensor.shape == (384, 512, 1)

        manifest_path = tmp_path / "pyramid.dtxl.manifest.json"
        manifest = json.loads(manifest_path.read_text())
        assert manifest["outputs"]["dims"] == [384, 512, 1]
        assert main([
            "replay", str(manifest_path), "--out", str(tmp_path / "again.dtxl"),
        ]) == 0
        capsys.readouterr()
        assert (
            (tmp_path / "again.dtxl").read_bytes() == out.read_bytes()
        )


def _random_segments(rng, nq, nk):
    count = int(rng.integers(1, 3))
    keys = rng.permutation(nk)
    segments = []
    cursor = 0
    for s in range(count):
        take = int(rng.integers(1, max(2, nk // count)))
        key_idx = keys[cursor:cursor + take]
        cursor += take
        if len(key_idx) == 0:
            continue
        query_mask = rng.random(nq) < 0.5
        if not query_mask.any():
            query_mask[int(rng.integers(0, nq))] = True
        key_mask = np.zeros(nk, dtype=bool)
        key_mask[key_idx] = True
        segments.append(SegmentSpec(f"s{s}", query_mask, key_mask))
    return segments


def test_attention_modulation_properties():
    with criterion("attention-modulation", 5.0):
        rng = np.random.default_rng(31337)
        nq = nk = d = 8
        for _ in range(500):
            q = rng.standard_normal((nq, d))
            k = rng.standard_normal((nk, d))
            segments = _random_segments(rng, nq, nk)
            t = int(rng.integers(0, 51))
            params = ModulationParams(1.0, t, 50)

            modulated = modulate(q, k, segments, params, float(nq))
            assert np.max(np.abs(modulated.sum(axis=1) - 1.0)) < 1e-9

            frozen = modulate(q, k, segments,
                              ModulationParams(0.0, t, 50), float(nq))
            assert np.array_equal(frozen, base_attention(q, k))

            # positive-pair modulated scores nondecreasing in the strength
            raw = q @ k.T
            positive = build_condition_map(segments, nq, nk)
            size = build_size_map(segments, float(nq), nq, nk)
            pos_gap, _ = build_range_maps(raw)
            previous = None
            for strength in (0.0, 0.5, 1.0, 2.0):
                lam = lambda_schedule(ModulationParams(strength, t, 50))
                coeff = np.minimum(lam * (1.0 - size), 1.0)
                scores = raw + coeff * pos_gap
                if previous is not None:
                    assert (
                        scores[positive] >= previous[positive] - 1e-12
                    ).all()
                previous = scores

        # a segment spanning the whole canvas and every key leaves rows
        # untouched: relative size 1 zeroes the positive bias and no key
        # is left to suppress
        q = rng.standard_normal((nq, d))
        k = rng.standard_normal((nk, d))
        full = SegmentSpec(
            "全", np.ones(nq, dtype=bool), np.ones(nk, dtype=bool)
        )
        got = modulate(q, k, [full], ModulationParams(5.0, 50, 50), float(nq))
        assert np.allclose(got, base_attention(q, k), atol=0, rtol=0)


def _counting_oracle(expected: int, generated: int):
    # explicit one-to-one pairing of two item lists
    expected_items = list(range(expected))
    generated_items = list(range(generated))
    matched = 0
    for _ in expected_items:
        if generated_items:
            generated_items.pop()
            matched += 1
    if generated > 0:
        precision = matched / generated
    else:
        precision = 1.0 if expected == 0 else 0.0
    if expected > 0:
        recall = matched / expected
    else:
        recall = 1.0 if generated == 0 else 0.0
    f1 = (
        2 * precision * recall / (precision + recall)
        if precision + recall > 0 else 0.0
    )
    return precision, recall, f1


def _layout_with_counts(category: str, count: int) -> SceneLayout:
    canvas = (1000, 1000)
    if category == "group":
        groups = tuple(
            GroupLayout(f"g{i}", BoundingBox(10.0 * i, 5.0, 10.0 * i + 8.0, 20.0),
                        f"group {i}")
            for i in range(count)
        )
        return SceneLayout(canvas, "scene", groups=groups)
    kind = "human" if category == "human" else "object"
    instances = tuple(
        InstanceLayout(f"i{i}", kind,
                       BoundingBox(10.0 * i, 5.0, 10.0 * i + 8.0, 20.0),
                       f"{kind} {i}")
        for i in range(count)
    )
    return SceneLayout(canvas, "scene", instances=instances)


def _pose_joints(box: BoundingBox, stretch: float):
    joints = []
    for j in range(17):
        fx = 0.1 + 0.8 * (j / 16)
        x = box.x0 + fx * box.width * stretch
        y = box.y0 + fx * box.height * stretch
        joints.append((min(x, 999.0), min(y, 999.0), 1))
    return Keypoints(tuple(joints))


def _spatial_fixture(rng) -> SceneLayout:
    canvas = (1000, 800)
    groups = []
    instances = []
    for gi in range(int(rng.integers(1, 4))):
        x0 = float(rng.uniform(0, 700))
        y0 = float(rng.uniform(0, 500))
        gbox = BoundingBox(x0, y0, x0 + float(rng.uniform(80, 280)),
                           y0 + float(rng.uniform(80, 280)))
        groups.append(GroupLayout(f"g{gi}", gbox, f"group {gi}"))
        for ii in range(int(rng.integers(0, 3))):
            ix0 = float(rng.uniform(gbox.x0, gbox.center[0]))
            iy0 = float(rng.uniform(gbox.y0, gbox.center[1]))
            ibox = BoundingBox(
                ix0, iy0,
                min(ix0 + float(rng.uniform(20, 160)), 999.0),
                min(iy0 + float(rng.uniform(20, 160)), 799.0),
            )
            stretch = float(rng.uniform(0.6, 1.6))  # >1 can leak outside
            instances.append(InstanceLayout(
                f"h{gi}_{ii}", "human", ibox, "person",
                _pose_joints(ibox, stretch),
            ))
    layout = SceneLayout(canvas, "fixture", tuple(groups), tuple(instances))
    return assign_instances_to_groups(layout)


def test_layout_metrics_against_oracles():
    with criterion("layout-metrics-oracle", 5.0):
        for category in ("group", "human", "object"):
            for expected in range(11):
                for generated in range(11):
                    layout = _layout_with_counts(category, generated)
                    report = numerical_matching({category: expected}, layout)
                    p, r, f1 = _counting_oracle(expected, generated)
                    assert report.precision == p
                    assert report.recall == r
                    assert abs(report.f1 - f1) < 1e-12
                    cat = report.categories[category]
                    assert cat.matched == min(expected, generated)

        rng = np.random.default_rng(86)
        for _ in range(50):
            layout = _spatial_fixture(rng)
            half = layout.canvas[0] / 2
            lefts = sum(1 for g in layout.groups if g.bbox.center[0] < half)
            rights = sum(1 for g in layout.groups if g.bbox.center[0] > half)
            assert spatial_matching(layout, "left") == lefts / len(layout.groups)
            assert spatial_matching(layout, "right") == rights / len(layout.groups)

            assigned = passing = 0
            for group in layout.groups:
                for member in group.member_ids:
                    inst = layout.instance_by_id(member)
                    assigned += 1
                    inside = all(
                        group.bbox.x0 <= x <= group.bbox.x1
                        and group.bbox.y0 <= y <= group.bbox.y1
                        for x, y, v in inst.keypoints.joints if v
                    )
                    passing += inside
            expected_acc = passing / assigned if assigned else 1.0
            assert inclusion_check(layout) == expected_acc
