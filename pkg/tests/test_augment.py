import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgtrace.augment import (
    AugmentPlan, KINDS, TransformSpec, apply_transform, augment_class, plan_balance,
)
from ecgtrace.errors import CountMismatch, EmptyClass
from ecgtrace.imgproc import ImageU8

from conftest import gray

REFERENCE_POOLS = {"Normal": 619, "COVID19": 180, "Abnormal": 597, "MI": 56, "AHB": 395, "RecoveredMI": 147}
REFERENCE_FACTORS = {"Normal": 4, "COVID19": 14, "Abnormal": 4, "MI": 43, "AHB": 6, "RecoveredMI": 17}


def test_reference_totals_under_overrides():
    plan = plan_balance(REFERENCE_POOLS, overrides=REFERENCE_FACTORS, seed=0)
    assert plan.totals() == {"Normal": 2476, "COVID19": 2520, "Abnormal": 2388,
                             "MI": 2408, "AHB": 2370, "RecoveredMI": 2499}
    for name, entry in plan.classes.items():
        assert len(entry.replicas) == entry.source_count * (entry.factor - 1)


def test_default_factor_is_rounded_ratio():
    plan = plan_balance({"a": 100, "b": 180, "c": 619, "d": 3000}, target=2500)
    assert plan["a"].factor == 25
    assert plan["b"].factor == 14   # 13.89
    assert plan["c"].factor == 4    # 4.04
    assert plan["d"].factor == 1    # never below one


def test_balanced_class_gets_no_replicas():
    plan = plan_balance({"x": 100}, target=100)
    assert plan["x"].factor == 1 and plan["x"].replicas == ()


def test_empty_class_rejected():
    with pytest.raises(EmptyClass):
        plan_balance({"x": 0})


def test_replica_parameters_in_range_and_cycled():
    plan = plan_balance({"c": 7}, target=70, seed=3)
    for r, (src, t) in enumerate(plan["c"].replicas):
        assert t.kind == KINDS[r % 3]
        assert 0 <= src < 7
        t.validate()
    sources = [s for s, _ in plan["c"].replicas]
    assert all(sources.count(s) == plan["c"].factor - 1 for s in range(7))


def test_plan_deterministic_and_json_roundtrip():
    a = plan_balance(REFERENCE_POOLS, seed=11)
    b = plan_balance(REFERENCE_POOLS, seed=11)
    assert a == b
    assert AugmentPlan.from_json(a.to_json()) == a
    assert plan_balance(REFERENCE_POOLS, seed=12) != a
    doc = json.loads(a.to_json())
    assert doc["seed"] == 11 and doc["classes"][0]["replicas"][0]["kind"] == "rotate"


def test_class_stream_independent_of_other_classes():
    alone = plan_balance({"MI": 56}, seed=5)
    together = plan_balance({"Normal": 619, "MI": 56}, seed=5)
    assert alone["MI"] == together["MI"]


def test_translate_zero_is_identity(rng):
    img = ImageU8(rng.integers(0, 256, (6, 5, 1)).astype(np.uint8))
    assert apply_transform(img, TransformSpec("translate", dx=0.0, dy=0.0)) == img


def test_translate_half_width_fills_white():
    # Output x reads source x + 0.5*2: x=0 -> 1 (inside), x=1 -> 2 (outside).
    out = apply_transform(gray([0, 0]), TransformSpec("translate", dx=0.5, dy=0.0))
    assert out.pixels.ravel().tolist() == [0, 255]


def test_rotate_white_stays_white():
    img = ImageU8(np.full((9, 13, 1), 255, np.uint8))
    assert apply_transform(img, TransformSpec("rotate", angle=10.0)) == img


def test_scale_keeps_centre_pixel(rng):
    img = ImageU8(rng.integers(0, 256, (5, 5, 3)).astype(np.uint8))
    out = apply_transform(img, TransformSpec("scale", factor=1.1))
    assert np.array_equal(out.pixels[2, 2], img.pixels[2, 2])


def test_scale_zooms_in():
    # A dark column at the image edge moves out of view under magnification.
    px = np.full((11, 11, 1), 200, np.uint8)
    px[:, 0] = 0
    out = apply_transform(ImageU8(px), TransformSpec("scale", factor=1.1))
    assert out.pixels[:, 0].min() > 0


transforms = st.one_of(
    st.builds(lambda a, s: TransformSpec("rotate", angle=s * a), st.floats(5, 10), st.sampled_from([-1, 1])),
    st.builds(lambda f: TransformSpec("scale", factor=f), st.floats(1.025, 1.10)),
    st.builds(lambda x, y: TransformSpec("translate", dx=x, dy=y),
              st.floats(0.05, 0.2) | st.floats(-0.2, -0.05), st.floats(0.05, 0.2) | st.floats(-0.2, -0.05)),
)


@given(transforms, st.integers(1, 12), st.integers(1, 12), st.sampled_from([1, 3]), st.integers(0, 2**31))
@settings(max_examples=60)
def test_transform_preserves_shape_and_range(t, w, h, c, seed):
    img = ImageU8(np.random.default_rng(seed).integers(0, 256, (h, w, c)).astype(np.uint8))
    out = apply_transform(img, t)
    assert out.pixels.shape == img.pixels.shape and out.pixels.dtype == np.uint8


def test_augment_class_counts_and_order(rng):
    imgs = [ImageU8(rng.integers(0, 256, (8, 8, 1)).astype(np.uint8)) for _ in range(3)]
    plan = plan_balance({"k": 3}, overrides={"k": 2}, seed=1)
    out = augment_class(imgs, plan["k"])
    assert len(out) == 6 and out[:3] == imgs
    assert augment_class(imgs, plan["k"]) == out
    with pytest.raises(CountMismatch):
        augment_class(imgs[:2], plan["k"])


def test_augment_class_reference_count():
    imgs = [ImageU8(np.full((4, 4, 1), i % 256, np.uint8)) for i in range(619)]
    plan = plan_balance({"Normal": 619}, overrides={"Normal": 4})
    assert len(augment_class(imgs, plan["Normal"])) == 2476
