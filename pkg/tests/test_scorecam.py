import json
import warnings

import numpy as np
import pytest

from ecgtrace.errors import ClassOutOfRange, DimensionMismatch, NoActivationCapability
from ecgtrace.imgproc import ImageU8, resize_plane
from ecgtrace.model import CNNBackend, init_params, reference_spec
from ecgtrace.scorecam import CamSample, cam_report, jet, overlay, scorecam

X = np.array([[1, 2, 0, 1], [0, 1, 3, 1], [2, 0, 1, 0], [1, 1, 0, 2]], dtype=float)[None]
W0 = np.array([[1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1]], dtype=float)
A = np.array([[[1, 0], [0, 0]], [[0, 2], [1, 3]]], dtype=float)

# Worked by hand: masked scores 2.1875 and 5.75, softmax weights, half-pixel upsampling.
EXPECTED = np.array([
    [0.0, 0.16423366296, 0.49270098888, 0.65693465184],
    [0.07846732592, 0.24452574166, 0.57664257314, 0.74270098888],
    [0.23540197776, 0.40510989906, 0.74452574166, 0.91423366296],
    [0.31386930368, 0.48540197776, 0.82846732592, 1.0],
])


class LinearStub:
    """Fixed activations; class 0 logit is a weighted pixel sum plus an offset."""

    num_classes = 2

    def __init__(self, acts, weight, offset=0.3, shift=0.0):
        self.acts, self.weight, self.offset, self.shift = acts, weight, offset, shift
        self.logit_calls = 0

    def activations(self, batch, layer):
        return np.repeat(self.acts[None], len(batch), axis=0)

    def logits(self, batch):
        self.logit_calls += 1
        z0 = (batch[:, 0] * self.weight).sum(axis=(1, 2)) + self.offset + self.shift
        return np.stack([z0, np.full(len(batch), self.shift)], axis=1)

    def predict_proba(self, batch):
        z = self.logits(batch)
        e = np.exp(z - z.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)


def test_hand_worked_example():
    cam, w = scorecam(LinearStub(A, W0), X, 0, "any", return_weights=True)
    assert w == pytest.approx([0.027585282226789985, 0.9724147177732099], abs=1e-12)
    assert np.max(np.abs(cam - EXPECTED)) < 1e-9


def test_single_channel_is_normalized_map():
    act = np.array([[[0.0, 1.0], [2.0, 5.0]]])
    cam = scorecam(LinearStub(act, W0), X, 0, "any")
    up = resize_plane(act[0], 4, 4)
    assert np.array_equal(cam, (up - up.min()) / (up.max() - up.min()))


def test_constant_maps_give_zero_heatmap():
    be = LinearStub(np.full((3, 2, 2), 7.0), W0)
    with pytest.warns(UserWarning, match="constant"):
        cam = scorecam(be, X, 0, "any")
    assert np.array_equal(cam, np.zeros((4, 4)))
    assert be.logit_calls == 0


def test_constant_channels_are_skipped():
    acts = np.concatenate([A, np.ones((1, 2, 2))])
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cam, w = scorecam(LinearStub(acts, W0), X, 0, "any", return_weights=True)
    assert len(w) == 2 and np.max(np.abs(cam - EXPECTED)) < 1e-9


def test_invariant_to_logit_shift():
    a = scorecam(LinearStub(A, W0), X, 0, "any")
    b = scorecam(LinearStub(A, W0, shift=123.0), X, 0, "any")
    assert np.allclose(a, b, atol=1e-12)


def test_errors():
    with pytest.raises(NoActivationCapability):
        scorecam(object(), X, 0, "any")
    with pytest.raises(ClassOutOfRange):
        scorecam(LinearStub(A, W0), X, 2, "any")
    with pytest.raises(DimensionMismatch):
        scorecam(LinearStub(A, W0), X[0], 0, "any")


@pytest.fixture(scope="module")
def small_cnn():
    spec = reference_spec((1, 24, 24), 3, channels=4, blocks=2)
    return spec, CNNBackend(spec, init_params(spec, seed=3))


def test_cnn_heatmap_properties(small_cnn, rng):
    spec, be = small_cnn
    for layer in ("conv1", spec.last_conv()):
        for target in range(3):
            x = rng.normal(size=(1, 24, 24))
            cam = scorecam(be, x, target, layer)
            assert cam.shape == (24, 24)
            assert cam.min() >= 0.0 and cam.max() <= 1.0
            assert cam.max() == 1.0 or not cam.any()
            assert np.array_equal(cam, scorecam(be, x, target, layer))


def test_unknown_layer(small_cnn):
    from ecgtrace.errors import LayerNotFound

    with pytest.raises(LayerNotFound):
        scorecam(small_cnn[1], np.zeros((1, 24, 24)), 0, "conv9")


def test_jet_endpoints():
    assert jet(0.0) == pytest.approx([0, 0, 0.5])
    assert jet(0.5) == pytest.approx([0.5, 1, 0.5])
    assert jet(1.0) == pytest.approx([0.5, 0, 0])


def test_overlay_alpha():
    base = ImageU8(np.full((2, 2, 1), 100, np.uint8))
    heat = np.array([[0.0, 0.5], [1.0, 0.25]])
    assert np.array_equal(overlay(base, heat, 0.0).pixels, np.full((2, 2, 3), 100))
    full = overlay(base, heat, 1.0).pixels
    assert full[0, 1].tolist() == [128, 255, 128]
    half = overlay(base, np.full((2, 2), 0.5), 0.5).pixels
    # 0.5 * 100 + 0.5 * 255 * (0.5, 1.0, 0.5)
    assert half[0, 0].tolist() == [114, 178, 114]
    with pytest.raises(DimensionMismatch):
        overlay(base, np.zeros((3, 3)))


def test_cam_report_files(small_cnn, tmp_path, rng):
    spec, be = small_cnn
    samples = []
    for i in range(3):
        x = rng.normal(size=(1, 24, 24))
        base = ImageU8(rng.integers(0, 256, (24, 24, 1), dtype=np.uint8))
        samples.append(CamSample(f"Normal/img{i}.png", x, base, 0))
    files = cam_report(be, samples, spec.last_conv(), tmp_path / "a", class_names=["a", "b", "c"])
    assert len(files) == 9
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "Normal_img0_heatmap.png" in names and "Normal_img0_overlay.png" in names
    rec = json.loads((tmp_path / "a" / "Normal_img0.json").read_text())
    assert rec["target_class"] == rec["predicted_class"]
    cam_report(be, samples, spec.last_conv(), tmp_path / "b", class_names=["a", "b", "c"])
    for p in files:
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()
