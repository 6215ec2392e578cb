import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scatterwave import features
from scatterwave.errors import InputError
from scatterwave.features import BandAxis, FeatureImage


@given(arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 12)),
              elements=st.floats(-1e6, 1e6, width=32)),
       st.sampled_from(list(BandAxis)))
def test_container_roundtrip(data, axis):
    back = features.from_bytes(features.to_bytes(FeatureImage(data, axis)))
    assert back.band_axis is axis
    assert np.array_equal(back.data, data)


def test_container_layout():
    raw = features.to_bytes(FeatureImage(np.array([[1.0, 2.0]]), BandAxis.SCATTERING_PATHS))
    assert raw[:4] == b"SWF1"
    assert raw[4:8] == (1).to_bytes(4, "little") and raw[8:12] == (2).to_bytes(4, "little")
    assert raw[12] == 2
    assert np.frombuffer(raw[13:], "<f4").tolist() == [1.0, 2.0]


def test_container_errors():
    good = features.to_bytes(FeatureImage(np.ones((2, 3))))
    with pytest.raises(InputError):
        features.from_bytes(b"XXXX" + good[4:])
    with pytest.raises(InputError):
        features.from_bytes(good[:-4])
    with pytest.raises(InputError):
        features.from_bytes(b"SW")


def test_save_load(tmp_path):
    img = FeatureImage(np.arange(6.0).reshape(2, 3), BandAxis.MEL_BINS)
    features.save(img, tmp_path / "a.swf")
    assert np.array_equal(features.load(tmp_path / "a.swf").data, img.data)


def test_csv_one_line_per_band():
    text = features.to_csv(FeatureImage(np.array([[1.0, 2.5], [3.0, 4.0]])))
    assert text == "1.0,2.5\n3.0,4.0\n"


def test_pgm_scaling_and_roundtrip():
    data = np.array([[0.0, 1.0], [2.0, 4.0]])
    pix = features.read_pgm(features.to_pgm(data))
    assert pix.tolist() == [[0, 64], [128, 255]]


def test_pgm_constant_image():
    assert features.read_pgm(features.to_pgm(np.full((3, 2), 7.0))).max() == 0


def test_image_validation():
    with pytest.raises(InputError):
        FeatureImage(np.zeros(5))
    with pytest.raises(InputError):
        FeatureImage(np.zeros((0, 3)))
