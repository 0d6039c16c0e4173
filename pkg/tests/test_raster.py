import numpy as np
import pytest
from PIL import Image

from logtally.errors import DecodeError, InvalidInputError
from logtally.raster import (BinarizePolicy, BinaryMask, GrayImage, LabelMap, RgbImage, binarize, encode_png,
                             mask_difference, raster_relabel, read_image, read_label_array, render_mask,
                             resize_nearest, to_gray, write_image)


def rgb(*pixels):
    return RgbImage(np.array([pixels], dtype=np.uint8))


def test_all_black_luma_is_empty():
    img = RgbImage(np.zeros((4, 4, 3), dtype=np.uint8))
    mask = binarize(img, BinarizePolicy('luma', 127))
    assert mask.shape == (4, 4)
    assert mask.count() == 0


def test_red_dominant_strict():
    img = rgb((200, 0, 0), (200, 210, 0), (127, 0, 0), (128, 0, 0), (200, 200, 0))
    assert binarize(img).data.tolist() == [[True, False, False, True, False]]


def test_luma_threshold_is_strict():
    img = rgb((128, 128, 128), (127, 127, 127))
    assert binarize(img, BinarizePolicy('luma', 127)).data.tolist() == [[True, False]]


def test_gray_image_uses_value_under_every_mode():
    img = GrayImage(np.array([[128, 127]], dtype=np.uint8))
    for policy in (BinarizePolicy('luma'), BinarizePolicy('red-dominant'), BinarizePolicy('channel', channel=1)):
        assert binarize(img, policy).data.tolist() == [[True, False]]


def test_channel_mode():
    img = rgb((0, 200, 0), (200, 0, 0))
    assert binarize(img, BinarizePolicy('channel', 127, channel=1)).data.tolist() == [[True, False]]


@pytest.mark.parametrize('kwargs', [
    {'mode': 'hue'},
    {'threshold': 256},
    {'threshold': -1},
    {'mode': 'channel'},
    {'mode': 'channel', 'channel': 3},
])
def test_invalid_policy(kwargs):
    with pytest.raises(InvalidInputError):
        BinarizePolicy(**kwargs)


def test_zero_dimension_rejected():
    with pytest.raises(InvalidInputError):
        GrayImage(np.zeros((0, 4), dtype=np.uint8))
    with pytest.raises(InvalidInputError):
        RgbImage(np.zeros((3, 0, 3), dtype=np.uint8))


def test_to_gray_examples():
    g = to_gray(rgb((255, 255, 255), (0, 0, 0), (100, 100, 100)))
    assert g.data.tolist() == [[255, 0, 100]]


def test_to_gray_of_gray_triples_is_identity():
    v = np.arange(256, dtype=np.uint8)
    img = RgbImage(np.stack([v, v, v], axis=-1)[None, :, :])
    assert np.array_equal(to_gray(img).data[0], v)


def test_render_then_binarize_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(20):
        m = BinaryMask(rng.random((9, 13)) < 0.4)
        assert binarize(render_mask(m)) == m
        assert binarize(render_mask(m), BinarizePolicy('luma')) == m


def test_images_are_frozen():
    g = GrayImage(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        g.data[0, 0] = 1


def test_labelmap_contiguity_enforced():
    with pytest.raises(InvalidInputError):
        LabelMap(np.array([[0, 2]]), 2)
    with pytest.raises(InvalidInputError):
        LabelMap(np.array([[0, 1, 3]]), 2)
    with pytest.raises(InvalidInputError):
        LabelMap(np.array([[-1, 1]]), 1)


def test_from_array_renumbers_in_raster_order():
    lm = LabelMap.from_array(np.array([[0, 7, 0], [3, 7, 9]]))
    assert lm.component_count == 3
    assert lm.labels.tolist() == [[0, 1, 0], [2, 1, 3]]


def test_raster_relabel_empty():
    arr, k = raster_relabel(np.zeros((3, 3), dtype=np.int64))
    assert k == 0 and not arr.any()


def test_mask_difference():
    a = BinaryMask(np.array([[1, 1, 0]], dtype=bool))
    b = BinaryMask(np.array([[1, 0, 1]], dtype=bool))
    assert mask_difference(a, b).data.tolist() == [[False, True, True]]
    with pytest.raises(InvalidInputError):
        mask_difference(a, BinaryMask(np.zeros((2, 3), dtype=bool)))


def test_png_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    color = RgbImage(rng.integers(0, 256, (5, 7, 3), dtype=np.uint8))
    gray = GrayImage(rng.integers(0, 256, (5, 7), dtype=np.uint8))
    assert read_image(write_image(tmp_path / 'c.png', color)) == color
    assert read_image(write_image(tmp_path / 'g.png', gray)) == gray
    assert read_image(encode_png(gray)) == gray


def test_pnm_round_trip(tmp_path):
    gray = GrayImage(np.arange(12, dtype=np.uint8).reshape(3, 4) * 20)
    color = RgbImage(np.full((2, 2, 3), (10, 20, 30), dtype=np.uint8))
    assert read_image(write_image(tmp_path / 'g.pgm', gray)) == gray
    assert read_image(write_image(tmp_path / 'c.ppm', color)) == color
    assert (tmp_path / 'g.pgm').read_bytes().startswith(b'P5')
    assert (tmp_path / 'c.ppm').read_bytes().startswith(b'P6')


def test_hand_written_pgm(tmp_path):
    p = tmp_path / 'hand.pgm'
    p.write_bytes(b'P5\n3 2\n255\n' + bytes([0, 128, 255, 255, 0, 127]))
    img = read_image(p)
    assert isinstance(img, GrayImage)
    assert binarize(img).data.tolist() == [[False, True, True], [True, False, False]]


def test_sixteen_bit_labels(tmp_path):
    labels = np.zeros((4, 4), dtype=np.int32)
    labels[0, 0] = 1
    labels[3, 2:] = 300 % 256 + 1
    lm = LabelMap.from_array(labels)
    path = write_image(tmp_path / 'inst.png', lm)
    raw = read_label_array(path)
    assert raw is not None
    assert LabelMap.from_array(raw) == lm
    as_mask = read_image(path)
    assert isinstance(as_mask, GrayImage)
    assert np.array_equal(as_mask.data > 0, labels > 0)


def test_eight_bit_has_no_label_array(tmp_path):
    path = write_image(tmp_path / 'm.png', BinaryMask(np.eye(3, dtype=bool)))
    assert read_label_array(path) is None


@pytest.mark.parametrize('payload', [b'', b'not an image', None])
def test_decode_errors(payload):
    if payload is None:
        payload = encode_png(GrayImage(np.zeros((64, 64), dtype=np.uint8)))[:40]
    with pytest.raises(DecodeError):
        read_image(payload)


def test_oversized_image_is_a_decode_error(monkeypatch):
    payload = encode_png(GrayImage(np.zeros((64, 64), dtype=np.uint8)))
    monkeypatch.setattr(Image, 'MAX_IMAGE_PIXELS', 1000)
    with pytest.raises(DecodeError):
        read_image(payload)


def test_missing_file_is_os_error(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_image(tmp_path / 'nope.png')


def test_resize_nearest():
    g = GrayImage(np.array([[0, 255], [255, 0]], dtype=np.uint8))
    big = resize_nearest(g, (4, 4))
    assert big.data.tolist() == [[0, 0, 255, 255], [0, 0, 255, 255], [255, 255, 0, 0], [255, 255, 0, 0]]
    assert resize_nearest(g, (2, 2)) is g
    lm = LabelMap.from_array(np.array([[1, 0], [0, 2]]))
    assert resize_nearest(lm, (4, 4)).component_count == 2
    with pytest.raises(InvalidInputError):
        resize_nearest(g, (0, 3))
