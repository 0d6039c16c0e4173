import math

import numpy as np
import pytest
from skimage.draw import circle_perimeter

from conftest import disc, discs_labels
from logtally.errors import GenerationFailedError, InvalidInputError
from logtally.hough import HoughParams, boundary_pixels, detect_centroids_fixed_radius, detect_circles
from logtally.morphology import GroundTruthMode, make_ground_truth
from logtally.raster import BinaryMask, GrayImage, LabelMap
from logtally.synthgen import SynthSpec, generate


def test_boundary_pixels():
    assert boundary_pixels(BinaryMask(np.zeros((5, 5), dtype=bool))) == []
    one = np.zeros((5, 5), dtype=bool)
    one[2, 3] = True
    assert boundary_pixels(BinaryMask(one)) == [(2, 3)]
    block = np.zeros((6, 6), dtype=bool)
    block[1:5, 1:5] = True
    pts = boundary_pixels(BinaryMask(block))
    assert len(pts) == 12
    assert not {(2, 2), (2, 3), (3, 2), (3, 3)} & set(pts)


def test_boundary_counts_frame_edge():
    pts = boundary_pixels(BinaryMask(np.ones((3, 3), dtype=bool)))
    assert len(pts) == 8 and (1, 1) not in pts


def test_params_validation():
    with pytest.raises(InvalidInputError):
        HoughParams(r_min=10, r_max=5)
    with pytest.raises(InvalidInputError):
        HoughParams(vote_threshold=0)
    with pytest.raises(InvalidInputError):
        HoughParams(nms_min_center_dist=-1)
    with pytest.raises(InvalidInputError):
        HoughParams(radius_step=0)
    assert HoughParams().nms_distance == 5.0


def test_empty_mask_has_no_circles():
    assert detect_circles(BinaryMask(np.zeros((64, 64), dtype=bool))) == []


def test_circle_outline():
    m = np.zeros((128, 128), dtype=bool)
    rr, cc = circle_perimeter(64, 64, 20)
    m[rr, cc] = True
    found = detect_circles(BinaryMask(m))
    assert len(found) == 1
    c = found[0]
    assert abs(c.center[0] - 64) <= 2 and abs(c.center[1] - 64) <= 2
    assert abs(c.radius - 20) <= 2


def test_two_filled_discs():
    lab = discs_labels((120, 160), [((60, 35), 10), ((60, 115), 30)])
    found = detect_circles(BinaryMask(lab > 0))
    assert len(found) == 2
    by_radius = sorted(found, key=lambda c: c.radius)
    assert abs(by_radius[0].radius - 10) <= 2 and abs(by_radius[1].radius - 30) <= 2
    assert math.dist(by_radius[0].center, (60, 35)) <= 2
    assert math.dist(by_radius[1].center, (60, 115)) <= 2


def test_output_sorted_and_separated():
    m = disc((100, 100), (30, 30), 12) | disc((100, 100), (70, 65), 18)
    params = HoughParams(nms_min_center_dist=8)
    found = detect_circles(BinaryMask(m), params)
    scores = [c.score for c in found]
    assert scores == sorted(scores, reverse=True)
    for i, a in enumerate(found):
        assert params.r_min <= a.radius <= params.r_max and a.score > 0
        for b in found[i + 1:]:
            assert math.dist(a.center, b.center) >= 8


def test_zero_nms_reports_duplicates():
    m = BinaryMask(disc((80, 80), (40, 40), 15))
    assert len(detect_circles(m, HoughParams(nms_min_center_dist=0))) > 1


def test_translation_equivariance():
    base = disc((90, 90), (40, 38), 14) | disc((90, 90), (20, 70), 7)
    shifted = np.roll(np.roll(base, 6, axis=0), -5, axis=1)
    a = detect_circles(BinaryMask(base))
    b = detect_circles(BinaryMask(shifted))
    assert [(c.center[0] + 6, c.center[1] - 5, c.radius) for c in a] == [(c.center[0], c.center[1], c.radius) for c in b]


def test_fixed_radius_on_gray_gradient():
    assert detect_centroids_fixed_radius(GrayImage(np.zeros((64, 64), dtype=np.uint8)), 10) == []
    lab = discs_labels((64, 64), [((32, 30), 20)])
    gray = make_ground_truth(LabelMap(lab, 1), GroundTruthMode('gray-gradient-full'))
    found = detect_centroids_fixed_radius(gray, 10)
    assert len(found) == 1
    assert math.dist(found[0].center, (32, 30)) <= 2

    lab2 = discs_labels((80, 140), [((40, 35), 20), ((40, 100), 20)])
    gray2 = make_ground_truth(LabelMap(lab2, 2), GroundTruthMode('gray-gradient-full'))
    assert len(detect_centroids_fixed_radius(gray2, 10)) == 2


def test_fixed_radius_must_lie_in_range():
    with pytest.raises(InvalidInputError):
        detect_centroids_fixed_radius(GrayImage(np.zeros((8, 8), dtype=np.uint8)), 80)


def test_synthetic_scenes_detection_rate():
    hits = total = 0
    seed = 0
    while total < 200:
        seed += 1
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        spec = SynthSpec(width=256, height=256, n_logs=n, radius_range=(5, 60), min_gap=10, seed=seed)
        try:
            scene = generate(spec)
        except GenerationFailedError:
            continue
        total += 1
        found = detect_circles(scene.gt_mask)
        logs = scene.manifest['logs']
        if len(found) != len(logs):
            continue
        ok = True
        for entry in logs:
            best = min(found, key=lambda c: math.dist(c.center, entry['center']))
            if math.dist(best.center, entry['center']) > 2 or abs(best.radius - entry['radius']) > 2:
                ok = False
        hits += ok
    assert hits >= 190
