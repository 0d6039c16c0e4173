import math
import random

import pytest

from logtally.components import ComponentStats
from logtally.errors import InvalidInputError
from logtally.volume import LogDims, ScaleCalibration, dims_from_components, log_volume, pile_volume


def stat(label, area):
    return ComponentStats(label=label, area=area, centroid=(0.0, 0.0), bbox=(0, 0, 0, 0),
                          equivalent_radius=math.sqrt(area / math.pi))


def test_log_volume_examples():
    assert log_volume(LogDims(1, 1)) == pytest.approx(math.pi)
    assert log_volume(LogDims(0.15, 2.4)) == pytest.approx(0.16964600, abs=1e-8)


def test_pile_volume_sums_logs():
    pile = pile_volume([LogDims(1, 1)] * 5)
    assert pile.total == pytest.approx(5 * math.pi)
    assert pile.log_count == 5 and len(pile.per_log) == 5
    d = pile.to_dict()
    assert d['log_count'] == 5 and d['total_m3'] == pytest.approx(5 * math.pi)


def test_invalid_dims():
    for r, depth in ((0, 1), (1, 0), (-1, 2)):
        with pytest.raises(InvalidInputError):
            LogDims(r, depth)
    with pytest.raises(InvalidInputError):
        pile_volume([])
    with pytest.raises(InvalidInputError):
        ScaleCalibration(0)


def test_dims_from_component_area():
    dims = dims_from_components([stat(1, math.pi * 100 ** 2)], ScaleCalibration(100), 2.0)
    assert len(dims) == 1
    assert dims[0].radius == pytest.approx(1.0) and dims[0].depth == 2.0
    with pytest.raises(InvalidInputError):
        dims_from_components([stat(1, 10)], ScaleCalibration(100), 0)


def test_scale_consistency():
    # doubling pixels-per-meter quarters the face area, hence the volume
    stats = [stat(1, 400), stat(2, 900), stat(3, 1600)]
    coarse = pile_volume(dims_from_components(stats, ScaleCalibration(50), 3.0))
    fine = pile_volume(dims_from_components(stats, ScaleCalibration(100), 3.0))
    assert coarse.total == pytest.approx(4 * fine.total)
    assert coarse.total == pytest.approx(sum(a for a in (400, 900, 1600)) / 50 ** 2 * 3.0)


def test_pile_volume_invariants():
    assert pile_volume([LogDims(1, 1), LogDims(2, 1)]).total == pytest.approx(5 * math.pi)
    base = log_volume(LogDims(0.3, 1.5))
    assert log_volume(LogDims(0.6, 1.5)) == pytest.approx(4 * base)
    assert log_volume(LogDims(0.3, 3.0)) == pytest.approx(2 * base)
    rng = random.Random(7)
    for _ in range(50):
        a = [LogDims(rng.uniform(0.05, 0.6), rng.uniform(0.5, 6.0)) for _ in range(rng.randint(1, 12))]
        b = [LogDims(rng.uniform(0.05, 0.6), rng.uniform(0.5, 6.0)) for _ in range(rng.randint(1, 12))]
        total = pile_volume(a).total
        assert abs(pile_volume(rng.sample(a, len(a))).total - total) <= 1e-9
        assert abs(pile_volume(a + b).total - (total + pile_volume(b).total)) <= 1e-9
