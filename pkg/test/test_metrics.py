import json
import math

import numpy as np
import pandas as pd
import pytest

from errors import ConfigError, DataError, ShapeError
from ZhiBiao.achieve import (Footprint, OrientedBox, ade, clip_polygon, convert_seconds, evaluate, fde,
                             oriented_iou, pearson, polygon_area, save_reports, trajectory_iou)


def test_displacement_errors():
    pred = np.zeros((3, 4))
    truth = np.array([[3.0, 4.0, 1.0, 1.0], [0.0, 0.0, 2.0, 2.0], [0.0, 1.0, 0.0, 0.0]])
    assert ade(pred, truth) == pytest.approx(2.0)
    assert fde(pred, truth) == pytest.approx(1.0)
    batch = np.stack([truth, truth])
    np.testing.assert_allclose(ade(np.zeros_like(batch), batch), [2.0, 2.0])
    with pytest.raises(ShapeError):
        ade(np.zeros((3, 2)), np.zeros((2, 2)))


def test_polygon_helpers():
    square = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polygon_area(square) == pytest.approx(1.0)
    assert polygon_area(square[::-1]) == pytest.approx(-1.0)
    shifted = square + 0.5
    assert polygon_area(clip_polygon(shifted, square)) == pytest.approx(0.25)


def test_iou_examples():
    box = OrientedBox(0.0, 0.0, 0.3)
    assert oriented_iou(box, box) == pytest.approx(1.0)
    shifted = OrientedBox(0.29 * math.cos(0.3), 0.29 * math.sin(0.3), 0.3)
    assert oriented_iou(box, shifted) == pytest.approx(1 / 3)
    crossed = OrientedBox(0.0, 0.0, 0.3 + math.pi / 2)
    assert oriented_iou(box, crossed) == pytest.approx(0.31 / (2 * 0.58 - 0.31))
    assert oriented_iou(box, OrientedBox(5.0, 5.0, 0.0)) == 0.0
    assert oriented_iou(box, OrientedBox(0.0, 0.0, 0.3 + math.pi)) == pytest.approx(1.0)


def test_degenerate_boxes():
    with pytest.raises(DataError):
        OrientedBox(0.0, 0.0, 0.0, length=0.0)
    with pytest.raises(ConfigError):
        Footprint(length=0.0)


def _inside(box, pts):
    c, s = math.cos(box.theta), math.sin(box.theta)
    dx, dy = pts[:, 0] - box.x, pts[:, 1] - box.y
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    return (np.abs(lx) <= box.length / 2) & (np.abs(ly) <= box.width / 2)


def _random_box(rng, spread):
    return OrientedBox(*rng.uniform(-spread, spread, 2), rng.uniform(-np.pi, np.pi))


def test_iou_is_symmetric_and_rigid():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = _random_box(rng, 0.1), _random_box(rng, 0.4)
        assert oriented_iou(a, b) == pytest.approx(oriented_iou(b, a), abs=1e-12)
        phi, shift = rng.uniform(-np.pi, np.pi), rng.uniform(-20.0, 20.0, 2)
        c, s = math.cos(phi), math.sin(phi)

        def move(box):
            return OrientedBox(c * box.x - s * box.y + shift[0], s * box.x + c * box.y + shift[1], box.theta + phi)

        assert oriented_iou(move(a), move(b)) == pytest.approx(oriented_iou(a, b), abs=1e-9)


def test_iou_decreases_with_heading_difference():
    box = OrientedBox(1.0, -2.0, 0.7)
    angles = np.linspace(0.0, np.pi / 2, 91)
    values = np.array([oriented_iou(box, OrientedBox(1.0, -2.0, 0.7 + d)) for d in angles])
    mirrored = np.array([oriented_iou(box, OrientedBox(1.0, -2.0, 0.7 - d)) for d in angles])
    assert values[0] == pytest.approx(1.0)
    assert values[-1] == pytest.approx(0.31 / (2 * 0.58 - 0.31))
    assert np.all(np.diff(values) < 0)
    np.testing.assert_allclose(mirrored, values, atol=1e-12)


@pytest.mark.slow
def test_iou_matches_rasterized_overlap():
    rng = np.random.default_rng(0)
    grid = np.linspace(-0.7, 0.7, 2001)
    xx, yy = np.meshgrid(grid, grid)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    for _ in range(20):
        # 两个框都落在栅格范围内
        a, b = _random_box(rng, 0.1), _random_box(rng, 0.25)
        ia, ib = _inside(a, pts), _inside(b, pts)
        raster = (ia & ib).sum() / (ia | ib).sum()
        assert oriented_iou(a, b) == pytest.approx(raster, abs=1e-3)


def test_trajectory_iou_averages_steps():
    truth = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    pred = np.array([[0.0, 0.0, 0.0], [1.29, 0.0, 0.0]])
    assert trajectory_iou(pred, truth) == pytest.approx((1.0 + 1 / 3) / 2)
    assert trajectory_iou(pred, truth, Footprint(length=2.0, width=1.0)) == pytest.approx(
        (1.0 + 1.71 / 2.29) / 2)
    with pytest.raises(ShapeError):
        trajectory_iou(pred[:, :2], truth[:, :2])


def test_evaluate_with_strata(tmp_path):
    truth = np.zeros((2, 3, 4))
    pred = truth.copy()
    pred[1, :, 1] = 1.0
    strata = pd.DataFrame({'raceline': ['center', 'race'], 'controller': ['stanley', 'stanley'],
                           'speed': [1.0, 1.0]}, index=[5, 9])
    report = evaluate(pred, truth, strata=strata)
    assert report.count == 2
    assert report.ade == pytest.approx(0.5)
    assert report.fde == pytest.approx(0.5)
    assert report.iou == pytest.approx(0.5)
    assert report.per_sample['raceline'].tolist() == ['center', 'race']
    paths = save_reports({'pcmp': report}, tmp_path / 'eval')
    with open(paths[0], encoding='utf-8') as f:
        summary = json.load(f)['pcmp']
    assert summary['count'] == 2
    assert summary['ade'] == 0.5
    assert summary['iou'] == pytest.approx(0.5)
    assert pd.read_csv(paths[1])['ade'].tolist() == [0.0, 1.0]
    with pytest.raises(DataError):
        evaluate(np.zeros((0, 3, 4)), np.zeros((0, 3, 4)))


def test_pearson():
    rng = np.random.default_rng(2)
    x = rng.normal(size=50)
    y = 0.5 * x + rng.normal(size=50)
    cov = np.mean((x - x.mean()) * (y - y.mean()))
    assert pearson(x, y) == pytest.approx(cov / (x.std() * y.std()))
    assert math.isnan(pearson(x, np.ones(50)))
    with pytest.raises(ShapeError):
        pearson([1.0, 2.0], [1.0])


def test_convert_seconds():
    assert convert_seconds(3725.5) == (1.0, 2.0, 5.5)
    assert convert_seconds(59) == (0, 0, 59)
