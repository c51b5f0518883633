import math

import numpy as np
import pytest

from leafsev.errors import SpecError
from leafsev.raster import encode_png
from leafsev.synth import Leaf, Spot, SynthSpec, leaf_fixture, render


def test_ten_percent_fixture_counts():
    img, truth, disease = render(leaf_fixture(10, seed=0))
    assert abs(truth.leaf_px - 120_000) < 300
    assert abs(truth.disease_px - 13_333) < 150
    assert abs(truth.ds_true - 10.0) <= 0.1
    assert disease.sum() == truth.disease_px


@pytest.mark.parametrize("ds", [2, 5, 20, 35, 50])
def test_fixture_hits_target(ds):
    _, truth, _ = render(leaf_fixture(ds, seed=ds))
    assert abs(truth.ds_true - ds) <= 0.25


def test_zero_spots():
    _, truth, disease = render(leaf_fixture(0, seed=1))
    assert truth.ds_true == 0 and truth.disease_px == 0 and not disease.any()


def test_pixel_counts_match_brute_force():
    spec = SynthSpec(width=60, height=40, leaf=Leaf(30, 20, 25, 15, angle=10),
                     spots=[Spot(30, 20, 5), Spot(40, 18, 3)], noise=0)
    img, truth, _ = render(spec)
    t = math.radians(10)
    leaf = disease = 0
    for y in range(40):
        for x in range(60):
            u = (x - 30) * math.cos(t) + (y - 20) * math.sin(t)
            v = -(x - 30) * math.sin(t) + (y - 20) * math.cos(t)
            if (u / 25) ** 2 + (v / 15) ** 2 <= 1:
                leaf += 1
                disease += math.hypot(x - 30, y - 20) <= 5 or math.hypot(x - 40, y - 18) <= 3
    assert truth.disease_px == disease
    assert truth.leaf_px == leaf - disease
    assert img.pixel(0, 0) == (255, 255, 255)
    assert img.pixel(30, 20) == (228, 204, 62)


def test_deterministic_png():
    spec = leaf_fixture(20, seed=4, width=320, height=180, leaf_px=7_500)
    assert encode_png(render(spec)[0]) == encode_png(render(spec)[0])


def test_spot_outside_leaf():
    spec = SynthSpec(width=60, height=40, leaf=Leaf(30, 20, 10, 5), spots=[Spot(5, 5, 3)])
    with pytest.raises(SpecError, match="outside the leaf"):
        render(spec)


def test_spot_same_colour_as_background():
    spec = SynthSpec(width=60, height=40, leaf=Leaf(30, 20, 20, 10),
                     spots=[Spot(30, 20, 3, color=(255, 255, 255))])
    with pytest.raises(SpecError):
        render(spec)


def test_spec_dict_round_trip():
    spec = leaf_fixture(5, seed=2)
    back = SynthSpec.from_dict(spec.to_dict())
    assert np.array_equal(render(back)[0].data, render(spec)[0].data)


def test_spec_from_bad_dict():
    with pytest.raises(SpecError):
        SynthSpec.from_dict({"width": 10})
