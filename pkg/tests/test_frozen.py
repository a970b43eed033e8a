"""Regression values frozen from a reviewed run.

Each number was checked against an independent route when one exists
(direct summation for weights, the telescoping identity for the profiles).
A change here means the numerics moved, not just the formatting.
"""

import math

import numpy as np
import pytest

from besovlab.estimate_lab import CampaignConfig, FieldRecipe, campaign, generate
from besovlab.fourier_field import Grid, lp_norm
from besovlab.littlewood_paley import BesovParams, besov_norm, build_partition, bump, plateau
from besovlab.paraproduct import product_estimate_ratio
from besovlab.weighted_besov import WeightSequence
from conftest import random_field

REL = 1e-10


@pytest.fixture(scope="module")
def setup():
    g = Grid(2, 64)
    return g, build_partition(g)


def test_profiles():
    assert float(plateau(np.array(1.0))) == pytest.approx(0.6175568058366179, rel=REL)
    assert float(bump(np.array(1.0))) == pytest.approx(0.3824431941633821, rel=REL)
    assert float(bump(np.array(1.5))) == 1.0


def test_weights():
    w = WeightSequence(c=1.0, j_min=0, j_max=30)
    assert w.omega(0, 1.0) == pytest.approx(1.7904600131841641, rel=REL)
    assert w.omega(5, 1e-3) == pytest.approx(1.7963504416469882, rel=REL)
    assert WeightSequence(c=0.5, j_min=-2, j_max=30).omega(-2, 0.1) == pytest.approx(0.3282512764689937, rel=REL)


def test_besov_norms(setup):
    g, part = setup
    f = random_field(g, 0)
    assert besov_norm(f, BesovParams(0.5), part) == pytest.approx(1.6985618544909538, rel=REL)
    assert besov_norm(f, BesovParams(-0.5, 2, 2), part) == pytest.approx(0.1715317912613112, rel=REL)


def test_product_ratio(setup):
    g, part = setup
    r = product_estimate_ratio(random_field(g, 1), random_field(g, 2), 0.5, 0.5, 2, part)
    assert r == pytest.approx(0.1222538643824556, rel=REL)


def test_generator_sample(setup):
    g, _ = setup
    f = generate(FieldRecipe(seed=0, spectrum="packets", j=2), g)
    assert lp_norm(f, math.inf) == pytest.approx(1.0, rel=1e-14)
    assert lp_norm(f, 2) == pytest.approx(0.052342181144476405, rel=REL)


def test_campaign_summary():
    rep = campaign("product", CampaignConfig(trials=5, grid=64))
    assert rep.max_ratio == pytest.approx(1.4598335999044505, rel=REL)
    assert rep.scale_drift == pytest.approx(0.05545786507688699, rel=REL)
