import json

import numpy as np
import pytest

from reluapprox.dataset import (
    GENERAL,
    NEGATIVE_CORRELATION,
    ORTHO_SEPARABLE,
    Dataset,
    LossModel,
    classify_dataset,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from reluapprox.errors import BadLabel, MalformedRow, ZeroSample


def test_load_two_point_line(tmp_path):
    path = tmp_path / "toy.csv"
    path.write_text("x1,y\n1,1\n-1,-1\n")
    ds = load_dataset(str(path))
    assert (ds.n, ds.d) == (2, 1)
    assert np.array_equal(ds.X_plus, [[1.0]])
    assert np.array_equal(ds.X_minus, [[-1.0]])


def test_load_rejects_bad_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,y\n1,1\n0.5,0\n")
    with pytest.raises(BadLabel):
        load_dataset(str(path))


def test_load_rejects_wrong_arity(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x1,x2,y\n1,2,1\n1,1\n")
    with pytest.raises(MalformedRow):
        load_dataset(str(path))


def test_zero_row_rejected():
    with pytest.raises(ZeroSample):
        Dataset([[0.0, 0.0], [1.0, 0.0]], [1, -1])


def test_json_round_trip(tmp_path):
    ds = generate_synthetic(NEGATIVE_CORRELATION, 8, 3, seed=4)
    path = tmp_path / "ds.json"
    save_dataset(ds, str(path))
    back = load_dataset(str(path))
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)


def test_csv_round_trip(tmp_path):
    ds = generate_synthetic(GENERAL, 6, 2, seed=1)
    path = tmp_path / "ds.csv"
    save_dataset(ds, str(path))
    back = load_dataset(str(path))
    assert np.array_equal(back.X, ds.X)
    assert np.array_equal(back.y, ds.y)


def test_json_schema_fields():
    ds = Dataset([[1.0], [-1.0]], [1, -1])
    obj = json.loads(ds.to_json())
    assert set(obj) == {"n", "d", "X", "y"}


def test_classify_two_point_line():
    ds = Dataset([[1.0], [-1.0]], [1, -1])
    assert classify_dataset(ds, 0.0).tag == ORTHO_SEPARABLE


def test_classify_general_with_witness():
    ds = Dataset([[1.0, 0.0], [0.5, 0.866]], [1, -1])
    cls = classify_dataset(ds, 0.0)
    assert cls.tag == GENERAL
    assert cls.witness == (1, 0)  # cross product 0.5 > 0


def test_classify_three_point_gram():
    # x1'x2 = 1 >= 0, x1'x3 = -1 <= 0, x2'x3 = -0.8 <= 0: every Gram block
    # satisfies its sign condition, hence orthogonal separable
    ds = Dataset([[1.0, 0.0], [1.0, 1.0], [-1.0, 0.2]], [1, 1, -1])
    assert classify_dataset(ds, 0.0).tag == ORTHO_SEPARABLE


def test_classify_monotone_in_tol():
    order = {ORTHO_SEPARABLE: 0, NEGATIVE_CORRELATION: 1, GENERAL: 2}
    rng = np.random.default_rng(3)
    for _ in range(25):
        n, d = int(rng.integers(2, 8)), int(rng.integers(1, 4))
        ds = Dataset(rng.standard_normal((n, d)) + 0.1, np.where(rng.random(n) < 0.5, 1, -1))
        tols = [0.0, 0.01, 0.1, 1.0, 10.0]
        ranks = [order[classify_dataset(ds, t).tag] for t in tols]
        assert all(a >= b for a, b in zip(ranks, ranks[1:]))


@pytest.mark.parametrize("kind,n,d,seed", [
    (ORTHO_SEPARABLE, 8, 3, 7),
    (GENERAL, 6, 2, 1),
    (NEGATIVE_CORRELATION, 10, 3, 2),
])
def test_generate_classifies_as_requested(kind, n, d, seed):
    ds = generate_synthetic(kind, n, d, seed)
    assert classify_dataset(ds, tol=0.0).tag == kind


def test_generate_deterministic():
    a = generate_synthetic(ORTHO_SEPARABLE, 8, 3, 7)
    b = generate_synthetic(ORTHO_SEPARABLE, 8, 3, 7)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_generated_ortho_gram_signs_exact():
    for seed in range(10):
        ds = generate_synthetic(ORTHO_SEPARABLE, 9, 4, seed)
        Xp, Xm = ds.X_plus, ds.X_minus
        assert np.all(Xp @ Xp.T >= 0.0)
        assert np.all(Xm @ Xm.T >= 0.0)
        assert np.all(Xm @ Xp.T <= 0.0)


def test_split_merge_dual_round_trip():
    ds = generate_synthetic(GENERAL, 7, 2, seed=9)
    rng = np.random.default_rng(0)
    lam = rng.random(ds.n) * ds.y
    lp, lm = ds.split_dual(lam)
    assert np.all(lp >= 0) and np.all(lm >= 0)
    assert np.allclose(ds.merge_dual(lp, lm), lam)


def test_loss_models():
    hinge = LossModel.hinge(0.5)
    assert hinge.box_upper == 1.0
    z = np.array([-1.0, 0.0, 0.5, 2.0])
    assert np.allclose(hinge.ell(z), [2.0, 1.0, 0.5, 0.0])
    sq = LossModel.squared_hinge(0.5)
    assert np.allclose(sq.ell(z), [4.0, 1.0, 0.25, 0.0])
    # prox solves argmin ell(x) + rho/2 (x-v)^2: check by grid
    for loss in (hinge, sq):
        for v in (-1.0, 0.3, 0.9, 1.5):
            got = float(loss.prox(np.array([v]), 2.0)[0])
            grid = np.linspace(-3, 3, 40001)
            want = grid[np.argmin(loss.ell(grid) + 1.0 * (grid - v) ** 2)]
            assert abs(got - want) < 2e-4


def test_squared_hinge_g_matches_conjugate():
    # g(lam) = -ell*(-lam) = -sup_z(-lam z - ell(z)), checked on a grid
    sq = LossModel.squared_hinge(1.0)
    z = np.linspace(-30, 30, 300001)
    for lam in (0.0, 0.4, 1.0, 1.7):
        g_direct = -np.max(-lam * z - sq.ell(z))
        assert abs(float(sq.g(np.array([lam]))[0]) - g_direct) < 1e-6


def test_hinge_g_scaling_constant():
    # hinge has C = 1: g(a lam) = a lam >= a * 1 * g(lam) on the box
    hinge = LossModel.hinge(1.0)
    lam = np.array([0.3, 0.9])
    for a in (0.2, 0.7, 1.0):
        assert np.all(hinge.g(a * lam) >= a * hinge.C * hinge.g(lam) - 1e-12)
