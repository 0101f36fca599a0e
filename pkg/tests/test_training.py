import csv
from dataclasses import replace

import numpy as np
import pytest

from nodereg.config import VARIANTS, ExperimentConfig
from nodereg.graph import (
    ImbalanceSpec, SbmConfig, generate_sbm, sample_fraction_split, sample_imbalanced_split,
)
from nodereg.linalg import symmetric_eigenvalues
from nodereg.training import (
    DivergenceError, evaluate, export_embeddings, norm_stats, pca_project_2d, train, with_gamma,
)


@pytest.fixture(scope="module")
def two_class():
    g = generate_sbm(SbmConfig(2, 200, 0.05, 0.005, 8, 1.0, 1.0, 0))
    return sample_fraction_split(g, [0.1, 0.2, 0.7], 0)


@pytest.fixture(scope="module")
def imbalanced():
    g = generate_sbm(SbmConfig(3, 60, 0.1, 0.02, 6, 1.5, 1.0, 1))
    return sample_imbalanced_split(g, ImbalanceSpec(10, 0.2, [2], 5, 10), 0)


def quick(epochs=20, **kw):
    return replace(ExperimentConfig(), epochs=epochs, **kw)


def test_separable_two_class_sbm(two_class):
    r = train(quick(200), two_class, 0, "ce")
    assert r.test_accuracy > 0.95


def test_same_seed_same_result(two_class):
    a = train(quick(), two_class, 3)
    b = train(quick(), two_class, 3)
    assert a.same_outcome(b)
    c = train(quick(), two_class, 4)
    assert not a.same_outcome(c)


def test_single_epoch(two_class):
    r = train(quick(1), two_class, 0)
    assert len(r.train_loss) == len(r.val_loss) == 1 and r.best_epoch == 1
    assert 0 <= r.test_accuracy <= 1


def test_zero_epochs_rejected(two_class):
    with pytest.raises(ValueError):
        train(replace(quick(), epochs=0), two_class, 0)


def test_needs_training_nodes(two_class):
    g = two_class.with_masks(np.zeros(400, bool), two_class.val_mask, two_class.test_mask)
    with pytest.raises(ValueError):
        train(quick(), g, 0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch(two_class):
    cfg = quick(5, optim=replace(ExperimentConfig().optim, lr=1e300))
    with pytest.raises(DivergenceError) as info:
        train(cfg, two_class, 0, "ce")
    assert info.value.epoch >= 0 and "epoch" in str(info.value)


@pytest.mark.parametrize("variant", VARIANTS)
def test_every_variant_trains(imbalanced, variant):
    r = train(quick(), imbalanced, 0, variant)
    assert r.variant == variant and np.isfinite(r.train_loss).all()
    for v in (r.test_accuracy, r.test_macro_f1, r.test_macro_auc):
        assert 0 <= v <= 1
    assert r.norms["overall"]["cv"] >= 0
    assert r.logits.shape[0] == imbalanced.num_nodes


def test_selection_modes(imbalanced):
    last = train(quick(), imbalanced, 0, "ce", selection="last")
    assert last.best_epoch == 20
    best = train(quick(), imbalanced, 0, "ce", selection="accuracy")
    assert 1 <= best.best_epoch <= 20


def test_patience_stops_early(imbalanced):
    r = train(quick(200, patience=3), imbalanced, 0, "ce")
    assert len(r.train_loss) < 200 and len(r.train_loss) - r.best_epoch == 3


def test_evaluate_matches_training_metrics(imbalanced):
    r = train(quick(), imbalanced, 0, "ce")
    ev = evaluate(r.params, imbalanced, "symmetric")
    assert ev["accuracy"] == r.test_accuracy and ev["macro_f1"] == r.test_macro_f1


def test_with_gamma_leaves_original():
    cfg = ExperimentConfig()
    g = with_gamma(cfg, 0.5)
    assert g.loss.nodereg.gamma == 0.5 and cfg.loss.nodereg.gamma == 1e-4


# --- norm statistics ------------------------------------------------------------------

def test_norm_stats_examples():
    eq = norm_stats(np.array([[3.0, 4.0], [5.0, 0.0]]), [0, 1])
    assert eq["overall"]["cv"] == 0.0
    s = norm_stats(np.array([[1.0, 0.0], [0.0, 3.0]]), [0, 0])
    assert s["overall"]["mean"] == 2.0 and s["overall"]["cv"] == 0.5


def test_norm_stats_partition():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, 30)
    masks = {"a": np.arange(30) < 10, "b": np.arange(30) >= 10}
    s = norm_stats(z, y, masks)
    assert sum(c["count"] for c in s["per_class"].values()) == 30
    assert sum(c["count"] for c in s["per_split"].values()) == 30
    total = sum(c["mean"] * c["count"] for c in s["per_class"].values())
    assert total / 30 == pytest.approx(s["overall"]["mean"])
    empty = norm_stats(z, y, {"none": np.zeros(30, bool)})["per_split"]["none"]
    assert empty["count"] == 0 and np.isnan(empty["cv"])


# --- PCA -----------------------------------------------------------------------------

def test_pca_two_dimensional_is_rotation():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(50, 2)) @ np.array([[2.0, 0.3], [0.3, 0.5]])
    p = pca_project_2d(z)
    c = z - z.mean(axis=0)
    np.testing.assert_allclose(np.linalg.norm(p, axis=1), np.linalg.norm(c, axis=1), atol=1e-10)
    np.testing.assert_allclose(p.var(axis=0).sum(), c.var(axis=0).sum(), rtol=1e-10)
    assert p[:, 0].var() >= p[:, 1].var()


def test_pca_rank_one():
    t = np.linspace(-1, 1, 20)[:, None]
    p = pca_project_2d(t * np.array([[1.0, 2.0, -2.0]]))
    assert np.abs(p[:, 1]).max() <= 1e-10


def test_pca_isotropic_variances():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(4000, 5))
    p = pca_project_2d(z)
    c = z - z.mean(axis=0)
    ev = symmetric_eigenvalues(c.T @ c / (len(z) - 1))
    np.testing.assert_allclose(p.var(axis=0, ddof=1), ev[:2], rtol=1e-8)


def test_pca_sign_and_shape_rules():
    z = np.array([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]])
    p = pca_project_2d(z)
    assert p.shape == (3, 2) and p[2, 0] > 0
    assert pca_project_2d(np.array([[1.0], [2.0]])).shape == (2, 2)
    with pytest.raises(ValueError):
        pca_project_2d(np.ones((1, 3)))


def test_export_embeddings(tmp_path, imbalanced):
    r = train(quick(), imbalanced, 0, "ce")
    export_embeddings(tmp_path / "e.csv", r.logits, imbalanced)
    rows = list(csv.DictReader(open(tmp_path / "e.csv")))
    assert list(rows[0]) == ["node_id", "class", "split", "norm", "pc1", "pc2"]
    assert len(rows) == imbalanced.num_nodes
    assert {r["split"] for r in rows} == {"train", "val", "test", "unlabeled"}
    assert float(rows[0]["norm"]) == pytest.approx(np.linalg.norm(r.logits[0]))
