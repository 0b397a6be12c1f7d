"""Smoke tests for the python bindings: each main operation runs end to end
and returns sane values. Heavy numerical verification lives in the C++
suites."""

import json
import pathlib

import numpy as np
import pytest

import stance


def rng(seed=0):
    return np.random.default_rng(seed)


def test_fit_pca_orthonormal_loadings():
    x = rng(1).normal(size=(40, 12))
    model = stance.fit_pca(x, 5, seed=3)
    load = np.asarray(model.loadings)
    assert load.shape == (12, 5)
    gram = load.T @ load
    assert np.abs(gram - np.eye(5)).max() < 1e-10
    variances = np.asarray(model.variances)
    assert (np.diff(variances) <= 1e-12).all()
    assert model.total_variance > 0


def test_transform_centers_training_scores():
    x = rng(2).normal(size=(60, 8))
    model = stance.fit_pca(x, 4, seed=1)
    scores = np.asarray(stance.transform(model, x))
    assert scores.shape == (60, 4)
    assert np.abs(scores.mean(axis=0)).max() < 1e-9


def test_selection_helpers():
    k, shortfall = stance.select_by_variance(np.array([6.0, 3.0, 1.0]), 10.0, 0.95)
    assert (k, shortfall) == (3, False)
    k, weak = stance.scree_select(np.array([10.0, 9.0, 8.0, 1.0, 0.9, 0.8]))
    assert k == 3
    assert not weak


def test_percentile_filter_nearest_rank():
    x = np.zeros((10, 2))
    x[:, 0] = np.arange(1, 11)
    filtered, kept = stance.percentile_filter(x, 90.0)
    assert kept == [8, 9]
    assert filtered.shape == (2, 2)


def test_hdbscan_two_blobs():
    g = rng(3)
    a = g.normal(size=(50, 2))
    b = g.normal(size=(50, 2)) + [10.0, 0.0]
    x = np.vstack([a, b])
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    labels, stabilities, sizes = stance.hdbscan(d, min_cluster_size=20)
    labels = np.asarray(labels)
    assert set(labels[:50]) != set(labels[50:])
    assert len(sizes) == 2
    assert sorted(sizes) == [50, 50]
    truth = [0] * 50 + [1] * 50
    assert stance.adjusted_rand_index(list(labels), truth) == 1.0


def test_cosine_distances_bounds():
    x = rng(4).normal(size=(30, 4))
    d = stance.cosine_distances(x)
    assert d.shape == (30, 30)
    assert np.allclose(d, d.T)
    assert d.min() >= 0.0 and d.max() <= 2.0
    assert np.abs(np.diag(d)).max() == 0.0


def test_louvain_two_cliques():
    edges = []
    for a in range(5):
        for b in range(a + 1, 5):
            edges.append((a, b, 1.0))
            edges.append((5 + a, 5 + b, 1.0))
    edges.append((0, 5, 1.0))
    community, q = stance.louvain(10, edges, seed=7)
    assert len(set(community[:5])) == 1
    assert len(set(community[5:])) == 1
    assert community[0] != community[5]
    assert q > 0.3
    # trivial partition scores exactly zero
    assert stance.modularity(10, edges, [0] * 10) == 0.0


def test_pipeline_end_to_end(tmp_path: pathlib.Path):
    planted = {
        "seed": 11,
        "n_users": 300,
        "n_influencers_per_sample": 24,
        "k_stances": 2,
        "cross_sample_participation": 0.9,
        "events_per_active_user": 10.0,
        "in_affinity": 0.35,
        "out_affinity": 0.01,
        "samples": [
            {"id": "alpha", "start": "2022-01-01", "end": "2022-01-22"},
            {"id": "beta", "start": "2022-02-01", "end": "2022-02-22"},
        ],
    }
    planted_path = tmp_path / "planted.json"
    planted_path.write_text(json.dumps(planted))
    corpus = tmp_path / "corpus"
    user_ids, stances = stance.generate_planted(str(planted_path), str(corpus))
    assert len(user_ids) == 300
    assert set(stances) == {0, 1}

    config = {
        "seed": 11,
        "samples": [
            {
                "id": s["id"],
                "start": s["start"],
                "end": s["end"],
                "files": [str(corpus / (s["id"] + ".jsonl"))],
            }
            for s in planted["samples"]
        ],
        "cluster": {"percentile": 50.0, "min_cluster_size": 10},
        "common_components": 4,
    }
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps(config))

    manifest = json.loads(stance.run_pipeline(str(config_path), str(tmp_path / "run"), threads=2))
    assert manifest["effective_config"]["threshold_fraction"] == 0.001
    assert manifest["stages"]["cluster"]["clusters"] >= 1
    assert (tmp_path / "run" / "scores" / "common.csv").exists()
    assert (tmp_path / "run" / "report" / "pairplot.csv").exists()

    # rerunning without force refuses to clobber artifacts
    with pytest.raises(Exception):
        stance.run_pipeline(str(config_path), str(tmp_path / "run"))
