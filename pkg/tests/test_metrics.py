"""Accuracy, attack success rate, PCA projection, stealth score."""

import math

import numpy as np
import pytest

from fplab.data import Dataset, LabeledSample
from fplab.errors import InvalidInputError
from fplab.fl_core import ClassifierArch, build_classifier, init_global_params
from fplab.metrics import (
    MisReport,
    accuracy,
    attack_success_rate,
    confusion_matrix,
    mis,
    pca_project,
    per_class_accuracy,
    predict_labels,
)


class FixedPredictor:
    """Stub network producing predetermined argmax labels."""

    num_params = 1

    def __init__(self, labels, num_classes):
        self.labels = np.asarray(labels)
        self.num_classes = num_classes

    def set_param_vector(self, vec):
        pass

    def forward(self, x, train=False):
        out = np.zeros((x.shape[0], self.num_classes))
        out[np.arange(x.shape[0]), self.labels[: x.shape[0]]] = 1.0
        self.labels = self.labels[x.shape[0] :]
        return out


def ds_of(labels, num_classes=4):
    return Dataset([LabeledSample(np.zeros((4, 4, 1)), int(l)) for l in labels], num_classes)


def test_accuracy_nine_of_ten():
    truth = [0, 1, 2, 3, 0, 1, 2, 3, 0, 1]
    preds = truth.copy()
    preds[4] = 2
    acc = accuracy(np.zeros(1), ds_of(truth), FixedPredictor(preds, 4))
    assert acc == 0.9


def test_accuracy_degenerate_constant_model():
    truth = [2] * 6
    acc = accuracy(np.zeros(1), ds_of(truth), FixedPredictor([2] * 6, 4))
    assert acc == 1.0


def test_accuracy_matches_confusion_matrix():
    truth = [0, 1, 2, 3, 1, 2]
    preds = [0, 2, 2, 3, 1, 0]
    cm = confusion_matrix(np.zeros(1), ds_of(truth), FixedPredictor(preds, 4))
    acc = accuracy(np.zeros(1), ds_of(truth), FixedPredictor(preds, 4))
    assert acc == float(np.trace(cm.counts)) / cm.total  # bit-exact recomputation
    off_diag = cm.total - np.trace(cm.counts)
    assert np.isclose(acc, 1.0 - off_diag / cm.total, atol=1e-15)
    assert cm.total == len(truth)


def test_accuracy_empty_test():
    with pytest.raises(InvalidInputError):
        accuracy(np.zeros(1), ds_of([]), FixedPredictor([], 4))


def test_asr_three_of_four():
    truth = [0, 0, 0, 0, 2, 3]
    preds = [1, 1, 1, 0, 2, 3]
    asr = attack_success_rate(np.zeros(1), ds_of(truth), 0, 1, FixedPredictor(preds, 4))
    assert asr == 0.75


def test_asr_constant_target_predictor():
    truth = [0, 0, 2, 3]
    asr = attack_success_rate(np.zeros(1), ds_of(truth), 0, 1, FixedPredictor([1] * 4, 4))
    assert asr == 1.0


def test_asr_requires_source_samples():
    with pytest.raises(InvalidInputError):
        attack_success_rate(np.zeros(1), ds_of([1, 2]), 0, 1, FixedPredictor([1, 2], 4))


def test_per_class_accuracy():
    truth = [0, 0, 1, 1, 2]
    preds = [0, 1, 1, 1, 0]
    pca = per_class_accuracy(np.zeros(1), ds_of(truth), FixedPredictor(preds, 4))
    np.testing.assert_allclose(pca[:3], [0.5, 1.0, 0.0])
    assert math.isnan(pca[3])


def test_argmax_tie_breaks_low_index():
    class TieNet(FixedPredictor):
        def forward(self, x, train=False):
            return np.ones((x.shape[0], self.num_classes))

    preds = predict_labels(np.zeros(1), ds_of([3, 2]), TieNet([0, 0], 4))
    assert list(preds) == [0, 0]


def test_real_classifier_prediction_shapes(small_dataset):
    arch = ClassifierArch.for_dataset(small_dataset)
    net = build_classifier(arch)
    params = init_global_params(arch, 0)
    preds = predict_labels(params, small_dataset, net)
    assert preds.shape == (len(small_dataset),)
    assert set(preds) <= set(range(small_dataset.num_classes))


# ---------------------------------------------------------------- pca

def test_pca_axis_aligned_2d():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.normal(0, 3.0, 40), rng.normal(0, 0.5, 40)])
    pts -= pts.mean(axis=0)
    proj = pca_project(pts, 2)
    # eigenbasis is the coordinate axes, up to the fixed sign convention
    flip0 = 1.0 if np.argmax(np.abs(pts[:, 0])) is not None else 1.0
    recovered = proj.points
    assert proj.rank == 2
    # same geometry: distances are preserved
    d_orig = np.linalg.norm(pts[:3, None] - pts[None, 5:8], axis=2)
    d_proj = np.linalg.norm(recovered[:3, None] - recovered[None, 5:8], axis=2)
    np.testing.assert_allclose(d_orig, d_proj, atol=1e-9)
    # first component carries the larger variance
    assert recovered[:, 0].var() > recovered[:, 1].var()


def test_pca_collinear_rank_deficiency():
    base = np.linspace(-2, 2, 7)
    rows = np.outer(base, np.array([1.0, 2.0, 0.0, -1.0, 0.5]))
    proj = pca_project(rows, 2)
    assert proj.rank == 1
    assert proj.padded
    np.testing.assert_allclose(proj.points[:, 1], 0.0, atol=1e-9)


def test_pca_matches_svd_oracle(rng):
    rows = rng.normal(size=(8, 6))
    proj = pca_project(rows, 2)
    xc = rows - rows.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:2].T.copy()
    for i in range(2):
        if comps[np.argmax(np.abs(comps[:, i])), i] < 0:
            comps[:, i] = -comps[:, i]
    np.testing.assert_allclose(proj.points, xc @ comps, atol=1e-8)


def test_pca_gram_path_matches_covariance_path(rng):
    rows = rng.normal(size=(6, 40))  # dim > n forces the gram route
    proj = pca_project(rows, 2)
    xc = rows - rows.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:2].T.copy()
    for i in range(2):
        if comps[np.argmax(np.abs(comps[:, i])), i] < 0:
            comps[:, i] = -comps[:, i]
    np.testing.assert_allclose(proj.points, xc @ comps, atol=1e-8)


def test_pca_zero_mean_output(rng):
    proj = pca_project(rng.normal(size=(9, 5)), 2)
    np.testing.assert_allclose(proj.points.mean(axis=0), 0.0, atol=1e-10)


def test_pca_validates():
    with pytest.raises(InvalidInputError):
        pca_project(np.zeros((1, 5)), 2)
    with pytest.raises(InvalidInputError):
        pca_project(np.zeros((3, 5)), 4)


# ---------------------------------------------------------------- mis

def pts(pairs):
    return [(np.asarray(p, dtype=np.float64), role) for p, role in pairs]


def test_mis_three_four_five():
    report = mis(pts([((0.0, 0.0), "benign"), ((3.0, 4.0), "poisoned")]))
    assert report.distance == 5.0
    assert report.mis == 0.2
    assert not report.degenerate


def test_mis_unit_distance():
    report = mis(pts([((2.0, 2.0), "benign"), ((3.0, 2.0), "poisoned")]))
    assert report.mis == 1.0


def test_mis_inverse_relation():
    report = mis(
        pts([((0.0, 0.0), "benign"), ((2.0, 0.0), "benign"), ((5.0, 1.0), "poisoned")])
    )
    assert np.isclose(report.mis * report.distance, 1.0, atol=1e-12)


def test_mis_degenerate_centroids():
    report = mis(pts([((1.0, 1.0), "benign"), ((1.0, 1.0), "poisoned")]))
    assert report.degenerate
    assert math.isinf(report.mis)


def test_mis_translation_invariant(rng):
    pairs = [(rng.normal(size=2), "benign") for _ in range(4)] + [
        (rng.normal(size=2), "poisoned") for _ in range(3)
    ]
    base = mis(pairs).mis
    shifted = [(p + np.array([13.7, -2.2]), r) for p, r in pairs]
    assert np.isclose(mis(shifted).mis, base, atol=1e-10)


def test_mis_scaling(rng):
    pairs = [(rng.normal(size=2), "benign") for _ in range(4)] + [
        (rng.normal(size=2), "poisoned") for _ in range(3)
    ]
    base = mis(pairs).mis
    doubled = [(2.0 * p, r) for p, r in pairs]
    assert np.isclose(mis(doubled).mis, base / 2.0, rtol=1e-12)


def test_mis_role_swap_invariant(rng):
    pairs = [(rng.normal(size=2), "benign") for _ in range(4)] + [
        (rng.normal(size=2), "poisoned") for _ in range(3)
    ]
    swapped = [(p, "poisoned" if r == "benign" else "benign") for p, r in pairs]
    assert mis(pairs).mis == mis(swapped).mis


def test_mis_requires_both_roles():
    with pytest.raises(InvalidInputError):
        mis(pts([((0.0, 0.0), "benign")]))
    with pytest.raises(InvalidInputError):
        mis(pts([((0.0, 0.0), "benign"), ((1.0, 0.0), "unknown")]))


def test_mis_report_json_roundtrip():
    report = mis(pts([((0.0, 0.0), "benign"), ((3.0, 4.0), "poisoned")]))
    obj = report.to_json_obj()
    assert obj["distance"] == 5.0
    assert obj["mis"] == 0.2
    assert len(obj["points"]) == 2
    assert isinstance(report, MisReport)
