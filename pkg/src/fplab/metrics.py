"""Evaluation metrics: main-task accuracy, attack success rate, and the
stealth score based on PCA-projected local models.

Accuracy and ASR are exact rational counts derived from the confusion matrix.
The stealth score (MIS) is the inverse Euclidean distance between the 2-D
centroids of benign and poisoned local models after PCA.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

ROLE_BENIGN_POINT = "benign"
ROLE_POISONED_POINT = "poisoned"


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) ints, rows = true class, cols = predicted

    @property
    def total(self):
        return int(self.counts.sum())

    def accuracy(self):
        return float(np.trace(self.counts)) / self.total


def predict_labels(params, dataset, net, batch=512):
    """Argmax predictions (ties resolve to the lowest class index)."""
    net.set_param_vector(params)
    x = dataset.images_nchw()
    preds = []
    for start in range(0, len(dataset), batch):
        logits = net.forward(x[start : start + batch], train=False)
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds)


def confusion_matrix(params, test, net):
    if len(test) == 0:
        raise InvalidInputError("test set is empty")
    c = test.num_classes
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (test.labels(), predict_labels(params, test, net)), 1)
    return ConfusionMatrix(counts)


def accuracy(params, test, net):
    """Fraction of test samples whose prediction matches the true label."""
    return confusion_matrix(params, test, net).accuracy()


def attack_success_rate(params, test, source, target, net):
    """Fraction of true source-class samples predicted as the target class."""
    if source == target:
        raise InvalidInputError("source and target must differ")
    cm = confusion_matrix(params, test, net).counts
    n_source = int(cm[source].sum())
    if n_source == 0:
        raise InvalidInputError(f"test set has no sample of source class {source}")
    return float(cm[source, target]) / n_source


def per_class_accuracy(params, test, net):
    """Per-class recall vector; classes absent from the test set give nan."""
    cm = confusion_matrix(params, test, net).counts
    totals = cm.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(totals > 0, np.diag(cm) / totals, np.nan)


@dataclass
class PcaProjection:
    points: np.ndarray  # (n, out_dims), mean-centered input projected
    eigenvalues: np.ndarray
    rank: int
    padded: bool = False  # True when rank < out_dims and zero components were added


def _fix_signs(components):
    # orient each eigenvector so its largest-magnitude entry is positive
    for i in range(components.shape[1]):
        v = components[:, i]
        if v[np.argmax(np.abs(v))] < 0:
            components[:, i] = -v
    return components


def pca_project(rows, out_dims=2):
    """Project rows onto the top principal components of their covariance.

    Uses the Gram-matrix route when the feature dimension exceeds the row
    count (local models are long vectors, row counts are small). Missing
    components of a rank-deficient covariance come back as zeros with the
    ``padded`` flag set.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InvalidInputError("pca needs at least 2 row vectors")
    n, d = x.shape
    if out_dims > min(n, d):
        raise InvalidInputError(f"out_dims {out_dims} exceeds min(rows, dim) = {min(n, d)}")
    xc = x - x.mean(axis=0)
    if d <= n:
        cov = (xc.T @ xc) / (n - 1)
        evals, evecs = np.linalg.eigh(cov)
        order = np.argsort(evals)[::-1]
        evals, evecs = evals[order], evecs[:, order]
    else:
        gram = (xc @ xc.T) / (n - 1)
        gvals, gvecs = np.linalg.eigh(gram)
        order = np.argsort(gvals)[::-1]
        gvals, gvecs = gvals[order], gvecs[:, order]
        evals = gvals
        evecs = np.zeros((d, len(gvals)))
        for i, lam in enumerate(gvals):
            if lam > 0:
                v = xc.T @ gvecs[:, i]
                nv = np.linalg.norm(v)
                if nv > 0:
                    evecs[:, i] = v / nv
    tol = max(n, d) * np.finfo(np.float64).eps * max(float(evals[0]), 0.0)
    rank = int((evals > tol).sum())
    comps = np.zeros((d, out_dims))
    keep = min(rank, out_dims)
    comps[:, :keep] = _fix_signs(evecs[:, :keep].copy())
    return PcaProjection(xc @ comps, evals[:out_dims], rank, padded=rank < out_dims)


@dataclass
class MisReport:
    benign_centroid: np.ndarray
    poisoned_centroid: np.ndarray
    distance: float
    mis: float
    projected_points: list  # (2-vector, role) pairs
    degenerate: bool = False  # centroids coincide; mis reported as +inf

    def to_json_obj(self):
        return {
            "benign_centroid": self.benign_centroid.tolist(),
            "poisoned_centroid": self.poisoned_centroid.tolist(),
            "distance": self.distance,
            "mis": self.mis,
            "degenerate": self.degenerate,
            "points": [
                {"xy": np.asarray(p).tolist(), "role": role}
                for p, role in self.projected_points
            ],
        }


def mis(projected):
    """Stealth score: inverse distance between benign and poisoned centroids."""
    pts = {ROLE_BENIGN_POINT: [], ROLE_POISONED_POINT: []}
    for p, role in projected:
        if role not in pts:
            raise InvalidInputError(f"unknown projected-point role {role!r}")
        pts[role].append(np.asarray(p, dtype=np.float64))
    if not pts[ROLE_BENIGN_POINT] or not pts[ROLE_POISONED_POINT]:
        raise InvalidInputError("need at least one projected point of each role")
    benign = np.mean(pts[ROLE_BENIGN_POINT], axis=0)
    poisoned = np.mean(pts[ROLE_POISONED_POINT], axis=0)
    distance = float(np.linalg.norm(benign - poisoned))
    degenerate = distance < 1e-12
    score = math.inf if degenerate else 1.0 / distance
    return MisReport(benign, poisoned, distance, score, list(projected), degenerate)
