"""Server-side robust aggregation: Krum, sign-voting learning rate, and a
cluster/clip/noise pipeline (FLAME-lite).

All functions are pure over immutable update lists; the noise-injecting
defense takes an explicit Generator so runs stay reproducible.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfigError, ShapeMismatchError
from .seeding import TAG_FLAME, rng_from


@dataclass
class DefenseSpec:
    kind: str = "none"  # none | krum | rlr | flame
    krum_f: int = None  # None -> round(pmr * clients_per_round)
    rlr_threshold: int = None  # None -> strict majority, ceil(m/2) + 1
    rlr_lr: float = 1.0
    flame_noise: float = 0.001  # lambda: noise std per coordinate is lambda * median norm

    def validate(self):
        if self.kind not in ("none", "krum", "rlr", "flame"):
            raise InvalidConfigError(f"unknown defense kind {self.kind!r}")
        if self.krum_f is not None and self.krum_f < 0:
            raise InvalidConfigError("krum_f must be >= 0")
        if self.rlr_threshold is not None and self.rlr_threshold < 1:
            raise InvalidConfigError("rlr_threshold must be >= 1")
        if self.rlr_lr <= 0:
            raise InvalidConfigError("rlr_lr must be > 0")
        if self.flame_noise < 0:
            raise InvalidConfigError("flame_noise must be >= 0")
        return self


def _stack(updates, global_params=None):
    dim = updates[0].params.shape if global_params is None else global_params.shape
    for u in updates:
        if u.params.shape != dim:
            raise ShapeMismatchError(
                f"update from client {u.client_id} has shape {u.params.shape}, expected {dim}"
            )
    return np.stack([u.params for u in updates])


def krum_select(updates, f):
    """Return the update with the smallest summed squared distance to its
    n - f - 2 nearest peers; ties break toward the lowest client id."""
    n = len(updates)
    if n < f + 3:
        raise InvalidConfigError(f"krum needs at least f + 3 = {f + 3} updates, got {n}")
    mat = _stack(updates)
    sq = ((mat[:, None, :] - mat[None, :, :]) ** 2).sum(axis=2)
    closest = n - f - 2
    best = None
    for i, u in enumerate(updates):
        others = np.sort(np.delete(sq[i], i))
        score = float(others[:closest].sum())
        key = (score, u.client_id)
        if best is None or key < best[0]:
            best = (key, u)
    return best[1]


def rlr_aggregate(updates, global_params, threshold, lr, details=False):
    """Sign-voting aggregation: coordinates where update-direction agreement is
    below the threshold get their learning rate flipped to -lr."""
    if not updates:
        raise InvalidConfigError("rlr received no updates")
    if threshold < 1:
        raise InvalidConfigError(f"rlr threshold must be >= 1, got {threshold}")
    deltas = _stack(updates, global_params) - global_params
    votes = np.abs(np.sign(deltas).sum(axis=0))
    lr_vec = np.where(votes >= threshold, lr, -lr)
    out = global_params + lr_vec * deltas.mean(axis=0)
    if details:
        return out, {"rlr_flipped_coords": int((votes < threshold).sum())}
    return out


def _cosine_distances(deltas):
    norms = np.linalg.norm(deltas, axis=1)
    n = len(deltas)
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if norms[i] == 0.0 and norms[j] == 0.0:
                d = 0.0
            elif norms[i] == 0.0 or norms[j] == 0.0:
                d = 1.0
            else:
                d = 1.0 - float(deltas[i] @ deltas[j]) / (norms[i] * norms[j])
            dist[i, j] = dist[j, i] = d
    return dist, norms


def _largest_component(adj, client_ids):
    n = adj.shape[0]
    seen = [False] * n
    components = []
    for start in range(n):
        if seen[start]:
            continue
        stack, comp = [start], []
        seen[start] = True
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(adj[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        components.append(sorted(comp))
    # largest wins; ties go to the group holding the smallest client id
    return max(components, key=lambda c: (len(c), -min(client_ids[i] for i in c)))


def flame_aggregate(updates, global_params, lam, rng=None, details=False):
    """Cluster deltas by cosine distance, keep the largest group, clip each
    admitted delta to the median admitted norm, average, and add noise with
    per-coordinate std lam * median norm."""
    if len(updates) < 2:
        raise InvalidConfigError(f"flame needs at least 2 updates, got {len(updates)}")
    if lam > 0 and rng is None:
        raise InvalidConfigError("flame noise injection requires an rng")
    deltas = _stack(updates, global_params) - global_params
    dist, norms = _cosine_distances(deltas)
    client_ids = [u.client_id for u in updates]

    if np.all(norms == 0.0):
        admitted = list(range(len(updates)))
        median_norm, clipped_idx = 0.0, []
        result = global_params.copy()
    else:
        iu = np.triu_indices(len(updates), k=1)
        threshold = float(np.median(dist[iu]))
        adj = dist <= threshold
        np.fill_diagonal(adj, False)
        admitted = _largest_component(adj, client_ids)
        admitted_norms = norms[admitted]
        median_norm = float(np.median(admitted_norms))
        clipped = []
        clipped_idx = []
        for i in admitted:
            if norms[i] > median_norm > 0.0:
                clipped.append(deltas[i] * (median_norm / norms[i]))
                clipped_idx.append(i)
            else:
                clipped.append(deltas[i])
        avg = np.mean(clipped, axis=0)
        noise = rng.normal(0.0, lam * median_norm, global_params.shape) if lam > 0 else 0.0
        result = global_params + avg + noise

    if details:
        return result, {
            "flame_admitted": [int(client_ids[i]) for i in admitted],
            "flame_clipped": [int(client_ids[i]) for i in clipped_idx],
            "flame_median_norm": median_norm,
        }
    return result


def apply_defense(spec, updates, global_params, config, rnd):
    """Dispatch one round of robust aggregation; returns (params, diagnostics)."""
    spec.validate()
    if spec.kind == "none":
        from .fl_core import aggregate_fedavg

        return aggregate_fedavg(updates), {}
    if spec.kind == "krum":
        f = spec.krum_f if spec.krum_f is not None else round(config.pmr * len(updates))
        chosen = krum_select(updates, f)
        return chosen.params.copy(), {"krum_selected": int(chosen.client_id)}
    if spec.kind == "rlr":
        theta = (
            spec.rlr_threshold
            if spec.rlr_threshold is not None
            else math.ceil(len(updates) / 2) + 1
        )
        return rlr_aggregate(updates, global_params, theta, spec.rlr_lr, details=True)
    if spec.kind == "flame":
        rng = rng_from(config.seed, TAG_FLAME, rnd)
        return flame_aggregate(
            updates, global_params, spec.flame_noise, rng=rng, details=True
        )
    raise InvalidConfigError(f"unknown defense kind {spec.kind!r}")
