"""Federated protocol simulation: sampling, local training, FedAvg, round loop.

Model parameters travel as flat float64 vectors (one canonical layer order per
classifier architecture). The driver is single-owner and serial; every client
draws from its own derived RNG, so results do not depend on execution order.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import defenses as defenses_mod
from . import metrics as metrics_mod
from .data import Dataset, partition_dataset
from .errors import (
    DivergenceError,
    EmptyAggregationError,
    EmptyShardError,
    FplabError,
    InvalidConfigError,
    ShapeMismatchError,
)
from .nn import (
    Conv2d,
    Dense,
    Flatten,
    ReLU,
    Sequential,
    make_optimizer,
    softmax_cross_entropy,
)
from .seeding import (
    TAG_INIT,
    TAG_LOCAL,
    TAG_SELECT,
    TAG_SPLIT,
    rng_from,
    sub_seed,
)

ROLE_BENIGN = "benign"
ROLE_MALICIOUS = "malicious"


@dataclass
class ClientUpdate:
    client_id: int
    params: np.ndarray
    sample_count: int
    round: int
    role: str = ROLE_BENIGN


@dataclass
class RoundRecord:
    round: int
    selected_ids: list
    acc: float
    asr: float
    defense_diagnostics: dict = field(default_factory=dict)
    update_snapshot_ref: str = None

    def to_json_obj(self):
        return {
            "round": self.round,
            "selected_ids": list(map(int, self.selected_ids)),
            "acc": self.acc,
            "asr": self.asr,
            "defense_diagnostics": self.defense_diagnostics,
        }


@dataclass
class FederationConfig:
    n_clients: int = 20
    clients_per_round: int = 10
    rounds: int = 200
    local_epochs: int = 2
    learning_rate: float = 0.01
    optimizer: str = "sgd"
    pmr: float = 0.4
    poison_start_round: int = None  # None -> 50, scaled to rounds//4 for short runs
    scaling_factor: float = 1.0
    source_class: int = 0
    target_class: int = 1
    seed: int = 0
    poison_ratio: float = 1.0
    local_batch_size: int = 8

    @property
    def n_malicious(self):
        return round(self.pmr * self.n_clients)

    def resolved_poison_start(self):
        if self.poison_start_round is not None:
            return self.poison_start_round
        return 50 if self.rounds >= 200 else self.rounds // 4

    def validate(self):
        if not 1 <= self.clients_per_round <= self.n_clients:
            raise InvalidConfigError(
                f"clients_per_round must be in [1, {self.n_clients}], "
                f"got {self.clients_per_round}"
            )
        if self.rounds < 0:
            raise InvalidConfigError(f"rounds must be >= 0, got {self.rounds}")
        if self.local_epochs < 0:
            raise InvalidConfigError(f"local_epochs must be >= 0, got {self.local_epochs}")
        if self.learning_rate <= 0:
            raise InvalidConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.optimizer not in ("sgd", "adam"):
            raise InvalidConfigError(f"optimizer must be sgd or adam, got {self.optimizer!r}")
        if not 0.0 <= self.pmr <= 1.0:
            raise InvalidConfigError(f"pmr must be in [0, 1], got {self.pmr}")
        if self.scaling_factor <= 0:
            raise InvalidConfigError(f"scaling_factor must be > 0, got {self.scaling_factor}")
        if self.source_class == self.target_class:
            raise InvalidConfigError("source_class and target_class must differ")
        if not 0.0 <= self.poison_ratio <= 1.0:
            raise InvalidConfigError(f"poison_ratio must be in [0, 1], got {self.poison_ratio}")
        if self.poison_start_round is not None and self.poison_start_round < 0:
            raise InvalidConfigError("poison_start_round must be >= 0")
        return self


@dataclass(frozen=True)
class ClassifierArch:
    image_size: int = 16
    channels: int = 1
    num_classes: int = 4
    conv_channels: tuple = (8, 16)
    hidden_units: int = 32

    @staticmethod
    def for_dataset(dataset, conv_channels=(8, 16), hidden_units=32):
        h, w, c = dataset.image_shape()
        if h != w:
            raise InvalidConfigError(f"classifier expects square images, got {h}x{w}")
        return ClassifierArch(h, c, dataset.num_classes, tuple(conv_channels), hidden_units)


def build_classifier(arch):
    """Small CNN: two stride-2 convs plus two dense layers."""
    c1, c2 = arch.conv_channels
    side = arch.image_size
    for _ in range(2):
        side = (side + 2 - 3) // 2 + 1
    return Sequential(
        [
            Conv2d(arch.channels, c1, 3, stride=2, pad=1),
            ReLU(),
            Conv2d(c1, c2, 3, stride=2, pad=1),
            ReLU(),
            Flatten(),
            Dense(c2 * side * side, arch.hidden_units),
            ReLU(),
            Dense(arch.hidden_units, arch.num_classes),
        ]
    )


def init_global_params(arch, seed):
    net = build_classifier(arch)
    net.init_params(rng_from(seed, TAG_INIT))
    return net.param_vector()


def sample_clients(pool_size, m, rng_seed, round):
    """Draw m distinct client ids; deterministic in (rng_seed, round)."""
    if not 1 <= m <= pool_size:
        raise InvalidConfigError(f"cannot sample {m} clients from a pool of {pool_size}")
    rng = rng_from(rng_seed, TAG_SELECT, round)
    return sorted(int(i) for i in rng.choice(pool_size, size=m, replace=False))


def aggregate_fedavg(updates):
    """Sample-count weighted mean of client parameter vectors."""
    if not updates:
        raise EmptyAggregationError("no updates to aggregate")
    dim = updates[0].params.shape
    for u in updates:
        if u.params.shape != dim:
            raise ShapeMismatchError(
                f"update from client {u.client_id} has shape {u.params.shape}, expected {dim}"
            )
    ordered = sorted(updates, key=lambda u: u.client_id)
    counts = np.array([u.sample_count for u in ordered], dtype=np.float64)
    weights = counts / counts.sum()
    out = np.zeros(dim)
    for w, u in zip(weights, ordered):
        out += w * u.params
    return out


def scale_update(global_params, local_params, gamma):
    """Amplify a client's delta about the global model: g + gamma * (l - g)."""
    if global_params.shape != local_params.shape:
        raise ShapeMismatchError(
            f"shape mismatch {global_params.shape} vs {local_params.shape}"
        )
    if gamma <= 0:
        raise InvalidConfigError(f"scaling factor must be > 0, got {gamma}")
    if gamma == 1.0:  # exact identity, not merely within float rounding
        return local_params.copy()
    return global_params + gamma * (local_params - global_params)


def local_train(net, params, shard, epochs, lr, batch_size, seed, optimizer="sgd"):
    """Mini-batch training on cross-entropy; returns the updated flat vector.

    ``optimizer`` selects plain gradient descent or Adam; optimizer state is
    fresh per call (clients are stateless between rounds).
    """
    if len(shard) == 0:
        raise EmptyShardError("local training requires a non-empty shard")
    net.set_param_vector(params)
    if epochs == 0:
        return net.param_vector()
    x = shard.images_nchw()
    y = shard.labels()
    opt = make_optimizer(optimizer, net, lr)
    rng = rng_from(seed, TAG_LOCAL)
    n = len(shard)
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            logits = net.forward(x[idx], train=True)
            loss, dlogits = softmax_cross_entropy(logits, y[idx])
            if not math.isfinite(loss):
                raise DivergenceError("non-finite training loss")
            net.zero_grad()
            net.backward(dlogits, input_grad=False)
            opt.step()
    return net.param_vector()


@dataclass
class FederationResult:
    records: list
    final_params: np.ndarray
    final_updates: list
    stealth_updates: list  # latest round containing both roles, None if never
    stealth_round: int = None
    round_params: list = None  # per-round global snapshots, when requested


def split_train_test(dataset, holdout_fraction, seed):
    """Deterministic holdout split used when no explicit test set is supplied."""
    rng = rng_from(seed, TAG_SPLIT)
    order = rng.permutation(len(dataset))
    n_test = max(1, int(round(holdout_fraction * len(dataset))))
    test_idx, train_idx = order[:n_test], order[n_test:]
    mk = lambda idx: Dataset(
        [dataset.samples[i] for i in idx], dataset.num_classes, dataset.class_names
    )
    return mk(train_idx), mk(test_idx)


def _apply_defense(defense, updates, global_params, config, rnd):
    if defense is None or defense.kind == "none":
        return aggregate_fedavg(updates), {}
    return defenses_mod.apply_defense(defense, updates, global_params, config, rnd)


def run_federation(
    config,
    dataset,
    attack=None,
    defense=None,
    test_dataset=None,
    arch=None,
    keep_round_params=False,
):
    """Execute the full round loop and return per-round records + final model.

    Before the resolved poison start round every client behaves benignly; from
    then on the fixed k malicious clients follow the attack behavior and submit
    scaled updates. Bit-reproducible given (config.seed, dataset).
    """
    config.validate()
    if dataset.num_classes <= max(config.source_class, config.target_class):
        raise InvalidConfigError(
            f"dataset has {dataset.num_classes} classes; cannot target "
            f"{config.source_class}->{config.target_class}"
        )
    if test_dataset is None:
        dataset, test_dataset = split_train_test(dataset, 0.2, config.seed)
    if arch is None:
        arch = ClassifierArch.for_dataset(dataset)
    net = build_classifier(arch)
    net.init_params(rng_from(config.seed, TAG_INIT))
    global_params = net.param_vector()

    shards = partition_dataset(dataset, config.n_clients, "iid", config.seed)
    k = config.n_malicious
    malicious_ids = set(range(k))
    poison_start = config.resolved_poison_start()

    from .attacks import AttackSpec, build_malicious_client, train_shared_generator

    if attack is None:
        attack = AttackSpec(kind="none", source=config.source_class, target=config.target_class)
    generator = None
    if attack.kind == "poicgan" and k > 0 and config.rounds > poison_start:
        generator = train_shared_generator(attack, [shards[i] for i in sorted(malicious_ids)])
    behaviors = {
        cid: build_malicious_client(
            attack,
            shards[cid],
            net=net,
            config=config,
            poison_generator=generator,
            client_id=cid,
        )
        for cid in sorted(malicious_ids)
    }

    records = []
    final_updates = []
    round_params = [] if keep_round_params else None
    stealth_updates, stealth_round = None, None
    for rnd in range(config.rounds):
        selected = sample_clients(config.n_clients, config.clients_per_round, config.seed, rnd)
        updates = []
        try:
            for cid in selected:
                train_seed = sub_seed(config.seed, TAG_LOCAL, rnd, cid)
                if cid in malicious_ids:
                    poisoning = rnd >= poison_start
                    params_i = behaviors[cid].submit(global_params, rnd, poisoning, train_seed)
                    role = ROLE_MALICIOUS
                else:
                    params_i = local_train(
                        net,
                        global_params,
                        shards[cid],
                        config.local_epochs,
                        config.learning_rate,
                        config.local_batch_size,
                        train_seed,
                        optimizer=config.optimizer,
                    )
                    role = ROLE_BENIGN
                updates.append(ClientUpdate(cid, params_i, len(shards[cid]), rnd, role))
            global_params, diagnostics = _apply_defense(
                defense, updates, global_params, config, rnd
            )
        except FplabError as err:
            raise type(err)(f"round {rnd}: {err}") from err
        acc = metrics_mod.accuracy(global_params, test_dataset, net=net)
        asr = metrics_mod.attack_success_rate(
            global_params, test_dataset, config.source_class, config.target_class, net=net
        )
        records.append(RoundRecord(rnd, selected, acc, asr, diagnostics))
        if keep_round_params:
            round_params.append(global_params.copy())
        roles = {u.role for u in updates}
        if len(roles) == 2:
            stealth_updates, stealth_round = updates, rnd
        final_updates = updates
    return FederationResult(
        records,
        global_params,
        final_updates,
        stealth_updates,
        stealth_round,
        round_params,
    )
