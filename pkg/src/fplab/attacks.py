"""Malicious-client behaviors: the GAN-based attack plus simpler baselines.

A behavior wraps one compromised client: in poisoned rounds it trains on
attack-supplied data (or boosts its honest update) and submits the result
scaled about the current global model; outside poisoned rounds, and for
kind="none", it is bit-identical to a benign client under the same seed.
"""

from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset, mix_poison
from .errors import InvalidConfigError
from .fl_core import local_train, scale_update
from .psg import PsgConfig, flip_source_labels, generate_poison_set, train_psg
from .seeding import TAG_MIX, TAG_POISON, sub_seed

ATTACK_KINDS = ("none", "poicgan", "tdp_label_flip", "tmp_boost")


@dataclass
class AttackSpec:
    kind: str = "none"
    source: int = 0
    target: int = 1
    boost: float = 1.0  # tmp_boost only
    psg_config: PsgConfig = None  # poicgan only

    def validate(self):
        if self.kind not in ATTACK_KINDS:
            raise InvalidConfigError(f"unknown attack kind {self.kind!r}")
        if self.kind != "none" and self.source == self.target:
            raise InvalidConfigError("source and target classes must differ")
        if self.kind == "tmp_boost" and self.boost <= 0:
            raise InvalidConfigError(f"boost must be > 0, got {self.boost}")
        return self


def tdp_label_flip(shard, s, t):
    """Relabel every source-class sample in the shard to the target class."""
    return Dataset(flip_source_labels(shard.samples, s, t), shard.num_classes, shard.class_names)


def tmp_boost(global_params, local_params, boost):
    """Boost an honest update about the global model; same delta-scaling rule
    the protocol applies with its scaling factor."""
    return scale_update(global_params, local_params, boost)


def resolved_psg_config(spec):
    cfg = spec.psg_config if spec.psg_config is not None else PsgConfig()
    return replace(cfg, source=spec.source, target=spec.target)


def train_shared_generator(spec, malicious_shards):
    """Train one poison generator on the pooled local data of all compromised
    clients (the adversary controls them all, so it pools what it can see)."""
    pooled = Dataset(
        [s for shard in malicious_shards for s in shard.samples],
        malicious_shards[0].num_classes,
        malicious_shards[0].class_names,
    )
    return train_psg(pooled, resolved_psg_config(spec))


class MaliciousClient:
    """Behavior handle bound to one compromised client and its shard."""

    def __init__(self, spec, shard, net, config, poison_generator=None, client_id=0):
        spec.validate()
        self.spec = spec
        self.shard = shard
        self.net = net
        self.config = config
        self.client_id = client_id
        self._generator = poison_generator
        self._poisoned = None
        self._flipped = (
            tdp_label_flip(shard, spec.source, spec.target)
            if spec.kind == "tdp_label_flip"
            else None
        )

    def _poison_generator(self):
        if self._generator is None:
            self._generator = train_shared_generator(self.spec, [self.shard])
        return self._generator

    def _poisoned_shard(self):
        # the poisoned local set is constructed once and reused every round
        if self._poisoned is None:
            gen = self._poison_generator()
            poison = generate_poison_set(
                gen,
                len(self.shard),
                sub_seed(self.config.seed, TAG_POISON, self.client_id),
            )
            self._poisoned = mix_poison(
                self.shard,
                poison,
                self.config.poison_ratio,
                sub_seed(self.config.seed, TAG_MIX, self.client_id),
            )
        return self._poisoned

    def _train(self, global_params, shard, seed):
        return local_train(
            self.net,
            global_params,
            shard,
            self.config.local_epochs,
            self.config.learning_rate,
            self.config.local_batch_size,
            seed,
            optimizer=self.config.optimizer,
        )

    def submit(self, global_params, rnd, poisoning_active, train_seed):
        kind = self.spec.kind
        if not poisoning_active or kind == "none":
            return self._train(global_params, self.shard, train_seed)
        if kind == "tdp_label_flip":
            local = self._train(global_params, self._flipped, train_seed)
            return scale_update(global_params, local, self.config.scaling_factor)
        if kind == "tmp_boost":
            local = self._train(global_params, self.shard, train_seed)
            return tmp_boost(global_params, local, self.spec.boost)
        if kind == "poicgan":
            local = self._train(global_params, self._poisoned_shard(), train_seed)
            return scale_update(global_params, local, self.config.scaling_factor)
        raise InvalidConfigError(f"unknown attack kind {kind!r}")


def build_malicious_client(spec, shard, *, net, config, poison_generator=None, client_id=0):
    """Bind an attack spec to a client shard, returning its behavior handle."""
    return MaliciousClient(
        spec, shard, net, config, poison_generator=poison_generator, client_id=client_id
    )
