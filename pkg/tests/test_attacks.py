"""Baseline attack behaviors and their equivalences."""

import numpy as np
import pytest

from fplab.attacks import (
    AttackSpec,
    build_malicious_client,
    tdp_label_flip,
    tmp_boost,
)
from fplab.data import synth_texture_dataset
from fplab.errors import InvalidConfigError
from fplab.fl_core import (
    ClassifierArch,
    FederationConfig,
    build_classifier,
    init_global_params,
    local_train,
    scale_update,
)
from fplab.psg import PsgConfig, flip_source_labels


@pytest.fixture(scope="module")
def shard():
    return synth_texture_dataset(3, 8, 8, seed=31)


@pytest.fixture(scope="module")
def arch():
    return ClassifierArch(8, 1, 3)


def test_tdp_flip_definition(shard):
    out = tdp_label_flip(shard, 0, 1)
    assert len(out) == len(shard)
    for before, after in zip(shard.samples, out.samples):
        assert after.label == (1 if before.label == 0 else before.label)
        assert after.image is before.image


def test_tdp_no_source_identity(shard):
    only_12 = tdp_label_flip(shard, 0, 1)  # labels now in {1, 2}
    out = tdp_label_flip(only_12, 0, 1)
    assert out.samples == only_12.samples


def test_tdp_equals_flip_source_labels(shard):
    a = tdp_label_flip(shard, 0, 2)
    b = flip_source_labels(shard.samples, 0, 2)
    assert [s.label for s in a.samples] == [s.label for s in b]
    assert all(x.image is y.image for x, y in zip(a.samples, b))


def test_tdp_idempotent(shard):
    once = tdp_label_flip(shard, 0, 1)
    twice = tdp_label_flip(once, 0, 1)
    assert [s.label for s in once.samples] == [s.label for s in twice.samples]


def test_tmp_boost_identity():
    g, l = np.array([1.0, 2.0]), np.array([0.5, 4.0])
    np.testing.assert_array_equal(tmp_boost(g, l, 1.0), l)


def test_tmp_boost_arithmetic():
    out = tmp_boost(np.zeros(2), np.array([1.0, 2.0]), 5.0)
    np.testing.assert_allclose(out, [5.0, 10.0], atol=1e-15)


def test_tmp_boost_equals_scale_update(rng):
    g, l = rng.normal(size=7), rng.normal(size=7)
    for boost in (0.5, 1.0, 3.7):
        np.testing.assert_array_equal(tmp_boost(g, l, boost), scale_update(g, l, boost))


def test_tmp_boost_composes_multiplicatively(rng):
    g, l = rng.normal(size=5), rng.normal(size=5)
    chained = tmp_boost(g, tmp_boost(g, l, 2.0), 3.0)
    np.testing.assert_allclose(chained, tmp_boost(g, l, 6.0), atol=1e-12)


def test_attack_spec_validation():
    with pytest.raises(InvalidConfigError):
        AttackSpec(kind="backdoor").validate()
    with pytest.raises(InvalidConfigError):
        AttackSpec(kind="tdp_label_flip", source=1, target=1).validate()
    with pytest.raises(InvalidConfigError):
        AttackSpec(kind="tmp_boost", boost=0.0).validate()
    AttackSpec(kind="none", source=0, target=0).validate()  # s == t fine when inactive


def _behavior(kind, shard, arch, cfg, **kwargs):
    net = build_classifier(arch)
    spec = AttackSpec(kind=kind, source=0, target=1, **kwargs)
    return build_malicious_client(spec, shard, net=net, config=cfg, client_id=3), net


def test_none_behavior_matches_benign_bitwise(shard, arch):
    cfg = FederationConfig(n_clients=4, clients_per_round=2, rounds=2, local_epochs=1,
                           source_class=0, target_class=1, seed=5)
    behavior, net = _behavior("none", shard, arch, cfg)
    g = init_global_params(arch, 5)
    submitted = behavior.submit(g, rnd=1, poisoning_active=True, train_seed=99)
    benign = local_train(net, g, shard, cfg.local_epochs, cfg.learning_rate,
                         cfg.local_batch_size, 99, optimizer=cfg.optimizer)
    np.testing.assert_array_equal(submitted, benign)


def test_tdp_without_source_class_equals_benign(arch):
    # a shard holding no source samples makes the flip a no-op
    ds = synth_texture_dataset(3, 6, 8, seed=77)
    from fplab.data import Dataset

    no_source = Dataset([s for s in ds.samples if s.label != 0], 3)
    cfg = FederationConfig(n_clients=4, clients_per_round=2, rounds=2, local_epochs=1,
                           source_class=0, target_class=1, seed=5)
    behavior, net = _behavior("tdp_label_flip", no_source, arch, cfg)
    g = init_global_params(arch, 1)
    submitted = behavior.submit(g, rnd=0, poisoning_active=True, train_seed=4)
    benign = local_train(net, g, no_source, cfg.local_epochs, cfg.learning_rate,
                         cfg.local_batch_size, 4, optimizer=cfg.optimizer)
    np.testing.assert_array_equal(submitted, benign)


def test_behaviors_pass_through_before_poisoning(shard, arch):
    cfg = FederationConfig(n_clients=4, clients_per_round=2, rounds=2, local_epochs=1,
                           source_class=0, target_class=1, seed=5)
    for kind in ("tdp_label_flip", "tmp_boost"):
        behavior, net = _behavior(kind, shard, arch, cfg, boost=3.0)
        g = init_global_params(arch, 2)
        submitted = behavior.submit(g, rnd=0, poisoning_active=False, train_seed=11)
        benign = local_train(net, g, shard, cfg.local_epochs, cfg.learning_rate,
                             cfg.local_batch_size, 11, optimizer=cfg.optimizer)
        np.testing.assert_array_equal(submitted, benign)


def test_tmp_behavior_boosts_honest_update(shard, arch):
    cfg = FederationConfig(n_clients=4, clients_per_round=2, rounds=2, local_epochs=1,
                           source_class=0, target_class=1, seed=5)
    behavior, net = _behavior("tmp_boost", shard, arch, cfg, boost=4.0)
    g = init_global_params(arch, 3)
    submitted = behavior.submit(g, rnd=0, poisoning_active=True, train_seed=8)
    honest = local_train(net, g, shard, cfg.local_epochs, cfg.learning_rate,
                         cfg.local_batch_size, 8, optimizer=cfg.optimizer)
    np.testing.assert_allclose(submitted, tmp_boost(g, honest, 4.0), atol=1e-12)


def test_poicgan_behavior_submits_nonbenign_update(shard, arch):
    cfg = FederationConfig(n_clients=4, clients_per_round=2, rounds=2, local_epochs=1,
                           source_class=0, target_class=1, seed=5)
    psg_cfg = PsgConfig(iterations=3, batch_size=4, noise_dim=4, source=0, target=1,
                        arch_scale=1, seed=5)
    behavior, net = _behavior("poicgan", shard, arch, cfg, psg_config=psg_cfg)
    g = init_global_params(arch, 4)
    submitted = behavior.submit(g, rnd=0, poisoning_active=True, train_seed=6)
    benign = local_train(net, g, shard, cfg.local_epochs, cfg.learning_rate,
                         cfg.local_batch_size, 6, optimizer=cfg.optimizer)
    assert np.linalg.norm(submitted - benign) > 0
    # the poisoned local set is fixed: resubmitting in a later round with the
    # same train seed gives the same update
    again = behavior.submit(g, rnd=1, poisoning_active=True, train_seed=6)
    np.testing.assert_array_equal(submitted, again)
