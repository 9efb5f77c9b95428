"""Experiment configuration: a flat key = value text format.

Federation fields are bare keys; the generator, attack, defense and dataset
sections use dotted prefixes (psg., attack., defense., dataset.). The source,
target and seed values live once in the federation section and are propagated
into the derived attack and generator configs at build time.
"""

from dataclasses import dataclass

from ..attacks import AttackSpec
from ..defenses import DefenseSpec
from ..errors import InvalidConfigError
from ..fl_core import FederationConfig
from ..psg import PsgConfig


class ConfigError(InvalidConfigError):
    """Invalid or unknown configuration entry, with the offending key."""


def _bool(raw):
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _opt_int(raw):
    return None if raw.lower() in ("auto", "none") else int(raw)


# key -> (caster, default)
SCHEMA = {
    "n_clients": (int, 20),
    "clients_per_round": (int, 10),
    "rounds": (int, 200),
    "local_epochs": (int, 2),
    "learning_rate": (float, 0.01),
    "optimizer": (str, "sgd"),
    "pmr": (float, 0.4),
    "poison_start_round": (_opt_int, None),
    "scaling_factor": (float, 1.0),
    "source_class": (int, 0),
    "target_class": (int, 1),
    "seed": (int, 0),
    "poison_ratio": (float, 1.0),
    "local_batch_size": (int, 8),
    "save_round_snapshots": (_bool, False),
    "output_dir": (str, ""),
    "psg.iterations": (int, 200),
    "psg.batch_size": (int, 32),
    "psg.noise_dim": (int, 32),
    "psg.noise_dist": (str, "standard_normal"),
    "psg.gen_lr": (float, 2e-4),
    "psg.disc_lr": (float, 2e-4),
    "psg.arch_scale": (int, 2),
    "psg.generator_loss_form": (str, "nonsaturating"),
    "attack.kind": (str, "none"),
    "attack.boost": (float, 1.0),
    "defense.kind": (str, "none"),
    "defense.krum_f": (_opt_int, None),
    "defense.rlr_threshold": (_opt_int, None),
    "defense.rlr_lr": (float, 1.0),
    "defense.flame_noise": (float, 0.001),
    "dataset.kind": (str, "synthetic"),
    "dataset.classes": (int, 4),
    "dataset.per_class": (int, 100),
    "dataset.test_per_class": (int, 40),
    "dataset.size": (int, 16),
    "dataset.path": (str, ""),
    "dataset.channels": (_opt_int, None),
    "dataset.holdout": (float, 0.2),
}


@dataclass
class DatasetSpec:
    kind: str = "synthetic"
    classes: int = 4
    per_class: int = 100
    test_per_class: int = 40
    size: int = 16
    path: str = ""
    channels: int = None
    holdout: float = 0.2

    def validate(self):
        if self.kind not in ("synthetic", "folder"):
            raise ConfigError(f"dataset.kind: unknown kind {self.kind!r}")
        if self.kind == "folder" and not self.path:
            raise ConfigError("dataset.path: required when dataset.kind = folder")
        return self


@dataclass
class ExperimentConfig:
    federation: FederationConfig
    psg: PsgConfig
    attack: AttackSpec
    defense: DefenseSpec
    dataset: DatasetSpec
    output_dir: str = ""
    save_round_snapshots: bool = False
    flat: dict = None  # normalized key -> value view used for snapshots

    def validate(self):
        self.federation.validate()
        self.psg.validate()
        self.attack.validate()
        self.defense.validate()
        self.dataset.validate()
        return self


def default_flat():
    return {key: default for key, (_, default) in SCHEMA.items()}


def parse_flat(path):
    """Read a key = value file into a fully defaulted flat dict."""
    flat = default_flat()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in SCHEMA:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            caster, _ = SCHEMA[key]
            try:
                flat[key] = caster(raw)
            except ValueError as err:
                raise ConfigError(f"{path}:{lineno}: {key}: {err}") from err
    return flat


def build_experiment(flat):
    """Turn a flat dict into validated config objects with s/t/seed propagated."""
    fed = FederationConfig(
        n_clients=flat["n_clients"],
        clients_per_round=flat["clients_per_round"],
        rounds=flat["rounds"],
        local_epochs=flat["local_epochs"],
        learning_rate=flat["learning_rate"],
        optimizer=flat["optimizer"],
        pmr=flat["pmr"],
        poison_start_round=flat["poison_start_round"],
        scaling_factor=flat["scaling_factor"],
        source_class=flat["source_class"],
        target_class=flat["target_class"],
        seed=flat["seed"],
        poison_ratio=flat["poison_ratio"],
        local_batch_size=flat["local_batch_size"],
    )
    psg = PsgConfig(
        iterations=flat["psg.iterations"],
        batch_size=flat["psg.batch_size"],
        noise_dim=flat["psg.noise_dim"],
        noise_dist=flat["psg.noise_dist"],
        source=fed.source_class,
        target=fed.target_class,
        gen_lr=flat["psg.gen_lr"],
        disc_lr=flat["psg.disc_lr"],
        arch_scale=flat["psg.arch_scale"],
        generator_loss_form=flat["psg.generator_loss_form"],
        seed=fed.seed,
    )
    attack = AttackSpec(
        kind=flat["attack.kind"],
        source=fed.source_class,
        target=fed.target_class,
        boost=flat["attack.boost"],
        psg_config=psg,
    )
    defense = DefenseSpec(
        kind=flat["defense.kind"],
        krum_f=flat["defense.krum_f"],
        rlr_threshold=flat["defense.rlr_threshold"],
        rlr_lr=flat["defense.rlr_lr"],
        flame_noise=flat["defense.flame_noise"],
    )
    dataset = DatasetSpec(
        kind=flat["dataset.kind"],
        classes=flat["dataset.classes"],
        per_class=flat["dataset.per_class"],
        test_per_class=flat["dataset.test_per_class"],
        size=flat["dataset.size"],
        path=flat["dataset.path"],
        channels=flat["dataset.channels"],
        holdout=flat["dataset.holdout"],
    )
    cfg = ExperimentConfig(
        federation=fed,
        psg=psg,
        attack=attack,
        defense=defense,
        dataset=dataset,
        output_dir=flat["output_dir"],
        save_round_snapshots=flat["save_round_snapshots"],
        flat=dict(flat),
    )
    try:
        return cfg.validate()
    except InvalidConfigError as err:
        raise ConfigError(str(err)) from err


def load_experiment(path):
    return build_experiment(parse_flat(path))


def format_flat(flat):
    lines = []
    for key in SCHEMA:
        value = flat[key]
        if value is None:
            value = "auto"
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def write_snapshot(flat, path):
    with open(path, "w") as fh:
        fh.write(format_flat(flat))
