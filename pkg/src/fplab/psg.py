"""Poison sample generator: a conditional GAN whose discriminator is fed
label-flipped source-class pairs.

The discriminator sees three kinds of input pairs: non-source real images with
their true labels (real), source-class real images paired with the target
label (real), and generated images paired with the target label (fake). The
flipped pairing teaches the generator to emit source-looking images under the
target condition. Labels condition the discriminator as constant one-hot
spatial planes concatenated to the image channels, and the generator as a
one-hot block appended to the noise vector.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, LabeledSample, PoisonedDataset
from .errors import (
    DivergenceError,
    InvalidBatchError,
    InvalidConfigError,
    InvalidDatasetError,
)
from .nn import (
    Adam,
    BatchNorm2d,
    Conv2d,
    ConvTranspose2d,
    Flatten,
    LeakyReLU,
    ReLU,
    Sequential,
    Sigmoid,
    Tanh,
)
from .seeding import TAG_GEN, TAG_NOISE, TAG_PSG, rng_from, sub_seed

PROB_EPS = 1e-7
DCGAN_INIT_STD = 0.02
GAN_ADAM_BETA1 = 0.5

LOSS_FORMS = ("nonsaturating", "literal_alg1")


@dataclass
class PsgConfig:
    iterations: int = 200
    batch_size: int = 32
    noise_dim: int = 32
    noise_dist: str = "standard_normal"
    source: int = 0
    target: int = 1
    gen_lr: float = 2e-4
    disc_lr: float = 2e-4
    arch_scale: int = 2
    generator_loss_form: str = "nonsaturating"
    seed: int = 0

    def validate(self):
        if self.source == self.target:
            raise InvalidConfigError("source and target labels must differ")
        if self.iterations < 1:
            raise InvalidConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise InvalidConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.noise_dim < 1:
            raise InvalidConfigError(f"noise_dim must be >= 1, got {self.noise_dim}")
        if self.noise_dist != "standard_normal":
            raise InvalidConfigError(f"unsupported noise distribution {self.noise_dist!r}")
        if self.generator_loss_form not in LOSS_FORMS:
            raise InvalidConfigError(
                f"generator_loss_form must be one of {LOSS_FORMS}, "
                f"got {self.generator_loss_form!r}"
            )
        if self.arch_scale < 1:
            raise InvalidConfigError(f"arch_scale must be >= 1, got {self.arch_scale}")
        if self.gen_lr <= 0 or self.disc_lr <= 0:
            raise InvalidConfigError("learning rates must be > 0")
        return self


def _upsample_levels(image_size):
    levels = int(round(math.log2(image_size / 4)))
    if image_size != 4 * 2**levels or levels < 1:
        raise InvalidConfigError(
            f"generator resolution must be 8/16/32/64, got {image_size}"
        )
    return levels


def build_generator(noise_dim, num_classes, image_size, channels, arch_scale):
    """Deconv/BN stack from a (noise + one-hot) 1x1 input up to a tanh image."""
    levels = _upsample_levels(image_size)
    widths = [8 * arch_scale * 2 ** (levels - i) for i in range(levels)]
    layers = [
        ConvTranspose2d(noise_dim + num_classes, widths[0], 4, 1, 0, DCGAN_INIT_STD),
        BatchNorm2d(widths[0], init_std=DCGAN_INIT_STD),
        ReLU(),
    ]
    for i in range(1, levels):
        layers += [
            ConvTranspose2d(widths[i - 1], widths[i], 4, 2, 1, DCGAN_INIT_STD),
            BatchNorm2d(widths[i], init_std=DCGAN_INIT_STD),
            ReLU(),
        ]
    layers += [ConvTranspose2d(widths[-1], channels, 4, 2, 1, DCGAN_INIT_STD), Tanh()]
    return Sequential(layers)


def build_discriminator(num_classes, image_size, channels, arch_scale):
    """Conv/BN stack from (image + label planes) down to a sigmoid realness score."""
    levels = _upsample_levels(image_size)
    widths = [8 * arch_scale * 2 ** (i + 1) for i in range(levels)]
    layers = [
        Conv2d(channels + num_classes, widths[0], 4, 2, 1, DCGAN_INIT_STD),
        BatchNorm2d(widths[0], init_std=DCGAN_INIT_STD),
        LeakyReLU(0.2),
    ]
    for i in range(1, levels):
        layers += [
            Conv2d(widths[i - 1], widths[i], 4, 2, 1, DCGAN_INIT_STD),
            BatchNorm2d(widths[i], init_std=DCGAN_INIT_STD),
            LeakyReLU(0.2),
        ]
    layers += [Conv2d(widths[-1], 1, 4, 1, 0, DCGAN_INIT_STD), Sigmoid(), Flatten()]
    return Sequential(layers)


def one_hot(labels, num_classes):
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def condition_planes(labels, num_classes, h, w):
    return np.repeat(
        np.repeat(one_hot(labels, num_classes)[:, :, None, None], h, axis=2), w, axis=3
    )


def disc_input(images_nchw, labels, num_classes):
    n, _, h, w = images_nchw.shape
    labels = np.broadcast_to(np.atleast_1d(labels), (n,))
    return np.concatenate([images_nchw, condition_planes(labels, num_classes, h, w)], axis=1)


def gen_input(z, label, num_classes):
    n = z.shape[0]
    labels = np.broadcast_to(np.atleast_1d(label), (n,))
    return np.concatenate([z, one_hot(labels, num_classes)], axis=1)[:, :, None, None]


def flip_source_labels(batch, s, t):
    """Relabel source-class samples to the target; everything else untouched.

    Pixel tensors are passed through by reference, so image data is bitwise
    identical before and after; order is preserved.
    """
    if s == t:
        raise InvalidConfigError("source and target labels must differ")
    return [LabeledSample(b.image, t) if b.label == s else b for b in batch]


def sample_noise(p_z, b, noise_dim, seed):
    """Draw b latent vectors from the configured noise distribution."""
    if p_z != "standard_normal":
        raise InvalidConfigError(f"unsupported noise distribution {p_z!r}")
    if b < 1:
        raise InvalidConfigError(f"batch size must be >= 1, got {b}")
    return rng_from(seed, TAG_NOISE).standard_normal((b, noise_dim))


@dataclass
class GanState:
    generator: Sequential
    discriminator: Sequential
    gen_opt: Adam
    disc_opt: Adam
    iteration: int = 0

    @property
    def generator_params(self):
        return self.generator.state_vector()

    @property
    def discriminator_params(self):
        return self.discriminator.state_vector()


@dataclass
class PoisonGenerator:
    """Trained generator state plus everything needed to rebuild and sample it."""

    state: np.ndarray
    target_label: int
    noise_dim: int
    training_iterations: int
    arch: dict
    snapshots: list = field(default_factory=list)  # (iteration, PoisonGenerator)

    def build_net(self):
        net = build_generator(
            self.noise_dim,
            self.arch["num_classes"],
            self.arch["image_size"],
            self.arch["channels"],
            self.arch["arch_scale"],
        )
        net.set_state_vector(self.state)
        return net

    def sample(self, count, seed, batch=256):
        """Generate count images (N,C,H,W), clipped to [-1, 1]; seeded."""
        net = self.build_net()
        z_all = rng_from(seed, TAG_GEN).standard_normal((count, self.noise_dim))
        chunks = []
        for start in range(0, count, batch):
            z = z_all[start : start + batch]
            x = net.forward(
                gen_input(z, self.target_label, self.arch["num_classes"]), train=False
            )
            chunks.append(np.clip(x, -1.0, 1.0))
        if not chunks:
            c, s = self.arch["channels"], self.arch["image_size"]
            return np.zeros((0, c, s, s))
        return np.concatenate(chunks)


def _score(d_net, images_nchw, labels, num_classes, train):
    return d_net.forward(disc_input(images_nchw, labels, num_classes), train=train)[:, 0]


def discriminator_forward(d_net, image, condition, num_classes):
    """Realness score in (0, 1) for an (H,W,C) image or (N,H,W,C) batch."""
    arr = np.asarray(image)
    single = arr.ndim == 3
    batch = arr[None] if single else arr
    scores = _score(d_net, batch.transpose(0, 3, 1, 2), condition, num_classes, train=False)
    return float(scores[0]) if single else scores


def _clipped_log(p):
    return np.log(np.clip(p, PROB_EPS, 1.0 - PROB_EPS))


def _check_batch(name, images):
    if images.shape[0] == 0:
        raise InvalidBatchError(f"{name} batch is empty")


def discriminator_loss(d_net, real_other, real_source_flipped, fake, num_classes):
    """Training loss of the discriminator over its three input pair kinds.

    Each argument is an (images_nchw, labels) pair; labels may be a scalar.
    Evaluation only: batch statistics are used but running stats are restored.
    """
    saved = d_net._buffers.copy()
    try:
        total = 0.0
        for (x, y), sign in ((real_other, 1), (real_source_flipped, 1), (fake, -1)):
            _check_batch("discriminator", x)
            p = _score(d_net, x, y, num_classes, train=True)
            total += -_clipped_log(p if sign == 1 else 1.0 - p).mean()
        return float(total)
    finally:
        d_net._buffers[...] = saved


def discriminator_loss_and_grad(d_net, real_other, real_source_flipped, fake, num_classes):
    """Loss plus its gradient w.r.t. the discriminator parameters (training path)."""
    d_net.zero_grad()
    total = 0.0
    for (x, y), sign in ((real_other, 1), (real_source_flipped, 1), (fake, -1)):
        _check_batch("discriminator", x)
        p = _score(d_net, x, y, num_classes, train=True)
        n = p.shape[0]
        mask = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
        if sign == 1:
            total += -_clipped_log(p).mean()
            dp = np.where(mask, -1.0 / np.maximum(p, PROB_EPS), 0.0) / n
        else:
            total += -_clipped_log(1.0 - p).mean()
            dp = np.where(mask, 1.0 / np.maximum(1.0 - p, PROB_EPS), 0.0) / n
        d_net.backward(dp[:, None], input_grad=False)
    return float(total), d_net.grad_vector.copy()


def generator_loss(d_net, g_net, z, target, num_classes, form="nonsaturating"):
    """Generator training loss on a latent batch, under the configured form.

    The default form drives D(G(z|t)|t) toward 1; the alternative keeps the
    loss exactly as the update rule writes it (its gradient points the other
    way, which is why it is not the default). Evaluation only.
    """
    if z.shape[0] == 0:
        raise InvalidBatchError("latent batch is empty")
    if form not in LOSS_FORMS:
        raise InvalidConfigError(f"unknown generator loss form {form!r}")
    saved_g, saved_d = g_net._buffers.copy(), d_net._buffers.copy()
    try:
        fake = g_net.forward(gen_input(z, target, num_classes), train=True)
        p = _score(d_net, fake, target, num_classes, train=True)
        if form == "nonsaturating":
            return float(-_clipped_log(p).mean())
        return float(-_clipped_log(1.0 - p).mean())
    finally:
        g_net._buffers[...] = saved_g
        d_net._buffers[...] = saved_d


def generator_loss_and_grad(d_net, g_net, z, target, num_classes, form="nonsaturating"):
    """Loss plus its gradient w.r.t. the generator parameters (training path)."""
    if z.shape[0] == 0:
        raise InvalidBatchError("latent batch is empty")
    if form not in LOSS_FORMS:
        raise InvalidConfigError(f"unknown generator loss form {form!r}")
    g_net.zero_grad()
    d_net.zero_grad()
    fake = g_net.forward(gen_input(z, target, num_classes), train=True)
    p = _score(d_net, fake, target, num_classes, train=True)
    n = p.shape[0]
    mask = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    if form == "nonsaturating":
        loss = -_clipped_log(p).mean()
        dp = np.where(mask, -1.0 / np.maximum(p, PROB_EPS), 0.0) / n
    else:
        loss = -_clipped_log(1.0 - p).mean()
        dp = np.where(mask, 1.0 / np.maximum(1.0 - p, PROB_EPS), 0.0) / n
    gx = d_net.backward(dp[:, None])
    g_net.backward(gx[:, : fake.shape[1]], input_grad=False)  # strip the label planes
    return float(loss), g_net.grad_vector.copy()


def train_psg(local_set, config, snapshot_at=()):
    """Run the adversarial training loop and return the poison generator.

    Per iteration: sample a source batch (labels flipped to the target), a
    non-source batch (true labels) and noise; update the discriminator on its
    three-part loss; resample noise and update the generator. Deterministic
    under config.seed.
    """
    state, result = run_gan_training(local_set, config, snapshot_at)
    return result


def run_gan_training(local_set, config, snapshot_at=()):
    """train_psg workhorse; also returns the full GanState (both networks)."""
    config.validate()
    labels = local_set.labels()
    if local_set.num_classes <= max(config.source, config.target):
        raise InvalidDatasetError(
            f"dataset has {local_set.num_classes} classes; labels "
            f"{config.source}/{config.target} out of range"
        )
    source_pool = np.flatnonzero(labels == config.source)
    other_pool = np.flatnonzero(labels != config.source)
    if source_pool.size == 0:
        raise InvalidDatasetError("training set has no source-class sample")
    if other_pool.size == 0:
        raise InvalidDatasetError("training set has no non-source sample")

    h, w, c = local_set.image_shape()
    arch = {
        "image_size": h,
        "channels": c,
        "num_classes": local_set.num_classes,
        "arch_scale": config.arch_scale,
    }
    g_net = build_generator(config.noise_dim, local_set.num_classes, h, c, config.arch_scale)
    d_net = build_discriminator(local_set.num_classes, h, c, config.arch_scale)
    g_net.init_params(rng_from(config.seed, TAG_PSG, 0))
    d_net.init_params(rng_from(config.seed, TAG_PSG, 1))
    state = GanState(
        g_net,
        d_net,
        Adam(g_net, config.gen_lr, beta1=GAN_ADAM_BETA1),
        Adam(d_net, config.disc_lr, beta1=GAN_ADAM_BETA1),
    )
    batch_rng = rng_from(config.seed, TAG_PSG, 2)
    snapshot_at = set(snapshot_at)
    snapshots = []

    def as_generator(iteration):
        return PoisonGenerator(
            g_net.state_vector(),
            config.target,
            config.noise_dim,
            iteration,
            dict(arch),
        )

    b = config.batch_size
    nc = local_set.num_classes
    for n in range(1, config.iterations + 1):
        src = [local_set.samples[i] for i in batch_rng.choice(source_pool, b, replace=True)]
        flipped = flip_source_labels(src, config.source, config.target)
        x_s = np.stack([s.image for s in flipped]).transpose(0, 3, 1, 2)
        others = [local_set.samples[i] for i in batch_rng.choice(other_pool, b, replace=True)]
        x_i = np.stack([s.image for s in others]).transpose(0, 3, 1, 2)
        y_i = np.array([s.label for s in others], dtype=np.int64)

        z = sample_noise(config.noise_dist, b, config.noise_dim, sub_seed(config.seed, TAG_NOISE, n, 0))
        fake = g_net.forward(gen_input(z, config.target, nc), train=True)
        d_loss, _ = discriminator_loss_and_grad(
            d_net, (x_i, y_i), (x_s, config.target), (fake, config.target), nc
        )
        if not math.isfinite(d_loss):
            raise DivergenceError("non-finite discriminator loss", iteration=n)
        state.disc_opt.step()

        z2 = sample_noise(config.noise_dist, b, config.noise_dim, sub_seed(config.seed, TAG_NOISE, n, 1))
        g_loss, _ = generator_loss_and_grad(
            d_net, g_net, z2, config.target, nc, config.generator_loss_form
        )
        if not math.isfinite(g_loss):
            raise DivergenceError("non-finite generator loss", iteration=n)
        state.gen_opt.step()
        state.iteration = n
        if n in snapshot_at:
            snapshots.append((n, as_generator(n)))

    result = as_generator(config.iterations)
    result.snapshots = snapshots
    return state, result


def generate_poison_set(generator, count, seed):
    """Sample count poisoned images, all labeled with the generator's target."""
    if count < 0:
        raise InvalidConfigError(f"count must be >= 0, got {count}")
    imgs = generator.sample(count, seed)
    samples = [
        LabeledSample(np.ascontiguousarray(img.transpose(1, 2, 0)), generator.target_label)
        for img in imgs
    ]
    provenance = f"psg:iterations={generator.training_iterations}:seed={seed}"
    return PoisonedDataset(
        samples, generator.arch["num_classes"], None, provenance=provenance
    )
