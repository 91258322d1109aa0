"""Adversarially trained denoisers for RoI patches (G1/D1) and colour signals (G2/D2).

A generator maps a corrupted item back toward the clean-data distribution;
a discriminator scores items as real (clean) or refined. Training sees
clean items only and corrupts them with Gaussian noise on the fly.

Both networks work in a normalized space:

* patches (3192-d, the 19 x 56 x 3 downsampled RoI) are centred per feature
  and divided by one global scale;
* signals (c x T) are first turned into relative AC/DC units, x / row mean - 1,
  then treated the same way. The noise level ``sigma`` of a signal refiner
  is likewise relative to each row's mean.

The generator input carries an extra global scale so a typical noisy input
has unit norm. Reconstruction error is measured in the output space, summed
over features and averaged over the batch.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn

DOMAINS = ("signal", "patch")
ROLE_TAGS = {"patch": ("G1", "D1"), "signal": ("G2", "D2")}


@dataclass
class RefinerConfig:
    domain: str = "signal"
    sigma: float = 0.05
    lam: float = 0.2
    gen_hidden: tuple = (96,)
    gen_activation: str | None = None
    disc_hidden: tuple = (128,)
    steps: int = 3000
    batch_size: int = 64
    learning_rate: float = 0.01
    d_learning_rate: float = 0.01
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.steps < 1 or self.batch_size < 2:
            raise ValueError("need at least one step and batches of two or more")
        self.gen_hidden = tuple(self.gen_hidden)
        self.disc_hidden = tuple(self.disc_hidden)

    @classmethod
    def for_patches(cls, **kw):
        base = dict(domain="patch", sigma=0.05, gen_hidden=(512, 128, 512),
                    gen_activation="leaky_relu", steps=1500, batch_size=32,
                    learning_rate=0.003, d_learning_rate=0.003)
        base.update(kw)
        return cls(**base)


@dataclass
class GanHistory:
    l_gd: list = field(default_factory=list)
    l_g: list = field(default_factory=list)
    total: list = field(default_factory=list)
    d_real: list = field(default_factory=list)
    d_fake: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


@dataclass
class GanPair:
    generator: nn.Network
    discriminator: nn.Network
    config: RefinerConfig
    shape: tuple            # item shape: (3192,) for patches, (c, T) for signals
    mu: np.ndarray          # per-feature mean of the clean normalized data
    scale: float            # global sd of the clean data after centring
    in_scale: float         # extra generator input scale
    history: GanHistory = field(default_factory=GanHistory)

    @property
    def dim(self):
        return int(np.prod(self.shape))

    # -- coordinate maps ---------------------------------------------------
    def _base(self, x):
        """Raw items (N, *shape) -> (N, d) plus what is needed to invert."""
        x = np.asarray(x, dtype=np.float64).reshape((-1,) + tuple(self.shape))
        if self.config.domain == "signal":
            level = x.mean(axis=-1, keepdims=True)
            if np.any(level == 0):
                raise ValueError("signal rows with zero mean have no relative form")
            return (x / level - 1.0).reshape(len(x), -1), level
        return x.reshape(len(x), -1), None

    def to_norm(self, x):
        base, level = self._base(x)
        return (base - self.mu) / self.scale, level

    def from_norm(self, z, level):
        base = z * self.scale + self.mu
        if self.config.domain == "signal":
            return (base.reshape((-1,) + tuple(self.shape)) + 1.0) * level
        return base.reshape((-1,) + tuple(self.shape))

    @property
    def d_scale(self):
        return float(np.sqrt(self.dim))

    def generate(self, z, mode="infer"):
        return self.generator.forward(z / self.in_scale, mode)

    def score(self, z, mode="infer"):
        return self.discriminator.forward(z / self.d_scale, mode)

    def score_backward(self, grad):
        return self.discriminator.backward(grad) / self.d_scale


def add_noise(x, sigma, seed=0, relative=False):
    """x + N(0, sigma^2), or sigma times each row's mean when ``relative``."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    noise = np.random.default_rng(seed).standard_normal(x.shape) * sigma
    if relative:
        noise *= np.abs(x.mean(axis=-1, keepdims=True))
    return x + noise


def gan_losses(batch_clean, batch_refined, d_real, d_fake, lam=0.2):
    """(L_{G+D}, L_G, L) for one batch.

    L_{G+D} is the discriminator cross-entropy, -log D(x) - log(1 - D(x')),
    averaged over the batch; L_G is the squared reconstruction error summed
    over features and averaged over the batch; L = L_{G+D} + lam * L_G.
    """
    real = np.asarray(d_real, dtype=np.float64)
    fake = np.asarray(d_fake, dtype=np.float64)
    for name, s in (("real", real), ("fake", fake)):
        c = np.clip(s, nn.BCE_CLAMP, 1 - nn.BCE_CLAMP)
        if not np.all((c > 0) & (c < 1)):
            raise RuntimeError(f"{name} scores left (0, 1) after clamping")
    l_gd = nn.bce_loss(real, 1.0)[0] + nn.bce_loss(fake, 0.0)[0]
    l_g = nn.mse_loss(batch_refined, batch_clean)[0]
    return l_gd, l_g, l_gd + lam * l_g


def build_generator(dim, config: RefinerConfig):
    hidden = (config.gen_activation,) if config.gen_activation else ()
    role = ROLE_TAGS[config.domain][0]
    return nn.Network.mlp([dim, *config.gen_hidden, dim], seed=config.seed,
                          hidden=hidden, slope=0.2, role=role)


def build_discriminator(dim, config: RefinerConfig):
    role = ROLE_TAGS[config.domain][1]
    return nn.Network.mlp([dim, *config.disc_hidden, 1], seed=config.seed + 1,
                          hidden=("leaky_relu",), output="sigmoid", slope=0.2, role=role)


def _corrupt_norm(pair, z_clean, rng):
    """Noise of sd sigma in raw (or relative) units, expressed in normalized coordinates."""
    noise = rng.standard_normal(z_clean.shape) * pair.config.sigma
    return z_clean + noise / pair.scale


def train_gan(clean, config: RefinerConfig | None = None, log=None) -> GanPair:
    """Alternate one discriminator step and one generator step per batch.

    ``clean`` holds clean items: (N, 3192) patches or (N, c, T) signals
    (an (N, T) array is read as single-row signals).
    """
    config = config or RefinerConfig()
    x = np.asarray(clean, dtype=np.float64)
    if config.domain == "signal" and x.ndim == 2:
        x = x[:, None, :]
    if len(x) < 2:
        raise ValueError("need at least two clean items")
    shape = x.shape[1:]
    dim = int(np.prod(shape))
    probe = GanPair(None, None, config, shape, np.zeros(dim), 1.0, 1.0)
    base, level = probe._base(x)
    mu = base.mean(axis=0)
    spread = float((base - mu).std())
    scale = spread if spread > 0 else 1.0
    noisy_var = 1.0 + (config.sigma / scale) ** 2
    in_scale = float(np.sqrt(dim * noisy_var))
    pair = GanPair(build_generator(dim, config), build_discriminator(dim, config),
                   config, shape, mu, scale, in_scale)
    z = (base - mu) / scale
    g_opt = nn.SGD(config.learning_rate, config.momentum)
    d_opt = nn.SGD(config.d_learning_rate, config.momentum)
    rng = np.random.default_rng(config.seed)
    hist = pair.history
    G, D = pair.generator, pair.discriminator
    patience = max(1, config.steps // 4)
    best, since_best, warned = np.inf, 0, False
    for step in range(config.steps):
        idx = rng.integers(0, len(z), config.batch_size)
        zc = z[idx]
        zn = _corrupt_norm(pair, zc, rng)
        fake = pair.generate(zn, "train")

        # discriminator step on real vs detached fake
        d_real = pair.score(zc, "train")
        _, g_real = nn.bce_loss(d_real, 1.0)
        D.backward(g_real)
        real_grads = [g.copy() for g in D.gradients()]
        d_fake = pair.score(fake, "train")
        _, g_fake = nn.bce_loss(d_fake, 0.0)
        D.backward(g_fake)
        d_opt.step([p for _, _, p in D.parameters()],
                   [a + b for a, b in zip(real_grads, D.gradients())])

        # generator step: non-saturating adversarial term plus lam * reconstruction
        l_gd, l_g, total = gan_losses(zc, fake, d_real, d_fake, config.lam)
        d_on_fake = pair.score(fake, "train")
        _, g_adv = nn.bce_loss(d_on_fake, 1.0)
        grad_out = pair.score_backward(g_adv) + config.lam * nn.mse_loss(fake, zc)[1]
        G.backward(grad_out)
        g_opt.step_network(G)

        if not np.isfinite(total):
            raise nn.TrainingDiverged(f"refiner loss became {total} at step {step}")
        hist.l_gd.append(l_gd)
        hist.l_g.append(l_g)
        hist.total.append(total)
        hist.d_real.append(float(np.mean(d_real)))
        hist.d_fake.append(float(np.mean(d_fake)))
        if l_g < 0.999 * best:
            best, since_best = l_g, 0
        else:
            since_best += 1
        if since_best >= patience and not warned:
            hist.warnings.append(
                f"step {step}: reconstruction loss has not improved for {since_best} steps"
                " (possible mode collapse)")
            warned = True
        if log and (step % 500 == 0 or step == config.steps - 1):
            log(f"{G.role} step {step} L_G+D {l_gd:.4f} L_G {l_g:.4f} L {total:.4f}")
    return pair


def refine(pair: GanPair, x):
    """Refine one item or a batch; output has the input's shape."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.shape == tuple(pair.shape)
    if not single and arr.shape[1:] != tuple(pair.shape):
        if not (pair.config.domain == "signal" and arr.ndim == 2 and pair.shape[0] == 1
                and arr.shape[1:] == pair.shape[1:]):
            raise nn.ShapeError(f"refiner expects items of shape {pair.shape}, got {arr.shape}")
    z, level = pair.to_norm(arr)
    out = pair.from_norm(pair.generate(z), level)
    if pair.config.domain == "patch":
        out = np.clip(out, 0.0, 1.0)
    if not np.all(np.isfinite(out)):
        raise nn.TrainingDiverged("refiner produced non-finite output")
    return out.reshape(arr.shape)


def discriminate(pair: GanPair, x):
    z, _ = pair.to_norm(x)
    return pair.score(z)[:, 0]


def _meta(pair: GanPair):
    cfg = asdict(pair.config)
    return {"kind": "refiner", "config": cfg, "shape": list(pair.shape),
            "mu": pair.mu.tolist(), "scale": pair.scale, "in_scale": pair.in_scale}


def save_pair(pair: GanPair, gen_path, disc_path):
    meta = _meta(pair)
    nn.save_params(pair.generator, gen_path, extra=meta)
    nn.save_params(pair.discriminator, disc_path, extra=meta)


def load_pair(gen_path, disc_path=None) -> GanPair:
    G, meta = nn.load_params(gen_path)
    if meta.get("kind") != "refiner" or G.role not in ("G1", "G2"):
        raise nn.CorruptWeightsError(f"{gen_path} does not hold a refiner generator")
    cfg = RefinerConfig(**meta["config"])
    D = None
    if disc_path is not None:
        D, _ = nn.load_params(disc_path)
        if D.role != ROLE_TAGS[cfg.domain][1]:
            raise nn.CorruptWeightsError(f"{disc_path} holds role {D.role!r}")
    return GanPair(G, D, cfg, tuple(meta["shape"]), np.array(meta["mu"]),
                   float(meta["scale"]), float(meta["in_scale"]))
