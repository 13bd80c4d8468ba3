"""Optimization and the alternating adversarial training loop.

Each training step runs the discriminator update first (real batch and a
detached generated batch, binary cross-entropy), then the generator update
(content term through the frozen feature extractor plus the weighted
adversarial term), one step each. Generated images are treated as constants
during the discriminator update, so neither step touches the other model's
parameters; the adversarial pass through the discriminator during the
generator step uses running statistics and restores nothing because it
reads, rather than writes, discriminator state.

Checkpoints written here are generator checkpoints with extra namespaces:
``disc.*`` for the discriminator, ``opt.g.*``/``opt.d.*`` for optimizer
state, and ``state.train`` for loop counters, so every other command can
open them directly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt
from .data import PairBatcher, PipelineConfig, bicubic_resize, center_crop, load_image
from .data import discover_images
from .errors import ConfigError, FormatError, NonFiniteError
from .losses import (
    DEFAULT_ADV_WEIGHT,
    FeatureExtractor,
    FeatureExtractorConfig,
    LossReport,
    adversarial_loss,
    adversarial_loss_grad,
    bce_fake_grad,
    bce_real_grad,
    content_loss,
    content_loss_grad,
    discriminator_loss,
    perceptual_loss,
)
from .metrics import SsimConfig, psnr, ssim
from .models import (
    DiscriminatorConfig,
    GeneratorConfig,
    build_discriminator,
    build_generator,
)
from .tensor import Tensor


@dataclass
class AdamWConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-2

    def __post_init__(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps <= 0:
            raise ConfigError("lr and eps must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")


class AdamW:
    """Adam with decoupled weight decay over a model's trainable parameters.

    The learning rate is kept in float32 so checkpointed values reproduce
    the in-memory ones bit for bit.
    """

    def __init__(self, model, cfg: AdamWConfig | None = None):
        self.cfg = cfg or AdamWConfig()
        self.params = list(model.named_parameters())
        self.lr = np.float32(self.cfg.lr)
        self.state = {
            name: {
                "t": 0,
                "m": np.zeros_like(p.data),
                "v": np.zeros_like(p.data),
            }
            for name, p in self.params
        }

    def step(self) -> None:
        """Apply one update from accumulated gradients; parameters whose
        gradient is unset are left untouched. Aborts before mutating
        anything if any gradient is non-finite."""
        for name, p in self.params:
            if p.grad is not None and not np.isfinite(p.grad).all():
                raise NonFiniteError(f"non-finite gradient for parameter {name!r}; step aborted")
        c = self.cfg
        b1 = np.float32(c.beta1)
        b2 = np.float32(c.beta2)
        eps = np.float32(c.eps)
        wd = np.float32(c.weight_decay)
        one = np.float32(1.0)
        for name, p in self.params:
            if p.grad is None:
                continue
            st = self.state[name]
            g = p.grad
            st["t"] += 1
            st["m"][:] = b1 * st["m"] + (one - b1) * g
            st["v"][:] = b2 * st["v"] + (one - b2) * (g * g)
            mhat = st["m"] / np.float32(1.0 - c.beta1 ** st["t"])
            vhat = st["v"] / np.float32(1.0 - c.beta2 ** st["t"])
            p.data -= self.lr * (mhat / (np.sqrt(vhat) + eps) + wd * p.data)

    # -- serialization ------------------------------------------------------

    def state_tensors(self, prefix: str) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, _ in self.params:
            st = self.state[name]
            out[f"{prefix}{name}.m"] = st["m"]
            out[f"{prefix}{name}.v"] = st["v"]
            out[f"{prefix}{name}.t"] = np.array([st["t"]], dtype=np.float32)
        return out

    def load_state_tensors(self, tensors, prefix: str) -> None:
        for name, p in self.params:
            try:
                m = tensors[f"{prefix}{name}.m"]
                v = tensors[f"{prefix}{name}.v"]
                t = tensors[f"{prefix}{name}.t"]
            except KeyError as e:
                raise FormatError(f"missing optimizer state {e.args[0]!r}") from None
            if m.shape != p.data.shape or v.shape != p.data.shape:
                raise FormatError(f"optimizer state shape mismatch for {name!r}")
            st = self.state[name]
            st["m"][:] = m
            st["v"][:] = v
            st["t"] = int(t.reshape(-1)[0])


@dataclass
class PlateauConfig:
    factor: float = 0.5
    patience: int = 5
    min_lr: float = 1e-7

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ConfigError("factor must be in (0, 1)")
        if self.patience < 0:
            raise ConfigError("patience must be non-negative")


class PlateauScheduler:
    """Halves the learning rate of the attached optimizers when the
    monitored metric stops improving (strict improvement, no minimum delta).
    """

    def __init__(self, cfg: PlateauConfig, optimizers: list[AdamW]):
        self.cfg = cfg
        self.optimizers = optimizers
        self.best = math.inf
        self.counter = 0

    def step(self, metric: float) -> float:
        if not math.isfinite(metric):
            raise NonFiniteError(f"plateau metric is not finite: {metric}")
        if metric < self.best:
            self.best = metric
            self.counter = 0
        else:
            self.counter += 1
            if self.counter > self.cfg.patience:
                for opt in self.optimizers:
                    opt.lr = np.float32(max(float(opt.lr) * self.cfg.factor, self.cfg.min_lr))
                self.counter = 0
        return float(self.optimizers[0].lr) if self.optimizers else math.nan


# ---------------------------------------------------------------------------
# Training steps
# ---------------------------------------------------------------------------


def _arr(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def discriminator_step(disc, real, fake, opt_d: AdamW) -> float:
    """One BCE update: real toward 1, generated (detached) toward 0.

    Each half of the loss is backpropagated right after its forward pass,
    since a layer retains only its most recent context.
    """
    real = _arr(real)
    fake = _arr(fake)
    disc.zero_grad()
    p_real = disc.forward(real, train=True)
    disc.backward(bce_real_grad(p_real))
    p_fake = disc.forward(fake, train=True)
    disc.backward(bce_fake_grad(p_fake))
    loss = discriminator_loss(p_real, p_fake)
    if not math.isfinite(loss):
        raise NonFiniteError(f"discriminator loss is not finite: {loss}")
    opt_d.step()
    return loss


def _snapshot_buffers(model):
    return [(p, p.data.copy()) for _, p in model.named_state() if not p.trainable]


def _restore_buffers(snapshot):
    for p, saved in snapshot:
        p.data[:] = saved


def generator_step(
    gen,
    disc,
    fx: FeatureExtractor,
    sr,
    hr,
    opt_g: AdamW,
    adv_weight: float = DEFAULT_ADV_WEIGHT,
    adv_reduce: str = "sum",
) -> tuple[float, float, float]:
    """Perceptual update of the generator; ``sr`` must come from a
    train-mode generator forward so its context is still live.

    Returns (content, adversarial, perceptual).
    """
    sr = _arr(sr)
    hr = _arr(hr)
    gen.zero_grad()
    phi_hr = fx.forward(hr, train=False)
    phi_sr = fx.forward(sr, train=True)
    content = content_loss(phi_hr, phi_sr)
    g_sr = fx.backward(content_loss_grad(phi_hr, phi_sr))
    if adv_weight != 0.0:
        # Read-only pass through the discriminator: batch-norm buffers are
        # snapshotted and restored so a generator step leaves the
        # discriminator bitwise untouched.
        saved = _snapshot_buffers(disc)
        disc.zero_grad()
        p_fake = disc.forward(sr, train=True)
        adversarial = adversarial_loss(p_fake, adv_reduce)
        g_sr = g_sr + np.float32(adv_weight) * disc.backward(
            adversarial_loss_grad(p_fake, adv_reduce)
        )
        _restore_buffers(saved)
    else:
        adversarial = 0.0
    perceptual = perceptual_loss(content, adversarial, adv_weight)
    gen.backward(g_sr.astype(np.float32, copy=False))
    opt_g.step()
    return content, adversarial, perceptual


def train_step(
    gen,
    disc,
    fx: FeatureExtractor,
    lr_batch,
    hr_batch,
    opt_g: AdamW,
    opt_d: AdamW,
    adv_weight: float = DEFAULT_ADV_WEIGHT,
    adv_reduce: str = "sum",
) -> LossReport:
    """Discriminator step, then generator step, on one (lr, hr) batch."""
    lr_arr = _arr(lr_batch)
    hr_arr = _arr(hr_batch)
    sr = _arr(gen.forward(lr_arr, train=True))
    d_loss = discriminator_step(disc, hr_arr, sr, opt_d)
    content, adversarial, perceptual = generator_step(
        gen, disc, fx, sr, hr_arr, opt_g, adv_weight=adv_weight, adv_reduce=adv_reduce
    )
    return LossReport(
        content=content,
        adversarial=adversarial,
        perceptual=perceptual,
        discriminator=d_loss,
    )


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------


@dataclass
class FitConfig:
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    extractor: FeatureExtractorConfig = field(default_factory=FeatureExtractorConfig)
    optimizer_g: AdamWConfig = field(default_factory=AdamWConfig)
    optimizer_d: AdamWConfig = field(default_factory=AdamWConfig)
    plateau: PlateauConfig = field(default_factory=PlateauConfig)
    batch_size: int = 8
    adv_weight: float = DEFAULT_ADV_WEIGHT
    adv_reduce: str = "sum"


@dataclass
class FitResult:
    latest_path: Path
    best_path: Path | None
    log_path: Path
    history: list[dict]


LOG_COLUMNS = [
    "epoch",
    "step",
    "content",
    "adversarial",
    "perceptual",
    "d_loss",
    "val_psnr",
    "val_ssim",
    "lr_g",
    "lr_d",
]


def _load_validation_pairs(val_dir, pipeline: PipelineConfig):
    """Deterministic center-crop pairs, normalized to [0, 1]."""
    files = discover_images(val_dir)
    if not files:
        raise ConfigError(f"no validation images in {val_dir}")
    pairs = []
    small = pipeline.crop_size // pipeline.scale
    for path in files:
        hr = center_crop(load_image(path), pipeline.crop_size)
        lr = bicubic_resize(hr, small, small)
        pairs.append((lr.tensor.data / np.float32(255), hr.tensor.data / np.float32(255)))
    return pairs


def _validate(gen, disc, fx, pairs, adv_weight, adv_reduce, ssim_cfg) -> dict:
    psnrs, ssims, perceptuals = [], [], []
    for lr_arr, hr_arr in pairs:
        sr = _arr(gen.forward(lr_arr, train=False))
        psnrs.append(psnr(sr, hr_arr, 1.0))
        ssims.append(ssim(sr, hr_arr, ssim_cfg))
        content = content_loss(fx.forward(hr_arr), fx.forward(sr))
        if adv_weight != 0.0:
            adversarial = adversarial_loss(disc.forward(sr, train=False), adv_reduce)
        else:
            adversarial = 0.0
        perceptuals.append(perceptual_loss(content, adversarial, adv_weight))
    return {
        "val_psnr": float(np.mean(psnrs)),
        "val_ssim": float(np.mean(ssims)),
        # Rounded to float32 so checkpointed plateau state resumes bitwise.
        "val_perceptual": float(np.float32(np.mean(perceptuals))),
    }


def _save_training_checkpoint(path, gen, disc, opt_g, opt_d, state_vec):
    tensors = ckpt.model_meta(gen)
    for name, p in gen.named_state():
        tensors[name] = p.data
    disc_meta = ckpt.model_meta(disc)
    tensors["meta.discriminator_config"] = disc_meta["meta.discriminator_config"]
    for name, p in disc.named_state():
        tensors[f"disc.{name}"] = p.data
    tensors.update(opt_g.state_tensors("opt.g."))
    tensors.update(opt_d.state_tensors("opt.d."))
    tensors["state.train"] = np.asarray(state_vec, dtype=np.float32)
    ckpt.write_checkpoint(path, tensors)


def fit(
    train_dir,
    val_dir,
    out_dir,
    epochs: int,
    seed: int,
    cfg: FitConfig | None = None,
    resume=None,
) -> FitResult:
    """Train for ``epochs`` epochs with per-epoch validation, plateau-driven
    learning-rate decay, and resumable checkpoints.

    Writes ``latest.ckpt`` (full training state) every epoch, ``best.ckpt``
    (generator only) whenever validation perceptual loss improves, and a
    per-step CSV metric log. Batch order is derived from (seed, epoch), so
    resuming from epoch k replays exactly what an uninterrupted run would
    have done.
    """
    cfg = cfg or FitConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    latest_path = out_dir / "latest.ckpt"
    best_path = out_dir / "best.ckpt"
    log_path = out_dir / "metrics.csv"

    gen = build_generator(cfg.generator, seed=seed)
    disc = build_discriminator(cfg.discriminator, seed=seed + 1)
    fx = FeatureExtractor(cfg.extractor)
    opt_g = AdamW(gen, cfg.optimizer_g)
    opt_d = AdamW(disc, cfg.optimizer_d)
    scheduler = PlateauScheduler(cfg.plateau, [opt_g, opt_d])

    start_epoch = 0
    global_step = 0
    best_metric = math.inf
    if resume is not None:
        tensors = ckpt.read_checkpoint(resume)
        own = {
            k: v
            for k, v in tensors.items()
            if not k.startswith(("meta.", "opt.", "state.", "disc."))
        }
        ckpt.load_state_into(gen, own)
        ckpt.load_state_into(disc, tensors, prefix="disc.")
        opt_g.load_state_tensors(tensors, "opt.g.")
        opt_d.load_state_tensors(tensors, "opt.d.")
        if "state.train" not in tensors:
            raise FormatError("checkpoint has no training state to resume from")
        sv = tensors["state.train"].reshape(-1)
        start_epoch = int(sv[0])
        global_step = int(sv[1])
        opt_g.lr = np.float32(sv[2])
        opt_d.lr = np.float32(sv[3])
        best_metric = float(sv[4])
        scheduler.best = best_metric
        scheduler.counter = int(sv[5])

    batcher = PairBatcher(train_dir, cfg.pipeline, cfg.batch_size)
    val_pairs = _load_validation_pairs(val_dir, cfg.pipeline)
    ssim_cfg = SsimConfig(dynamic_range=1.0)

    fresh_log = resume is None or not log_path.exists()
    log_file = open(log_path, "w" if fresh_log else "a", newline="")
    log = csv.writer(log_file)
    if fresh_log:
        log.writerow(LOG_COLUMNS)

    def state_vec(next_epoch):
        return [
            next_epoch,
            global_step,
            float(opt_g.lr),
            float(opt_d.lr),
            best_metric if math.isfinite(best_metric) else np.float32(np.inf),
            scheduler.counter,
        ]

    history: list[dict] = []
    wrote_best = best_path.exists()
    try:
        if epochs <= start_epoch:
            _save_training_checkpoint(latest_path, gen, disc, opt_g, opt_d, state_vec(start_epoch))
            return FitResult(latest_path, best_path if wrote_best else None, log_path, history)

        for epoch in range(start_epoch, epochs):
            rng = np.random.default_rng([seed, epoch])
            for lr_batch, hr_batch in batcher.epoch(rng):
                report = train_step(
                    gen, disc, fx, lr_batch, hr_batch, opt_g, opt_d,
                    adv_weight=cfg.adv_weight, adv_reduce=cfg.adv_reduce,
                )
                global_step += 1
                log.writerow(
                    [
                        epoch,
                        global_step,
                        f"{report.content:.8g}",
                        f"{report.adversarial:.8g}",
                        f"{report.perceptual:.8g}",
                        f"{report.discriminator:.8g}",
                        "",
                        "",
                        f"{float(opt_g.lr):.8g}",
                        f"{float(opt_d.lr):.8g}",
                    ]
                )
            val = _validate(gen, disc, fx, val_pairs, cfg.adv_weight, cfg.adv_reduce, ssim_cfg)
            scheduler.step(val["val_perceptual"])
            if val["val_perceptual"] < best_metric:
                best_metric = val["val_perceptual"]
                ckpt.save_model(gen, best_path)
                wrote_best = True
            log.writerow(
                [
                    epoch,
                    global_step,
                    "",
                    "",
                    "",
                    "",
                    f"{val['val_psnr']:.6g}",
                    f"{val['val_ssim']:.6g}",
                    f"{float(opt_g.lr):.8g}",
                    f"{float(opt_d.lr):.8g}",
                ]
            )
            history.append({"epoch": epoch, "step": global_step, **val,
                            "lr_g": float(opt_g.lr), "lr_d": float(opt_d.lr)})
            _save_training_checkpoint(latest_path, gen, disc, opt_g, opt_d, state_vec(epoch + 1))
    finally:
        log_file.close()
    return FitResult(latest_path, best_path if wrote_best else None, log_path, history)
