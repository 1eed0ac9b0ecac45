"""Teacher/student training loop and the pixel-only baseline.

Each iteration runs, in order: (1) EMA update of the teacher decoder from
the student decoder, (2) teacher forward, (3) teacher encoder step on its
pixel loss (gradients flow through the frozen-by-EMA teacher decoder),
(4) student forward, (5) student encoder+decoder step on pixel loss
+ alpha * directional loss + beta * band-pass contrastive loss, (6) push the
teacher embeddings into the memory bank. The baseline keeps only the student
branch with the pixel loss.
"""

import dataclasses
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .ffc import Decoder, Encoder, EncoderDecoderConfig, model_arrays
from .losses import EmaTracker, MemoryBank, contrastive_loss, directional_loss, l1_loss
from .metrics import psnr, rmse, ssim
from .optim import Adam, lr_at
from .spectral import bandpass_embed, bandpass_embed_grad, make_band_mask

LOG_HEADER = "iter,lr,pixelS,pixelT,rdd,bcd,cos_mean"


class NumericalError(RuntimeError):
    """A loss term became non-finite during training."""


@dataclass
class TrainConfig:
    alpha: float = 0.1
    beta: float = 0.0002
    tau: float = 1.0
    ema_momentum: float = 0.9
    bank_capacity: int = 300
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lr0: float = 1e-3
    lr_half_period: int = 40  # epochs
    batch_size: int = 4
    iterations: int = 200
    seed: int = 0
    n_sparse: int = 18
    teacher_multiplier: int = 2
    band_low: float = 0.2
    band_up: float = 0.5
    normalize_embeddings: bool = True
    include_positive: bool = True
    model: EncoderDecoderConfig = field(default_factory=EncoderDecoderConfig)

    def validate(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")
        for name in ("tau", "lr0", "adam_eps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("bank_capacity", "lr_half_period", "batch_size", "iterations",
                     "n_sparse", "teacher_multiplier"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.ema_momentum <= 1.0:
            raise ValueError("ema_momentum must lie in [0, 1]")


_MODEL_FIELDS = {f.name: f.type for f in dataclasses.fields(EncoderDecoderConfig)}
_TRAIN_FIELDS = {f.name: f.type for f in dataclasses.fields(TrainConfig) if f.name != "model"}


def _parse_value(raw, kind):
    if kind is bool or kind == "bool":
        lowered = raw.lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ValueError(f"cannot parse boolean from {raw!r}")
    if kind is int or kind == "int":
        return int(raw)
    return float(raw)


def parse_config_text(text):
    """Parse flat ``key = value`` lines; '#' starts a comment. Unknown keys
    are rejected."""
    train_kwargs = {}
    model_kwargs = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key in _TRAIN_FIELDS:
            train_kwargs[key] = _parse_value(raw, _TRAIN_FIELDS[key])
        elif key in _MODEL_FIELDS:
            model_kwargs[key] = _parse_value(raw, _MODEL_FIELDS[key])
        else:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
    cfg = TrainConfig(model=EncoderDecoderConfig(**model_kwargs), **train_kwargs)
    cfg.validate()
    return cfg


def load_config_file(path):
    with open(path) as fh:
        return parse_config_text(fh.read())


def config_as_flat_dict(cfg):
    out = {}
    for name in _TRAIN_FIELDS:
        out[name] = getattr(cfg, name)
    for name in _MODEL_FIELDS:
        out[name] = getattr(cfg.model, name)
    return out


def _batches(n_samples, batch_size, rng):
    """Deterministic epoch-shuffled batch index stream."""
    while True:
        order = rng.permutation(n_samples)
        for start in range(0, n_samples - batch_size + 1, batch_size):
            yield order[start : start + batch_size]


def _stack(samples, indices, attr):
    return np.stack(
        [np.asarray(getattr(samples[i], attr), dtype=np.float32) for i in indices]
    )[:, None, :, :]


def _require_finite_loss(value, term):
    if not np.isfinite(value):
        raise NumericalError(f"loss term {term!r} became non-finite ({value})")


@contextmanager
def _numeric_guard(term):
    """Translate mid-forward NaN/Inf rejections into the loss-term diagnostic."""
    try:
        yield
    except ValueError as exc:
        if "NaN or Inf" in str(exc):
            raise NumericalError(f"loss term {term!r} path produced non-finite values "
                                 f"({exc})") from exc
        raise


def format_log_row(row):
    return "{iter},{lr:.10g},{pixelS:.10g},{pixelT:.10g},{rdd:.10g},{bcd:.10g},{cos_mean:.10g}".format(**row)


class _Trainer:
    """Shared machinery for the distilled and baseline loops."""

    def __init__(self, samples, cfg, distill):
        if not samples:
            raise ValueError("dataset is empty")
        cfg.validate()
        if cfg.batch_size > len(samples):
            raise ValueError("batch size exceeds dataset size")
        side = np.asarray(samples[0].full).shape[0]
        self.samples = samples
        self.cfg = cfg
        self.distill = distill
        self.order_rng = np.random.default_rng([cfg.seed, 0])
        self.encoder_s = Encoder(cfg.model, seed=np.random.default_rng([cfg.seed, 1]).integers(2**31))
        self.decoder_s = Decoder(cfg.model, seed=np.random.default_rng([cfg.seed, 2]).integers(2**31))
        student_params = dict(self.encoder_s.named_params())
        student_params.update(self.decoder_s.named_params())
        self.adam_s = Adam(student_params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.iteration = 0
        self.rows = []
        if distill:
            self.encoder_t = Encoder(cfg.model, seed=np.random.default_rng([cfg.seed, 3]).integers(2**31), name="encoder")
            self.decoder_t = Decoder(cfg.model, seed=0, name="decoder", track_running_stats=False)
            # teacher decoder starts as an exact copy of the student decoder
            for target, source in zip(model_arrays(self.decoder_t).values(),
                                      model_arrays(self.decoder_s).values()):
                target[...] = source
            self.adam_t = Adam(dict(self.encoder_t.named_params()),
                               cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
            self.ema = EmaTracker(model_arrays(self.decoder_t), cfg.ema_momentum)
            self.bank = MemoryBank(cfg.bank_capacity)
            zh = side // 4
            self.mask = make_band_mask(zh, zh, cfg.band_low, cfg.band_up)

    def current_lr(self):
        epoch = self.iteration * self.cfg.batch_size // len(self.samples)
        return lr_at(epoch, self.cfg.lr0, self.cfg.lr_half_period)

    def _teacher_step(self, teacher_in, full, lr):
        with _numeric_guard("pixelT"):
            feats_t = self.encoder_t.forward(teacher_in)
            recon_t = self.decoder_t.forward(feats_t)
        loss_t, d_recon = l1_loss(recon_t, full)
        _require_finite_loss(loss_t, "pixelT")
        d_feats = self.decoder_t.backward(d_recon)
        self.encoder_t.backward(d_feats)
        self.adam_t.step(dict(self.encoder_t.named_grads()), lr)
        self.encoder_t.zero_grads()
        self.decoder_t.zero_grads()  # EMA owns these weights; drop the grads
        return feats_t, loss_t

    def _student_step(self, student_in, full, feats_t, lr):
        cfg = self.cfg
        with _numeric_guard("pixelS"):
            feats_s = self.encoder_s.forward(student_in)
            recon_s = self.decoder_s.forward(feats_s)
        loss_pix, d_recon = l1_loss(recon_s, full)
        _require_finite_loss(loss_pix, "pixelS")
        d_feats = self.decoder_s.backward(d_recon)

        loss_rdd = 0.0
        loss_bcd = 0.0
        cos_mean = 0.0
        if self.distill:
            loss_rdd, d_rdd = directional_loss(feats_s, feats_t)
            _require_finite_loss(loss_rdd, "rdd")
            cos_mean = 1.0 - loss_rdd
            if cfg.alpha != 0.0:
                d_feats = d_feats + cfg.alpha * d_rdd
            embeds_t = [
                bandpass_embed(feats_t[i], self.mask, cfg.normalize_embeddings)
                for i in range(feats_t.shape[0])
            ]
            batch = feats_s.shape[0]
            bcd_terms = []
            d_bcd = np.zeros_like(feats_s)
            for i in range(batch):
                z_s = bandpass_embed(feats_s[i], self.mask, cfg.normalize_embeddings)
                term, d_z = contrastive_loss(z_s, embeds_t[i], self.bank, cfg.tau,
                                             cfg.include_positive)
                bcd_terms.append(term)
                if cfg.beta != 0.0:
                    d_bcd[i] = bandpass_embed_grad(feats_s[i], self.mask, d_z / batch,
                                                   cfg.normalize_embeddings)
            loss_bcd = float(np.mean(bcd_terms))
            _require_finite_loss(loss_bcd, "bcd")
            if cfg.beta != 0.0:
                d_feats = d_feats + cfg.beta * d_bcd
        else:
            embeds_t = None

        self.encoder_s.backward(d_feats)
        grads = dict(self.encoder_s.named_grads())
        grads.update(self.decoder_s.named_grads())
        self.adam_s.step(grads, lr)
        self.encoder_s.zero_grads()
        self.decoder_s.zero_grads()
        return loss_pix, loss_rdd, loss_bcd, cos_mean, embeds_t

    def run(self, log_callback=None):
        cfg = self.cfg
        batch_stream = _batches(len(self.samples), cfg.batch_size, self.order_rng)
        for _ in range(cfg.iterations):
            indices = next(batch_stream)
            full = _stack(self.samples, indices, "full")
            student_in = _stack(self.samples, indices, "student_input")
            lr = self.current_lr()

            loss_t = 0.0
            feats_t = None
            if self.distill:
                self.ema.update(model_arrays(self.decoder_s))
                teacher_in = _stack(self.samples, indices, "teacher_input")
                feats_t, loss_t = self._teacher_step(teacher_in, full, lr)

            loss_pix, loss_rdd, loss_bcd, cos_mean, embeds_t = self._student_step(
                student_in, full, feats_t, lr
            )
            if self.distill:
                self.bank.push(embeds_t)

            row = {
                "iter": self.iteration,
                "lr": lr,
                "pixelS": loss_pix,
                "pixelT": loss_t,
                "rdd": loss_rdd,
                "bcd": loss_bcd,
                "cos_mean": cos_mean,
            }
            self.rows.append(row)
            if log_callback is not None:
                log_callback(row)
            self.iteration += 1
        return self.encoder_s, self.decoder_s, self.rows


def train_distilled(samples, cfg, log_callback=None):
    """Full teacher/student procedure; returns the trained student."""
    trainer = _Trainer(samples, cfg, distill=True)
    return trainer.run(log_callback)


def train_baseline(samples, cfg, log_callback=None):
    """Pixel-loss-only training of the same architecture."""
    trainer = _Trainer(samples, cfg, distill=False)
    return trainer.run(log_callback)


def reconstruct_image(encoder, decoder, image):
    """Run one image through the student network in eval mode."""
    encoder.set_training(False)
    decoder.set_training(False)
    try:
        batch = np.asarray(image, dtype=np.float32)[None, None, :, :]
        out = decoder.forward(encoder.forward(batch))
    finally:
        encoder.set_training(True)
        decoder.set_training(True)
    return out[0, 0].astype(np.float64)


def evaluate_samples(encoder, decoder, samples, data_range=1.0):
    """Per-sample metrics for the FBP input and the model output vs full."""
    rows = []
    for sample in samples:
        output = reconstruct_image(encoder, decoder, sample.student_input)
        rows.append({
            "id": sample.id,
            "psnr_fbp": psnr(sample.student_input, sample.full, data_range),
            "psnr_model": psnr(output, sample.full, data_range),
            "ssim_fbp": ssim(sample.student_input, sample.full, data_range),
            "ssim_model": ssim(output, sample.full, data_range),
            "rmse_fbp": rmse(sample.student_input, sample.full),
            "rmse_model": rmse(output, sample.full),
        })
    return rows
