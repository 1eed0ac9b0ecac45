"""Fourier-convolution encoder/decoder.

The encoder maps an N x N image to a feature map at N/4 x N/4: a 7x7 stem
after reflection padding, one stride-2 3x3 downsample, a one-time stride-2
split into local/global branches, then a stack of residual blocks whose
global branch convolves in the frequency domain. The decoder re-splits the
feature map (stride 1), applies its own residual blocks, and restores N x N
with two stride-2 transposed convolutions and a 7x7 output head.

Channel plan before the width multiplier: 64 stem, 128 after downsample,
256 in the trunk with a 64/192 local/global split (global ratio 0.75).
"""

from dataclasses import dataclass

import numpy as np

from . import io
from .fourier import irfft2, irfft2_adjoint, rfft2, rfft2_adjoint
from .layers import BatchNorm2d, Conv2d, ConvTranspose2d, Layer, ReflectionPad2d, ReLU


@dataclass(frozen=True)
class EncoderDecoderConfig:
    base_channels: int = 64
    blocks_encoder: int = 7
    blocks_decoder: int = 2
    global_ratio: float = 0.75
    width_multiplier: float = 0.25
    input_channels: int = 1

    def __post_init__(self):
        if self.blocks_encoder + self.blocks_decoder < 1:
            raise ValueError("need at least one residual block")
        if not 0.0 < self.global_ratio < 1.0:
            raise ValueError("global_ratio must be in (0, 1)")
        for c in (self.stem_channels, self.mid_channels, self.trunk_channels):
            if c < 4 or c % 4 != 0:
                raise ValueError(
                    f"width multiplier {self.width_multiplier} yields channel count {c}; "
                    "all widths must be >= 4 and divisible by 4"
                )
        if self.local_channels < 1 or self.global_channels < 2 or self.global_channels % 2:
            raise ValueError("global branch needs an even channel count >= 2")

    @property
    def stem_channels(self):
        return int(round(self.base_channels * self.width_multiplier))

    @property
    def mid_channels(self):
        return int(round(2 * self.base_channels * self.width_multiplier))

    @property
    def trunk_channels(self):
        return int(round(4 * self.base_channels * self.width_multiplier))

    @property
    def global_channels(self):
        return int(round(self.trunk_channels * self.global_ratio))

    @property
    def local_channels(self):
        return self.trunk_channels - self.global_channels


class FourierUnit(Layer):
    """Global-branch spectral transform.

    1x1 conv to half the channels (BN+ReLU), real FFT, a 1x1 conv over the
    stacked (re, im) channels in the frequency domain (BN+ReLU), inverse
    FFT, residual add with the reduced activation, then a 1x1 conv back to
    the full channel count.
    """

    def __init__(self, name, channels, *, rng, dtype=np.float32, track_running_stats=True,
                 use_bn=True, use_act=True):
        super().__init__(name)
        if channels % 2 != 0:
            raise ValueError(f"{name}: spectral transform needs an even channel count")
        self.channels = channels
        half = channels // 2
        self.half = half
        self.use_bn = use_bn
        self.use_act = use_act
        kw = dict(rng=rng, dtype=dtype)
        bn_kw = dict(dtype=dtype, track_running_stats=track_running_stats)
        self.reduce = Conv2d(f"{name}/reduce", channels, half, 1, bias=False, **kw)
        self.bn_reduce = BatchNorm2d(f"{name}/bn_reduce", half, **bn_kw)
        self.act_reduce = ReLU(f"{name}/act_reduce")
        self.conv_freq = Conv2d(f"{name}/conv_freq", 2 * half, 2 * half, 1, bias=False, **kw)
        self.bn_freq = BatchNorm2d(f"{name}/bn_freq", 2 * half, **bn_kw)
        self.act_freq = ReLU(f"{name}/act_freq")
        self.project = Conv2d(f"{name}/project", half, channels, 1, bias=False, **kw)

    def sublayers(self):
        subs = [self.reduce, self.conv_freq, self.project]
        if self.use_bn:
            subs += [self.bn_reduce, self.bn_freq]
        if self.use_act:
            subs += [self.act_reduce, self.act_freq]
        return tuple(subs)

    def _post(self, value, bn, act):
        if self.use_bn:
            value = bn.forward(value)
        if self.use_act:
            value = act.forward(value)
        return value

    def _post_backward(self, grad, bn, act):
        if self.use_act:
            grad = act.backward(grad)
        if self.use_bn:
            grad = bn.backward(grad)
        return grad

    def forward(self, x):
        height, width = x.shape[2], x.shape[3]
        reduced = self._post(self.reduce.forward(x), self.bn_reduce, self.act_reduce)
        spectrum = rfft2(reduced)
        packed = np.concatenate([spectrum.real, spectrum.imag], axis=1).astype(x.dtype)
        mixed = self._post(self.conv_freq.forward(packed), self.bn_freq, self.act_freq)
        complex_out = mixed[:, : self.half] + 1j * mixed[:, self.half :]
        spatial = irfft2(complex_out, (height, width)).astype(x.dtype)
        self._cache = (height, width)
        return self.project.forward(reduced + spatial)

    def backward(self, grad_out):
        height, width = self._take_cache()
        d_sum = self.project.backward(grad_out)
        d_complex = irfft2_adjoint(d_sum)
        d_mixed = np.concatenate([d_complex.real, d_complex.imag], axis=1).astype(grad_out.dtype)
        d_packed = self.conv_freq.backward(
            self._post_backward(d_mixed, self.bn_freq, self.act_freq)
        )
        d_spectrum = d_packed[:, : self.half] + 1j * d_packed[:, self.half :]
        d_reduced = d_sum + rfft2_adjoint(d_spectrum, (height, width)).astype(grad_out.dtype)
        return self.reduce.backward(
            self._post_backward(d_reduced, self.bn_reduce, self.act_reduce)
        )


class FfcLayer(Layer):
    """One cross-talk stage: four paths between local and global branches,
    each branch summed then batch-normalized and rectified."""

    def __init__(self, name, c_local, c_global, *, rng, dtype=np.float32,
                 track_running_stats=True, use_bn=True, use_act=True):
        super().__init__(name)
        self.use_bn = use_bn
        self.use_act = use_act
        kw = dict(rng=rng, dtype=dtype)
        self.conv_l2l = Conv2d(f"{name}/conv_l2l", c_local, c_local, 3, padding=1, bias=False, **kw)
        self.conv_l2g = Conv2d(f"{name}/conv_l2g", c_local, c_global, 3, padding=1, bias=False, **kw)
        self.conv_g2l = Conv2d(f"{name}/conv_g2l", c_global, c_local, 3, padding=1, bias=False, **kw)
        self.conv_g2g = FourierUnit(f"{name}/conv_g2g", c_global, rng=rng, dtype=dtype,
                                    track_running_stats=track_running_stats,
                                    use_bn=use_bn, use_act=use_act)
        self.bn_local = BatchNorm2d(f"{name}/bn_local", c_local, dtype=dtype,
                                    track_running_stats=track_running_stats)
        self.bn_global = BatchNorm2d(f"{name}/bn_global", c_global, dtype=dtype,
                                     track_running_stats=track_running_stats)
        self.act_local = ReLU(f"{name}/act_local")
        self.act_global = ReLU(f"{name}/act_global")

    def sublayers(self):
        subs = [self.conv_l2l, self.conv_l2g, self.conv_g2l, self.conv_g2g]
        if self.use_bn:
            subs += [self.bn_local, self.bn_global]
        if self.use_act:
            subs += [self.act_local, self.act_global]
        return tuple(subs)

    def forward(self, x_local, x_global):
        sum_local = self.conv_l2l.forward(x_local) + self.conv_g2l.forward(x_global)
        sum_global = self.conv_l2g.forward(x_local) + self.conv_g2g.forward(x_global)
        if self.use_bn:
            sum_local = self.bn_local.forward(sum_local)
            sum_global = self.bn_global.forward(sum_global)
        if self.use_act:
            sum_local = self.act_local.forward(sum_local)
            sum_global = self.act_global.forward(sum_global)
        return sum_local, sum_global

    def backward(self, d_local, d_global):
        if self.use_act:
            d_local = self.act_local.backward(d_local)
            d_global = self.act_global.backward(d_global)
        if self.use_bn:
            d_local = self.bn_local.backward(d_local)
            d_global = self.bn_global.backward(d_global)
        dx_local = self.conv_l2l.backward(d_local) + self.conv_l2g.backward(d_global)
        dx_global = self.conv_g2l.backward(d_local) + self.conv_g2g.backward(d_global)
        return dx_local, dx_global


class FfcBlock(Layer):
    """Residual block: two FFC layers, output = input + second layer output."""

    def __init__(self, name, c_local, c_global, *, rng, dtype=np.float32,
                 track_running_stats=True, use_bn=True, use_act=True):
        super().__init__(name)
        kw = dict(rng=rng, dtype=dtype, track_running_stats=track_running_stats,
                  use_bn=use_bn, use_act=use_act)
        self.layer1 = FfcLayer(f"{name}/layer1", c_local, c_global, **kw)
        self.layer2 = FfcLayer(f"{name}/layer2", c_local, c_global, **kw)

    def sublayers(self):
        return (self.layer1, self.layer2)

    def forward(self, x_local, x_global):
        mid_local, mid_global = self.layer1.forward(x_local, x_global)
        out_local, out_global = self.layer2.forward(mid_local, mid_global)
        return x_local + out_local, x_global + out_global

    def backward(self, d_local, d_global):
        d_mid_local, d_mid_global = self.layer2.backward(d_local, d_global)
        dx_local, dx_global = self.layer1.backward(d_mid_local, d_mid_global)
        return dx_local + d_local, dx_global + d_global


class _BranchStem(Layer):
    """Conv + BN + ReLU entering one branch of the local/global split."""

    def __init__(self, name, c_in, c_out, stride, *, rng, dtype, track_running_stats=True):
        super().__init__(name)
        self.conv = Conv2d(f"{name}/conv", c_in, c_out, 3, stride=stride, padding=1,
                           rng=rng, dtype=dtype, bias=False)
        self.bn = BatchNorm2d(f"{name}/bn", c_out, dtype=dtype,
                              track_running_stats=track_running_stats)
        self.act = ReLU(f"{name}/act")

    def sublayers(self):
        return (self.conv, self.bn, self.act)

    def forward(self, x):
        return self.act.forward(self.bn.forward(self.conv.forward(x)))

    def backward(self, grad_out):
        return self.conv.backward(self.bn.backward(self.act.backward(grad_out)))


class Encoder(Layer):
    """Image -> global representation at quarter resolution."""

    def __init__(self, cfg, seed=0, dtype=np.float32, name="encoder"):
        super().__init__(name)
        self.cfg = cfg
        rng = np.random.default_rng([seed, 0x0E])
        kw = dict(rng=rng, dtype=dtype)
        c1, c2 = cfg.stem_channels, cfg.mid_channels
        cl, cg = cfg.local_channels, cfg.global_channels
        self.pad_in = ReflectionPad2d(f"{name}/pad_in", 3)
        self.conv_stem = Conv2d(f"{name}/stem/conv", cfg.input_channels, c1, 7, bias=False, **kw)
        self.bn_stem = BatchNorm2d(f"{name}/stem/bn", c1, dtype=dtype)
        self.act_stem = ReLU(f"{name}/stem/act")
        self.conv_down = Conv2d(f"{name}/down/conv", c1, c2, 3, stride=2, padding=1, bias=False, **kw)
        self.bn_down = BatchNorm2d(f"{name}/down/bn", c2, dtype=dtype)
        self.act_down = ReLU(f"{name}/down/act")
        self.split_local = _BranchStem(f"{name}/split_local", c2, cl, 2, rng=rng, dtype=dtype)
        self.split_global = _BranchStem(f"{name}/split_global", c2, cg, 2, rng=rng, dtype=dtype)
        self.blocks = [
            FfcBlock(f"{name}/block{idx}", cl, cg, rng=rng, dtype=dtype)
            for idx in range(cfg.blocks_encoder)
        ]

    def sublayers(self):
        return (self.pad_in, self.conv_stem, self.bn_stem, self.act_stem,
                self.conv_down, self.bn_down, self.act_down,
                self.split_local, self.split_global, *self.blocks)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.cfg.input_channels:
            raise ValueError(f"expected (B, {self.cfg.input_channels}, N, N), got {x.shape}")
        if x.shape[2] != x.shape[3] or x.shape[2] % 4 != 0:
            raise ValueError(f"image side must be square and divisible by 4, got {x.shape[2:]}")
        if not np.all(np.isfinite(x)):
            raise ValueError("encoder input contains NaN or Inf")
        h = self.act_stem.forward(self.bn_stem.forward(self.conv_stem.forward(self.pad_in.forward(x))))
        h = self.act_down.forward(self.bn_down.forward(self.conv_down.forward(h)))
        local = self.split_local.forward(h)
        glob = self.split_global.forward(h)
        for block in self.blocks:
            local, glob = block.forward(local, glob)
        return np.concatenate([local, glob], axis=1)

    def backward(self, d_features):
        cl = self.cfg.local_channels
        d_local, d_global = d_features[:, :cl], d_features[:, cl:]
        for block in reversed(self.blocks):
            d_local, d_global = block.backward(d_local, d_global)
        dh = self.split_local.backward(d_local) + self.split_global.backward(d_global)
        dh = self.conv_down.backward(self.bn_down.backward(self.act_down.backward(dh)))
        dh = self.conv_stem.backward(self.bn_stem.backward(self.act_stem.backward(dh)))
        return self.pad_in.backward(dh)


class Decoder(Layer):
    """Global representation -> image, via FFC blocks and two upsamples."""

    def __init__(self, cfg, seed=0, dtype=np.float32, name="decoder",
                 track_running_stats=True):
        super().__init__(name)
        self.cfg = cfg
        rng = np.random.default_rng([seed, 0x0D])
        kw = dict(rng=rng, dtype=dtype)
        c1, c2, c3 = cfg.stem_channels, cfg.mid_channels, cfg.trunk_channels
        cl, cg = cfg.local_channels, cfg.global_channels
        track = track_running_stats
        self.split_local = _BranchStem(f"{name}/split_local", c3, cl, 1, rng=rng, dtype=dtype,
                                       track_running_stats=track)
        self.split_global = _BranchStem(f"{name}/split_global", c3, cg, 1, rng=rng, dtype=dtype,
                                        track_running_stats=track)
        self.blocks = [
            FfcBlock(f"{name}/block{idx}", cl, cg, rng=rng, dtype=dtype,
                     track_running_stats=track)
            for idx in range(cfg.blocks_decoder)
        ]
        self.up1 = ConvTranspose2d(f"{name}/up1/conv", c3, c2, 3, stride=2, padding=1,
                                   output_padding=1, bias=False, **kw)
        self.bn_up1 = BatchNorm2d(f"{name}/up1/bn", c2, dtype=dtype, track_running_stats=track)
        self.act_up1 = ReLU(f"{name}/up1/act")
        self.up2 = ConvTranspose2d(f"{name}/up2/conv", c2, c1, 3, stride=2, padding=1,
                                   output_padding=1, bias=False, **kw)
        self.bn_up2 = BatchNorm2d(f"{name}/up2/bn", c1, dtype=dtype, track_running_stats=track)
        self.act_up2 = ReLU(f"{name}/up2/act")
        self.pad_out = ReflectionPad2d(f"{name}/pad_out", 3)
        self.conv_out = Conv2d(f"{name}/out/conv", c1, 1, 7, **kw)

    def sublayers(self):
        return (self.split_local, self.split_global, *self.blocks,
                self.up1, self.bn_up1, self.act_up1,
                self.up2, self.bn_up2, self.act_up2,
                self.pad_out, self.conv_out)

    def forward(self, features):
        if features.ndim != 4 or features.shape[1] != self.cfg.trunk_channels:
            raise ValueError(
                f"expected (B, {self.cfg.trunk_channels}, h, w), got {features.shape}"
            )
        local = self.split_local.forward(features)
        glob = self.split_global.forward(features)
        for block in self.blocks:
            local, glob = block.forward(local, glob)
        h = np.concatenate([local, glob], axis=1)
        h = self.act_up1.forward(self.bn_up1.forward(self.up1.forward(h)))
        h = self.act_up2.forward(self.bn_up2.forward(self.up2.forward(h)))
        return self.conv_out.forward(self.pad_out.forward(h))

    def backward(self, d_image):
        dh = self.pad_out.backward(self.conv_out.backward(d_image))
        dh = self.up2.backward(self.bn_up2.backward(self.act_up2.backward(dh)))
        dh = self.up1.backward(self.bn_up1.backward(self.act_up1.backward(dh)))
        cl = self.cfg.local_channels
        d_local, d_global = dh[:, :cl], dh[:, cl:]
        for block in reversed(self.blocks):
            d_local, d_global = block.backward(d_local, d_global)
        d_features = self.split_local.backward(d_local)
        d_features += self.split_global.backward(d_global)
        return d_features


def build_encoder(cfg, seed=0, dtype=np.float32):
    return Encoder(cfg, seed=seed, dtype=dtype)


def build_decoder(cfg, seed=0, dtype=np.float32, track_running_stats=True):
    return Decoder(cfg, seed=seed, dtype=dtype, track_running_stats=track_running_stats)


_META_FIELDS = ("base_channels", "blocks_encoder", "blocks_decoder",
                "global_ratio", "width_multiplier", "input_channels")
_META_INTS = {"base_channels", "blocks_encoder", "blocks_decoder", "input_channels"}


def model_arrays(model):
    """Ordered {qualified name: array} of parameters plus running stats."""
    arrays = dict(model.named_params())
    arrays.update(model.named_state())
    return arrays


def save_checkpoint(path, cfg, encoder, decoder):
    arrays = {f"meta/{key}": np.asarray([getattr(cfg, key)], dtype=np.float32)
              for key in _META_FIELDS}
    arrays.update(model_arrays(encoder))
    arrays.update(model_arrays(decoder))
    io.save_named_arrays(path, arrays)


def load_arrays_into(model, arrays):
    """Assign stored arrays to a model; names and shapes must match exactly."""
    stored = {k: v for k, v in arrays.items() if k.startswith(model.name + "/")}
    target = model_arrays(model)
    if set(stored) != set(target):
        missing = sorted(set(target) - set(stored))[:3]
        extra = sorted(set(stored) - set(target))[:3]
        raise ValueError(f"checkpoint name mismatch (missing={missing}, extra={extra})")
    for key, value in stored.items():
        if target[key].shape != value.shape:
            raise ValueError(
                f"checkpoint shape mismatch for {key}: {value.shape} vs {target[key].shape}"
            )
        target[key][...] = value.astype(target[key].dtype)


def load_checkpoint(path, dtype=np.float32):
    """Rebuild encoder and decoder from a checkpoint file."""
    arrays = io.load_named_arrays(path)
    kwargs = {}
    for key in _META_FIELDS:
        stored = arrays.get(f"meta/{key}")
        if stored is None:
            raise ValueError(f"checkpoint missing meta/{key}")
        value = float(stored[0])
        kwargs[key] = int(round(value)) if key in _META_INTS else value
    cfg = EncoderDecoderConfig(**kwargs)
    encoder = Encoder(cfg, dtype=dtype)
    decoder = Decoder(cfg, dtype=dtype)
    load_arrays_into(encoder, arrays)
    load_arrays_into(decoder, arrays)
    return cfg, encoder, decoder
