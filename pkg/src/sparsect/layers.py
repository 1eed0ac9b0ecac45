"""Minimal differentiable layers with explicit forward/backward passes.

Every layer owns named parameter arrays with paired gradient arrays and
works on NCHW batches. ``forward`` caches what ``backward`` needs; calling
``backward`` without a preceding ``forward`` raises. Gradients accumulate
into ``grads`` until ``zero_grads``. Layers are single-writer: one
forward/backward pair in flight per instance.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}
        self.state = {}
        self.training = True
        self._cache = None

    def sublayers(self):
        return ()

    def walk(self):
        yield self
        for sub in self.sublayers():
            yield from sub.walk()

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called before forward")
        cache = self._cache
        self._cache = None
        return cache

    def _add_param(self, key, array):
        self.params[key] = array
        self.grads[key] = np.zeros_like(array)

    def zero_grads(self):
        for layer in self.walk():
            for g in layer.grads.values():
                g.fill(0.0)

    def set_training(self, flag):
        for layer in self.walk():
            layer.training = bool(flag)

    def named_params(self):
        for layer in self.walk():
            for key, value in layer.params.items():
                yield f"{layer.name}/{key}", value

    def named_grads(self):
        for layer in self.walk():
            for key, value in layer.grads.items():
                yield f"{layer.name}/{key}", value

    def named_state(self):
        for layer in self.walk():
            for key, value in layer.state.items():
                yield f"{layer.name}/{key}", value


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Layer):
    """Standard 2-D convolution (cross-correlation) via im2col."""

    def __init__(self, name, c_in, c_out, kernel, stride=1, padding=0, *, rng,
                 dtype=np.float32, bias=True):
        super().__init__(name)
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        fan_in = c_in * kernel * kernel
        self._add_param("w", kaiming_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, dtype))
        if bias:
            self._add_param("b", np.zeros(c_out, dtype=dtype))

    def forward(self, x):
        batch, c_in, height, width = x.shape
        if c_in != self.c_in:
            raise ValueError(f"{self.name}: expected {self.c_in} channels, got {c_in}")
        k, s, p = self.kernel, self.stride, self.padding
        if height + 2 * p < k or width + 2 * p < k:
            raise ValueError(f"{self.name}: input {height}x{width} too small for kernel {k}")
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        out_h, out_w = win.shape[2], win.shape[3]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(batch * out_h * out_w, c_in * k * k)
        w_mat = self.params["w"].reshape(self.c_out, -1)
        y = cols @ w_mat.T
        if "b" in self.params:
            y += self.params["b"]
        self._cache = (cols, x.shape, out_h, out_w)
        return y.reshape(batch, out_h, out_w, self.c_out).transpose(0, 3, 1, 2)

    def backward(self, grad_out):
        cols, x_shape, out_h, out_w = self._take_cache()
        batch, c_in, height, width = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        g_mat = grad_out.transpose(0, 2, 3, 1).reshape(batch * out_h * out_w, self.c_out)
        self.grads["w"] += (g_mat.T @ cols).reshape(self.params["w"].shape)
        if "b" in self.params:
            self.grads["b"] += g_mat.sum(axis=0)
        if self.c_out * s * s < c_in:
            return self._backward_data_correlate(grad_out, x_shape, out_h, out_w)
        return self._backward_data_scatter(grad_out, x_shape, out_h, out_w)

    def _backward_data_scatter(self, grad_out, x_shape, out_h, out_w):
        batch, c_in, height, width = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        g_mat = grad_out.transpose(0, 2, 3, 1).reshape(batch * out_h * out_w, self.c_out)
        d_cols = g_mat @ self.params["w"].reshape(self.c_out, -1)
        d_win = d_cols.reshape(batch, out_h, out_w, c_in, k, k)
        dxp = np.zeros((batch, height + 2 * p, width + 2 * p, c_in), dtype=grad_out.dtype)
        for ki in range(k):
            for kj in range(k):
                dxp[:, ki : ki + s * out_h : s, kj : kj + s * out_w : s] += d_win[..., ki, kj]
        dxp = dxp.transpose(0, 3, 1, 2)
        if p:
            dxp = dxp[:, :, p : p + height, p : p + width]
        return np.ascontiguousarray(dxp)

    def _backward_data_correlate(self, grad_out, x_shape, out_h, out_w):
        # stride-1 correlation of the flipped kernel with the zero-dilated
        # output gradient: one GEMM, cheaper than the scatter when the
        # output channel count is small
        batch, c_in, height, width = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        pad_h = height + 2 * p
        pad_w = width + 2 * p
        rem_h = (pad_h - k) % s  # trailing rows the forward never read
        rem_w = (pad_w - k) % s
        dil_h = (out_h - 1) * s + 1 + 2 * (k - 1)
        dil_w = (out_w - 1) * s + 1 + 2 * (k - 1)
        dilated = np.zeros((batch, self.c_out, dil_h, dil_w), dtype=grad_out.dtype)
        dilated[:, :, k - 1 : k - 1 + (out_h - 1) * s + 1 : s,
                k - 1 : k - 1 + (out_w - 1) * s + 1 : s] = grad_out
        win = sliding_window_view(dilated, (k, k), axis=(2, 3))
        g_cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(-1, self.c_out * k * k)
        flipped = self.params["w"][:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
        dx_mat = g_cols @ flipped.reshape(c_in, -1).T
        dxp = np.zeros((batch, pad_h, pad_w, c_in), dtype=grad_out.dtype)
        dxp[:, : pad_h - rem_h, : pad_w - rem_w] = dx_mat.reshape(
            batch, pad_h - rem_h, pad_w - rem_w, c_in
        )
        dxp = dxp.transpose(0, 3, 1, 2)
        if p:
            dxp = dxp[:, :, p : p + height, p : p + width]
        return np.ascontiguousarray(dxp)


class ConvTranspose2d(Layer):
    """Transposed convolution; output side = (in-1)*stride - 2*pad + kernel + out_pad."""

    def __init__(self, name, c_in, c_out, kernel, stride=1, padding=0, output_padding=0,
                 *, rng, dtype=np.float32, bias=True):
        super().__init__(name)
        if output_padding >= stride:
            raise ValueError("output_padding must be smaller than stride")
        self.c_in = c_in
        self.c_out = c_out
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding
        fan_in = c_in * kernel * kernel
        self._add_param("w", kaiming_uniform(rng, (c_in, c_out, kernel, kernel), fan_in, dtype))
        if bias:
            self._add_param("b", np.zeros(c_out, dtype=dtype))

    def _out_side(self, side):
        return (side - 1) * self.stride - 2 * self.padding + self.kernel + self.output_padding

    def forward(self, x):
        batch, c_in, height, width = x.shape
        if c_in != self.c_in:
            raise ValueError(f"{self.name}: expected {self.c_in} channels, got {c_in}")
        k, s, p = self.kernel, self.stride, self.padding
        out_h, out_w = self._out_side(height), self._out_side(width)
        if out_h < 1 or out_w < 1:
            raise ValueError(f"{self.name}: output collapses for input {height}x{width}")
        canvas_h = max((height - 1) * s + k, p + out_h)
        canvas_w = max((width - 1) * s + k, p + out_w)
        x_mat = x.transpose(0, 2, 3, 1).reshape(batch * height * width, c_in)
        contrib = x_mat @ self.params["w"].reshape(c_in, -1)
        contrib = contrib.reshape(batch, height, width, self.c_out, k, k)
        contrib = contrib.transpose(0, 3, 1, 2, 4, 5)
        canvas = np.zeros((batch, self.c_out, canvas_h, canvas_w), dtype=x.dtype)
        for ki in range(k):
            for kj in range(k):
                canvas[:, :, ki : ki + s * height : s, kj : kj + s * width : s] += contrib[..., ki, kj]
        y = canvas[:, :, p : p + out_h, p : p + out_w]
        if "b" in self.params:
            y = y + self.params["b"][None, :, None, None]
        self._cache = (x_mat, x.shape, canvas_h, canvas_w)
        return y

    def backward(self, grad_out):
        x_mat, x_shape, canvas_h, canvas_w = self._take_cache()
        batch, c_in, height, width = x_shape
        k, s, p = self.kernel, self.stride, self.padding
        d_canvas = np.zeros((batch, self.c_out, canvas_h, canvas_w), dtype=grad_out.dtype)
        d_canvas[:, :, p : p + grad_out.shape[2], p : p + grad_out.shape[3]] = grad_out
        win = sliding_window_view(d_canvas, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        win = win[:, :, :height, :width]
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(batch * height * width, self.c_out * k * k)
        self.grads["w"] += (x_mat.T @ cols).reshape(self.params["w"].shape)
        if "b" in self.params:
            self.grads["b"] += grad_out.sum(axis=(0, 2, 3))
        dx = cols @ self.params["w"].reshape(c_in, -1).T
        return dx.reshape(batch, height, width, c_in).transpose(0, 3, 1, 2)


class BatchNorm2d(Layer):
    """Per-channel batch normalization with running statistics.

    Training mode normalizes by batch statistics and (optionally) updates
    the running mean/var with momentum 0.1; eval mode normalizes by the
    running statistics. ``track_running_stats=False`` is used by the EMA
    teacher decoder, whose statistics are maintained externally.
    """

    def __init__(self, name, channels, momentum=0.1, eps=1e-5, *, dtype=np.float32,
                 track_running_stats=True):
        super().__init__(name)
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.track_running_stats = track_running_stats
        self._add_param("gamma", np.ones(channels, dtype=dtype))
        self._add_param("beta", np.zeros(channels, dtype=dtype))
        self.state["running_mean"] = np.zeros(channels, dtype=dtype)
        self.state["running_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x):
        if x.shape[1] != self.channels:
            raise ValueError(f"{self.name}: expected {self.channels} channels, got {x.shape[1]}")
        if self.training:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if self.track_running_stats:
                n = x.shape[0] * x.shape[2] * x.shape[3]
                unbiased = var * (n / max(n - 1, 1))
                m = self.momentum
                self.state["running_mean"] *= 1.0 - m
                self.state["running_mean"] += m * mean.astype(self.state["running_mean"].dtype)
                self.state["running_var"] *= 1.0 - m
                self.state["running_var"] += m * unbiased.astype(self.state["running_var"].dtype)
        else:
            mean = self.state["running_mean"]
            var = self.state["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        x_hat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (x_hat, inv_std)
        return self.params["gamma"][None, :, None, None] * x_hat + self.params["beta"][None, :, None, None]

    def backward(self, grad_out):
        x_hat, inv_std = self._take_cache()
        self.grads["gamma"] += (grad_out * x_hat).sum(axis=(0, 2, 3))
        self.grads["beta"] += grad_out.sum(axis=(0, 2, 3))
        g_scaled = grad_out * self.params["gamma"][None, :, None, None]
        if not self.training:
            return g_scaled * inv_std[None, :, None, None]
        n = grad_out.shape[0] * grad_out.shape[2] * grad_out.shape[3]
        mean_g = g_scaled.mean(axis=(0, 2, 3))[None, :, None, None]
        mean_gx = (g_scaled * x_hat).mean(axis=(0, 2, 3))[None, :, None, None]
        return inv_std[None, :, None, None] * (g_scaled - mean_g - x_hat * mean_gx)


class ReLU(Layer):
    def forward(self, x):
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad_out):
        return grad_out * self._take_cache()


class ReflectionPad2d(Layer):
    """Symmetric border reflection (edge not repeated), like np.pad 'reflect'."""

    def __init__(self, name, pad):
        super().__init__(name)
        self.pad = pad

    @staticmethod
    def _source_indices(side, pad):
        out = np.arange(side + 2 * pad) - pad
        out = np.abs(out)
        over = out > side - 1
        out[over] = 2 * (side - 1) - out[over]
        return out

    def forward(self, x):
        p = self.pad
        if x.shape[2] <= p or x.shape[3] <= p:
            raise ValueError(f"{self.name}: pad {p} too large for input {x.shape[2]}x{x.shape[3]}")
        self._cache = (x.shape[2], x.shape[3])
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")

    def backward(self, grad_out):
        height, width = self._take_cache()
        p = self.pad
        idx_h = self._source_indices(height, p)
        idx_w = self._source_indices(width, p)
        scatter_h = np.zeros((height + 2 * p, height), dtype=grad_out.dtype)
        scatter_h[np.arange(idx_h.size), idx_h] = 1.0
        scatter_w = np.zeros((width + 2 * p, width), dtype=grad_out.dtype)
        scatter_w[np.arange(idx_w.size), idx_w] = 1.0
        # (B,C,Hp,Wp) x (Hp,H) -> (B,C,Wp,H) x (Wp,W) -> (B,C,H,W)
        tmp = np.tensordot(grad_out, scatter_h, axes=(2, 0))
        return np.tensordot(tmp, scatter_w, axes=(2, 0))
