"""Network layers with forward and backward passes.

All layers operate on batched activations of shape (B, T, C) where T is
the 99-frame time axis; the singleton frequency axis produced by the
first convolution is kept squeezed throughout.  Training precision is
float64.

Each layer owns its parameters and gradients as name->array dicts.  A
forward call in training mode caches whatever the matching backward call
needs; one training step must own its layer instances exclusively.
Forward passes on frozen parameters are pure and safe to run
concurrently.
"""

import numpy as np

from stconv_kws.numerics import ShapeMismatchError, sigmoid, softmax


class BackwardStateError(RuntimeError):
    """backward() called without a cached forward pass."""


class Layer:
    """Parameter container with a forward/backward protocol."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def zero_grads(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def _take_cache(self):
        if self._cache is None:
            raise BackwardStateError(f"{type(self).__name__}.backward without forward")
        cache, self._cache = self._cache, None
        return cache


class FreqCollapseConv(Layer):
    """First layer: 1x40 kernels collapse the 40-bin frequency axis.

    Equivalent to a per-frame linear map R^40 -> R^40 applied at every
    timestep; no padding, stride 1, no bias.
    """

    def __init__(self, in_features=40, out_channels=40):
        super().__init__()
        self.in_features = in_features
        self.params["w"] = np.zeros((in_features, out_channels))
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.in_features:
            raise ShapeMismatchError(
                f"expected (B, T, {self.in_features}), got {x.shape}"
            )
        if train:
            self._cache = x
        return x @ self.params["w"]

    def backward(self, dout):
        x = self._take_cache()
        self.grads["w"] += np.einsum("btf,bto->fo", x, dout)
        return dout @ self.params["w"].T


class SeparableTemporalConv(Layer):
    """Depthwise (3-tap dilated, per channel) then pointwise (1x1) conv.

    Zero padding of `dilation` frames on each side keeps the output the
    same length as the input.  No bias.
    """

    def __init__(self, channels, dilation):
        super().__init__()
        if dilation < 1:
            raise ValueError(f"dilation must be positive, got {dilation}")
        self.channels = channels
        self.dilation = dilation
        self.params["depthwise"] = np.zeros((3, channels))
        self.params["pointwise"] = np.zeros((channels, channels))
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.channels:
            raise ShapeMismatchError(f"expected (B, T, {self.channels}), got {x.shape}")
        d = self.dilation
        t = x.shape[1]
        k = self.params["depthwise"]
        xpad = np.pad(x, ((0, 0), (d, d), (0, 0)))
        dw = sum(xpad[:, i * d : i * d + t, :] * k[i] for i in range(3))
        out = dw @ self.params["pointwise"]
        if train:
            self._cache = (xpad, dw)
        return out

    def backward(self, dout):
        xpad, dw = self._take_cache()
        d = self.dilation
        t = dout.shape[1]
        k = self.params["depthwise"]
        self.grads["pointwise"] += np.einsum("btc,bto->co", dw, dout)
        ddw = dout @ self.params["pointwise"].T
        dxpad = np.zeros_like(xpad)
        for i in range(3):
            self.grads["depthwise"][i] += np.sum(
                xpad[:, i * d : i * d + t, :] * ddw, axis=(0, 1)
            )
            dxpad[:, i * d : i * d + t, :] += ddw * k[i]
        return dxpad[:, d : d + t, :]


class BatchNorm(Layer):
    """Per-channel batch normalization over the batch and time axes."""

    def __init__(self, channels, momentum=0.9, eps=1e-5):
        super().__init__()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.zero_grads()

    def forward(self, x, train=False):
        if x.shape[-1] != self.channels:
            raise ShapeMismatchError(f"expected trailing dim {self.channels}, got {x.shape}")
        if train:
            axes = tuple(range(x.ndim - 1))
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            self._cache = (xhat, inv_std, x.ndim)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv_std
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, dout):
        xhat, inv_std, ndim = self._take_cache()
        axes = tuple(range(ndim - 1))
        n = int(np.prod([dout.shape[a] for a in axes]))
        self.grads["gamma"] += np.sum(dout * xhat, axis=axes)
        self.grads["beta"] += np.sum(dout, axis=axes)
        dxhat = dout * self.params["gamma"]
        return (
            inv_std
            / n
            * (
                n * dxhat
                - np.sum(dxhat, axis=axes)
                - xhat * np.sum(dxhat * xhat, axis=axes)
            )
        )


class ReLU(Layer):
    def forward(self, x, train=False):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, dout):
        mask = self._take_cache()
        return dout * mask


class Block(Layer):
    """Residual block: two separable temporal convs, each conv->ReLU->BN.

    The residual is added after the second batch norm, so the block is
    the identity map when both convolutions are zeroed out.
    """

    def __init__(self, channels, dilations):
        super().__init__()
        d1, d2 = dilations
        self.conv1 = SeparableTemporalConv(channels, d1)
        self.relu1 = ReLU()
        self.bn1 = BatchNorm(channels)
        self.conv2 = SeparableTemporalConv(channels, d2)
        self.relu2 = ReLU()
        self.bn2 = BatchNorm(channels)
        self.children = {
            "conv1": self.conv1,
            "bn1": self.bn1,
            "conv2": self.conv2,
            "bn2": self.bn2,
        }

    def zero_grads(self):
        for child in self.children.values():
            child.zero_grads()

    def forward(self, x, train=False):
        h = self.bn1.forward(self.relu1.forward(self.conv1.forward(x, train), train), train)
        h = self.bn2.forward(self.relu2.forward(self.conv2.forward(h, train), train), train)
        return h + x

    def backward(self, dout):
        dh = self.conv2.backward(self.relu2.backward(self.bn2.backward(dout)))
        dx = self.conv1.backward(self.relu1.backward(self.bn1.backward(dh)))
        return dx + dout


class GRUDirection(Layer):
    """Single-direction GRU over a (B, T, D) sequence, zero initial state.

    Gates: z = sigma(W_z x + U_z h + b_z), r likewise,
    candidate = tanh(W_h x + U_h (r*h) + b_h),
    h' = (1 - z)*h + z*candidate.
    """

    def __init__(self, input_dim, hidden):
        super().__init__()
        self.input_dim = input_dim
        self.hidden = hidden
        for gate in ("z", "r", "h"):
            self.params[f"W_{gate}"] = np.zeros((hidden, input_dim))
            self.params[f"U_{gate}"] = np.zeros((hidden, hidden))
            self.params[f"b_{gate}"] = np.zeros(hidden)
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ShapeMismatchError(f"expected (B, T, {self.input_dim}), got {x.shape}")
        p = self.params
        batch, steps, _ = x.shape
        h = np.zeros((batch, self.hidden))
        outputs = np.empty((batch, steps, self.hidden))
        cache = [] if train else None
        for t in range(steps):
            xt = x[:, t, :]
            z = sigmoid(xt @ p["W_z"].T + h @ p["U_z"].T + p["b_z"])
            r = sigmoid(xt @ p["W_r"].T + h @ p["U_r"].T + p["b_r"])
            rh = r * h
            hc = np.tanh(xt @ p["W_h"].T + rh @ p["U_h"].T + p["b_h"])
            h_new = (1.0 - z) * h + z * hc
            if train:
                cache.append((xt, h, z, r, rh, hc))
            h = h_new
            outputs[:, t, :] = h
        if train:
            self._cache = cache
        return outputs

    def backward(self, dout):
        cache = self._take_cache()
        p, g = self.params, self.grads
        steps = dout.shape[1]
        dx = np.zeros((dout.shape[0], steps, self.input_dim))
        dh = np.zeros((dout.shape[0], self.hidden))
        for t in range(steps - 1, -1, -1):
            xt, h_prev, z, r, rh, hc = cache[t]
            dh = dh + dout[:, t, :]
            dz = dh * (hc - h_prev)
            dhc = dh * z
            dh_prev = dh * (1.0 - z)
            da_h = dhc * (1.0 - hc * hc)
            g["W_h"] += da_h.T @ xt
            g["U_h"] += da_h.T @ rh
            g["b_h"] += da_h.sum(axis=0)
            dx[:, t, :] += da_h @ p["W_h"]
            drh = da_h @ p["U_h"]
            dr = drh * h_prev
            dh_prev += drh * r
            da_r = dr * r * (1.0 - r)
            g["W_r"] += da_r.T @ xt
            g["U_r"] += da_r.T @ h_prev
            g["b_r"] += da_r.sum(axis=0)
            dx[:, t, :] += da_r @ p["W_r"]
            dh_prev += da_r @ p["U_r"]
            da_z = dz * z * (1.0 - z)
            g["W_z"] += da_z.T @ xt
            g["U_z"] += da_z.T @ h_prev
            g["b_z"] += da_z.sum(axis=0)
            dx[:, t, :] += da_z @ p["W_z"]
            dh_prev += da_z @ p["U_z"]
            dh = dh_prev
        return dx


class BGRU(Layer):
    """Bidirectional GRU: independent directions, outputs concatenated."""

    def __init__(self, input_dim, hidden):
        super().__init__()
        self.hidden = hidden
        self.fwd = GRUDirection(input_dim, hidden)
        self.bwd = GRUDirection(input_dim, hidden)
        self.children = {"fwd": self.fwd, "bwd": self.bwd}

    def zero_grads(self):
        self.fwd.zero_grads()
        self.bwd.zero_grads()

    def forward(self, x, train=False):
        out_f = self.fwd.forward(x, train)
        out_b = self.bwd.forward(x[:, ::-1, :], train)[:, ::-1, :]
        return np.concatenate([out_f, out_b], axis=2)

    def backward(self, dout):
        h = self.hidden
        dx_f = self.fwd.backward(dout[:, :, :h])
        dx_b = self.bwd.backward(dout[:, ::-1, h:])[:, ::-1, :]
        return dx_f + dx_b


class SWSA(Layer):
    """Shared-weight multi-head self-attention over the time axis.

    One projection matrix produces both the query (taken from a fixed
    timestep) and the keys/values (all timesteps).  Per head the scores
    are plain dot products, softmax-normalised over time, and the head
    contexts are concatenated into a single vector per example.
    """

    def __init__(self, dim, heads, query_index):
        super().__init__()
        if dim % heads != 0:
            raise ShapeMismatchError(f"heads={heads} must divide dim={dim}")
        self.dim = dim
        self.heads = heads
        self.query_index = query_index
        self.params["w"] = np.zeros((dim, dim))
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.dim:
            raise ShapeMismatchError(f"expected (B, T, {self.dim}), got {x.shape}")
        if x.shape[1] <= self.query_index:
            raise ShapeMismatchError(
                f"sequence length {x.shape[1]} <= query index {self.query_index}"
            )
        batch, steps, _ = x.shape
        hd = self.dim // self.heads
        u = x @ self.params["w"].T
        uh = u.reshape(batch, steps, self.heads, hd)
        q = uh[:, self.query_index, :, :]
        scores = np.einsum("bhd,bthd->bht", q, uh)
        alpha = softmax(scores, axis=2)
        context = np.einsum("bht,bthd->bhd", alpha, uh)
        if train:
            self._cache = (x, u, uh, q, alpha)
        return context.reshape(batch, self.dim)

    def attention_weights(self, x):
        """Per-head attention distributions over time, shape (B, heads, T)."""
        batch, steps, _ = x.shape
        hd = self.dim // self.heads
        uh = (x @ self.params["w"].T).reshape(batch, steps, self.heads, hd)
        q = uh[:, self.query_index, :, :]
        return softmax(np.einsum("bhd,bthd->bht", q, uh), axis=2)

    def backward(self, dout):
        x, u, uh, q, alpha = self._take_cache()
        batch, steps, _ = x.shape
        hd = self.dim // self.heads
        dctx = dout.reshape(batch, self.heads, hd)
        dalpha = np.einsum("bhd,bthd->bht", dctx, uh)
        duh = np.einsum("bht,bhd->bthd", alpha, dctx)
        dscores = alpha * (dalpha - np.sum(alpha * dalpha, axis=2, keepdims=True))
        dq = np.einsum("bht,bthd->bhd", dscores, uh)
        duh += np.einsum("bht,bhd->bthd", dscores, q)
        duh[:, self.query_index, :, :] += dq
        du = duh.reshape(batch, steps, self.dim)
        self.grads["w"] += np.einsum("bti,btj->ij", du, x)
        return du @ self.params["w"]


class AvgPool(Layer):
    """Mean over the time axis; the parameter-free alternative to SWSA."""

    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return x.mean(axis=1)

    def backward(self, dout):
        shape = self._take_cache()
        return np.broadcast_to(dout[:, None, :] / shape[1], shape).copy()


class Dense(Layer):
    """Fully connected layer y = x W^T + b."""

    def __init__(self, in_features, out_features):
        super().__init__()
        self.in_features = in_features
        self.params["weight"] = np.zeros((out_features, in_features))
        self.params["bias"] = np.zeros(out_features)
        self.zero_grads()

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatchError(f"expected (B, {self.in_features}), got {x.shape}")
        if train:
            self._cache = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        x = self._take_cache()
        self.grads["weight"] += dout.T @ x
        self.grads["bias"] += dout.sum(axis=0)
        return dout @ self.params["weight"]
