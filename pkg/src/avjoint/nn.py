"""Differentiable kernels with hand-written forward and backward passes.

Each layer is a small class bound to a ParamStore entry set; ``forward``
caches whatever its ``backward`` needs, and ``backward`` returns the input
gradient while accumulating parameter gradients into the store.  Everything
is plain numpy; float32 is the training dtype, float64 the verification
dtype (finite-difference checks are only meaningful in 64-bit).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidConfig, InvalidInput, InvalidState, NumericalError

GROUPS = ("AE", "VE", "SC")


class Param:
    """One named tensor with a paired gradient buffer."""

    __slots__ = ("name", "value", "grad", "frozen", "group", "kind")

    def __init__(self, name, value, group, kind="param", frozen=False):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.frozen = bool(frozen)
        self.group = group
        self.kind = kind  # "param" receives gradients; "buffer" is forward-pass state


class ParamStore:
    """Ordered, named parameter tensors with per-entry frozen flags."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._entries: dict[str, Param] = {}

    def add(self, name, value, group, kind="param", frozen=False) -> Param:
        if name in self._entries:
            raise InvalidState(f"parameter {name!r} already registered")
        if group not in GROUPS:
            raise InvalidConfig(f"unknown parameter group {group!r}")
        p = Param(name, np.ascontiguousarray(value, dtype=self.dtype), group, kind, frozen)
        self._entries[name] = p
        return p

    def __getitem__(self, name) -> Param:
        return self._entries[name]

    def __contains__(self, name) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def __len__(self):
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def params(self, group=None, trainable_only=False):
        for p in self._entries.values():
            if group is not None and p.group != group:
                continue
            if trainable_only and (p.kind != "param" or p.frozen):
                continue
            yield p

    def groups(self):
        return sorted({p.group for p in self._entries.values()})

    def zero_grads(self):
        for p in self._entries.values():
            p.grad.fill(0)

    def freeze_group(self, group, frozen=True):
        for p in self.params(group=group):
            p.frozen = frozen

    def entries(self):
        """Checkpoint view: (name, value, frozen, group) in registration order."""
        return [(p.name, p.value, p.frozen, p.group) for p in self._entries.values()]

    def load_entries(self, entries, strict=True):
        seen = set()
        for name, value, frozen, group in entries:
            if name not in self._entries:
                if strict:
                    raise InvalidInput(f"checkpoint entry {name!r} has no matching parameter")
                continue
            p = self._entries[name]
            if p.value.shape != value.shape:
                raise InvalidInput(
                    f"shape mismatch for {name!r}: model {p.value.shape}, checkpoint {value.shape}"
                )
            p.value[...] = value.astype(self.dtype)
            p.frozen = bool(frozen)
            if p.group != group:
                raise InvalidInput(f"group mismatch for {name!r}: model {p.group}, checkpoint {group}")
            seen.add(name)
        if strict and len(seen) != len(self._entries):
            missing = sorted(set(self._entries) - seen)
            raise InvalidInput(f"checkpoint is missing parameters: {missing[:5]}")

    def group_fingerprint(self, group) -> bytes:
        """Concatenated raw bytes of a group's tensors, for bitwise comparisons."""
        return b"".join(p.value.tobytes() for p in self.params(group=group))


def kaiming_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _check_finite(x, what):
    if not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values in {what}")


class Conv1d:
    """Cross-correlation along the last axis: (N, Cin, L) -> (N, Cout, L')."""

    def __init__(self, store, name, cin, cout, k, pad=0, stride=1, *, group, rng):
        self.k, self.pad, self.stride = int(k), int(pad), int(stride)
        self.cin, self.cout = int(cin), int(cout)
        self.w = store.add(f"{name}.w", kaiming_uniform(rng, (cout, cin, k), cin * k, store.dtype), group)
        self.b = store.add(f"{name}.b", np.zeros(cout), group)
        self._cache = None

    def out_len(self, L: int) -> int:
        return (L + 2 * self.pad - self.k) // self.stride + 1

    def forward(self, x):
        n, cin, L = x.shape
        if cin != self.cin:
            raise InvalidInput(f"expected {self.cin} input channels, got {cin}")
        if L + 2 * self.pad < self.k:
            raise InvalidInput(f"input length {L} too short for kernel {self.k} with pad {self.pad}")
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad))) if self.pad else x
        lout = self.out_len(L)
        out = np.broadcast_to(self.b.value[None, :, None], (n, self.cout, lout)).copy()
        for t in range(self.k):
            seg = xp[:, :, t : t + self.stride * lout : self.stride]
            out += np.tensordot(seg, self.w.value[:, :, t], axes=([1], [1])).transpose(0, 2, 1)
        self._cache = (xp, L, lout)
        return out

    def backward(self, dy):
        if self._cache is None:
            raise InvalidState("conv1d backward called before forward")
        xp, L, lout = self._cache
        self.b.grad += dy.sum(axis=(0, 2))
        dxp = np.zeros_like(xp)
        for t in range(self.k):
            seg = xp[:, :, t : t + self.stride * lout : self.stride]
            self.w.grad[:, :, t] += np.tensordot(dy, seg, axes=([0, 2], [0, 2]))
            dxp[:, :, t : t + self.stride * lout : self.stride] += np.tensordot(
                dy, self.w.value[:, :, t], axes=([1], [0])
            ).transpose(0, 2, 1)
        return dxp[:, :, self.pad : self.pad + L] if self.pad else dxp


class Conv2d:
    """Cross-correlation over the last two axes: (N, Cin, H, W) -> (N, Cout, H', W')."""

    def __init__(self, store, name, cin, cout, k, pad=0, stride=1, *, group, rng):
        self.k, self.pad, self.stride = int(k), int(pad), int(stride)
        self.cin, self.cout = int(cin), int(cout)
        self.w = store.add(
            f"{name}.w", kaiming_uniform(rng, (cout, cin, k, k), cin * k * k, store.dtype), group
        )
        self.b = store.add(f"{name}.b", np.zeros(cout), group)
        self._cache = None

    def out_len(self, L: int) -> int:
        return (L + 2 * self.pad - self.k) // self.stride + 1

    def forward(self, x):
        n, cin, h, w = x.shape
        if cin != self.cin:
            raise InvalidInput(f"expected {self.cin} input channels, got {cin}")
        if min(h, w) + 2 * self.pad < self.k:
            raise InvalidInput(f"input {h}x{w} too small for kernel {self.k} with pad {self.pad}")
        p = self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        hout, wout = self.out_len(h), self.out_len(w)
        s = self.stride
        out = np.broadcast_to(self.b.value[None, :, None, None], (n, self.cout, hout, wout)).copy()
        for ty in range(self.k):
            for tx in range(self.k):
                seg = xp[:, :, ty : ty + s * hout : s, tx : tx + s * wout : s]
                out += np.tensordot(seg, self.w.value[:, :, ty, tx], axes=([1], [1])).transpose(
                    0, 3, 1, 2
                )
        self._cache = (xp, (h, w), (hout, wout))
        return out

    def backward(self, dy):
        if self._cache is None:
            raise InvalidState("conv2d backward called before forward")
        xp, (h, w), (hout, wout) = self._cache
        s, p = self.stride, self.pad
        self.b.grad += dy.sum(axis=(0, 2, 3))
        dxp = np.zeros_like(xp)
        for ty in range(self.k):
            for tx in range(self.k):
                seg = xp[:, :, ty : ty + s * hout : s, tx : tx + s * wout : s]
                self.w.grad[:, :, ty, tx] += np.tensordot(dy, seg, axes=([0, 2, 3], [0, 2, 3]))
                dxp[:, :, ty : ty + s * hout : s, tx : tx + s * wout : s] += np.tensordot(
                    dy, self.w.value[:, :, ty, tx], axes=([1], [1])
                ).transpose(0, 3, 1, 2)
        return dxp[:, :, p : p + h, p : p + w] if p else dxp


class AvgPool1d:
    """Zero-padded average pooling; the divisor is the kernel size, padding included."""

    def __init__(self, kernel=3, pad=1, stride=2):
        self.k, self.pad, self.stride = int(kernel), int(pad), int(stride)
        self._cache = None

    def out_len(self, L: int) -> int:
        return (L + 2 * self.pad - self.k) // self.stride + 1

    def forward(self, x):
        n, c, L = x.shape
        if L + 2 * self.pad < self.k:
            raise InvalidInput(f"input length {L} too short for pooling kernel {self.k}")
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad))) if self.pad else x
        lout = self.out_len(L)
        out = np.zeros((n, c, lout), dtype=x.dtype)
        for t in range(self.k):
            out += xp[:, :, t : t + self.stride * lout : self.stride]
        out /= self.k
        self._cache = (x.shape, xp.shape, lout)
        return out

    def backward(self, dy):
        if self._cache is None:
            raise InvalidState("avgpool backward called before forward")
        (n, c, L), xp_shape, lout = self._cache
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        scaled = dy / self.k
        for t in range(self.k):
            dxp[:, :, t : t + self.stride * lout : self.stride] += scaled
        return dxp[:, :, self.pad : self.pad + L] if self.pad else dxp


class BatchNorm:
    """Per-channel batch normalization over axis 1 of (N, C, ...) inputs."""

    def __init__(self, store, name, channels, *, group, momentum=0.1, eps=1e-5):
        if eps <= 0:
            raise InvalidConfig(f"eps must be positive, got {eps}")
        self.momentum = float(momentum)
        self.eps = float(eps)
        self.gamma = store.add(f"{name}.gamma", np.ones(channels), group)
        self.beta = store.add(f"{name}.beta", np.zeros(channels), group)
        self.running_mean = store.add(f"{name}.running_mean", np.zeros(channels), group, kind="buffer")
        self.running_var = store.add(f"{name}.running_var", np.ones(channels), group, kind="buffer")
        self._cache = None

    @staticmethod
    def _bshape(x):
        return (1, -1) + (1,) * (x.ndim - 2)

    def forward(self, x, train: bool):
        axes = (0,) + tuple(range(2, x.ndim))
        shape = self._bshape(x)
        if train:
            if x.shape[0] < 2:
                raise InvalidInput("batch normalization in train mode needs a batch of >= 2")
            mu = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.size // x.shape[1]
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mu.reshape(shape)) * inv_std.reshape(shape)
            mom = self.momentum
            self.running_mean.value[...] = (1 - mom) * self.running_mean.value + mom * mu
            unbiased = var * (m / (m - 1))
            self.running_var.value[...] = (1 - mom) * self.running_var.value + mom * unbiased
            self._cache = ("train", xhat, inv_std, m)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var.value + self.eps)
            xhat = (x - self.running_mean.value.reshape(shape)) * inv_std.reshape(shape)
            self._cache = ("eval", xhat, inv_std, None)
        return self.gamma.value.reshape(shape) * xhat + self.beta.value.reshape(shape)

    def backward(self, dy):
        if self._cache is None:
            raise InvalidState("batchnorm backward called before forward")
        mode, xhat, inv_std, m = self._cache
        axes = (0,) + tuple(range(2, dy.ndim))
        shape = self._bshape(dy)
        dgamma = (dy * xhat).sum(axis=axes)
        dbeta = dy.sum(axis=axes)
        self.gamma.grad += dgamma
        self.beta.grad += dbeta
        scale = (self.gamma.value * inv_std).reshape(shape)
        if mode == "eval":
            return dy * scale
        return scale * (dy - (dbeta / m).reshape(shape) - xhat * (dgamma / m).reshape(shape))


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy):
        if self._mask is None:
            raise InvalidState("relu backward called before forward")
        return np.where(self._mask, dy, 0)


class Dropout:
    """Inverted dropout; identity at eval time.  p = 0 consumes no randomness."""

    def __init__(self, p=0.5):
        if not 0.0 <= p < 1.0:
            raise InvalidConfig(f"dropout probability must be in [0, 1), got {p}")
        self.p = float(p)
        self._mask = None

    def forward(self, x, train: bool, rng=None):
        if not train or self.p == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise InvalidState("train-mode dropout needs an rng")
        keep = rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) / (1.0 - self.p)
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class Linear:
    """Affine map: (N, F) @ W.T + b with W shaped (O, F)."""

    def __init__(self, store, name, in_features, out_features, *, group, rng):
        self.in_features, self.out_features = int(in_features), int(out_features)
        self.w = store.add(
            f"{name}.w",
            kaiming_uniform(rng, (out_features, in_features), in_features, store.dtype),
            group,
        )
        self.b = store.add(f"{name}.b", np.zeros(out_features), group)
        self._cache = None

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise InvalidInput(f"expected (N, {self.in_features}) input, got {x.shape}")
        self._cache = x
        return x @ self.w.value.T + self.b.value

    def backward(self, dy):
        if self._cache is None:
            raise InvalidState("linear backward called before forward")
        x = self._cache
        self.w.grad += dy.T @ x
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value


def softmax(logits):
    """Row-wise softmax with max subtraction."""
    _check_finite(logits, "logits")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer labels under row-wise softmax.

    Returns (loss, probs).  Computed via the log-sum-exp form so saturated
    logits stay finite.
    """
    _check_finite(logits, "logits")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise InvalidInput(f"labels must be shaped ({n},), got {labels.shape}")
    if labels.min() < 0 or labels.max() >= k:
        raise InvalidInput(f"labels must lie in [0, {k})")
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
    log_probs = z - log_norm
    loss = float(-log_probs[np.arange(n), labels].mean())
    return loss, np.exp(log_probs)


def softmax_cross_entropy_backward(probs, labels):
    """Gradient of the mean cross-entropy loss with respect to the logits."""
    n = probs.shape[0]
    dlogits = probs.copy()
    dlogits[np.arange(n), labels] -= 1.0
    return dlogits / n


def grad_check(model_fn, params: ParamStore, eps=1e-5, samples_per_tensor=6, seed=0):
    """Compare analytic gradients in ``params`` against central differences.

    ``model_fn()`` must return the scalar loss as a pure function of the
    current parameter values; the caller populates ``params`` gradients with
    one analytic backward pass beforehand.  Returns the maximum over sampled
    coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    Requires a float64 store.
    """
    if params.dtype != np.float64:
        raise InvalidConfig("gradient checking requires a float64 parameter store")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params.params(trainable_only=True):
        flat_v = p.value.reshape(-1)
        flat_g = p.grad.reshape(-1)
        n = flat_v.shape[0]
        idx = np.arange(n) if n <= samples_per_tensor else rng.choice(n, samples_per_tensor, replace=False)
        for i in idx:
            orig = flat_v[i]
            flat_v[i] = orig + eps
            f_plus = model_fn()
            flat_v[i] = orig - eps
            f_minus = model_fn()
            flat_v[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic = flat_g[i]
            rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
            worst = max(worst, rel)
    return worst
