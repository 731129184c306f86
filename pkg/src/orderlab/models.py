"""Model zoo: four small models with hand-written backward passes.

Why hand-written: the training loops here must be bit-reproducible and the
gradients must be inspectable, so every layer's backward is spelled out in
terms of the deterministic primitives in ``tensor``. Layers never call BLAS
or pairwise sums. Correctness is refereed by central finite differences in
the tests, not by another autodiff.

Models share a small duck-typed surface:

- ``params``: flat float64 vector, ``layout_id`` names its layout
- ``forward_loss(inputs, targets) -> (per_example, mean)`` where the mean
  is computed from the per-example vector with the same fold order
- ``backward(inputs, targets) -> GradientVector`` for the mean loss
- ``predict(inputs)`` -> labels (classifiers, ties to the lowest class
  index) or real values (regression)

Classification loss is softmax cross-entropy in natural log.
"""

import numpy as np

from .errors import DimensionError, NumericError
from .tensor import GradientVector, lmean, lsum, matmul


def _check_mean(kind, mean):
    if not np.isfinite(mean):
        raise NumericError(f"{kind}: non-finite loss")
    return float(mean)


def _softmax_terms(z):
    # max is order-insensitive, so the stabilization keeps determinism
    m = np.max(z, axis=1, keepdims=True)
    with np.errstate(over="ignore", under="ignore"):
        e = np.exp(z - m)
    se = lsum(e, axis=1)
    return m[:, 0], e, se


def _ce_per_example(z, labels):
    m, e, se = _softmax_terms(z)
    lse = m + np.log(se)
    return lse - z[np.arange(z.shape[0]), labels]


def _ce_grad_logits(z, labels):
    # d(mean CE)/dz = (softmax - onehot) / n
    _, e, se = _softmax_terms(z)
    g = e / se[:, None]
    g[np.arange(z.shape[0]), labels] -= 1.0
    return g / z.shape[0]


def _as_labels(targets, classes, kind):
    t = np.asarray(targets)
    if t.ndim != 1:
        raise DimensionError(f"{kind}: labels must be 1-d, got shape {t.shape}")
    labels = t.astype(np.int64)
    if not np.array_equal(labels, t):
        raise DimensionError(f"{kind}: labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DimensionError(f"{kind}: labels out of range [0, {classes})")
    return labels


class LinReg2:
    """Scalar linear regression, squared error: loss_i = (w x_i + b - y_i)^2."""

    kind = "linreg2"

    def __init__(self):
        self.params = np.zeros(2)  # [w, b]
        self.layout_id = "linreg2[w,b]"

    @property
    def n_params(self):
        return 2

    def init_params(self, gen):
        self.params = gen.standard_normal(2) * 0.1

    def _xy(self, inputs, targets=None):
        x = np.asarray(inputs, dtype=np.float64).reshape(-1)
        if targets is None:
            return x
        y = np.asarray(targets, dtype=np.float64).reshape(-1)
        if x.shape != y.shape:
            raise DimensionError(f"linreg2: {x.shape[0]} inputs vs {y.shape[0]} targets")
        if x.size == 0:
            raise DimensionError("linreg2: empty batch")
        return x, y

    def forward_loss(self, inputs, targets):
        x, y = self._xy(inputs, targets)
        w, b = self.params
        err = w * x + b - y
        per = err * err
        return per, _check_mean(self.kind, lmean(per))

    def backward(self, inputs, targets):
        x, y = self._xy(inputs, targets)
        w, b = self.params
        err = w * x + b - y
        return GradientVector(
            np.array([lmean(2.0 * err * x), lmean(2.0 * err)]), self.layout_id
        )

    def predict(self, inputs):
        x = self._xy(inputs)
        w, b = self.params
        return w * x + b


class _FlatParamModel:
    """Shared plumbing: flat param vector with named views."""

    def __init__(self, spec):
        # spec: list of (name, shape)
        self._slices = {}
        off = 0
        for name, shape in spec:
            size = int(np.prod(shape))
            self._slices[name] = (off, shape)
            off += size
        self.params = np.zeros(off)

    @property
    def n_params(self):
        return self.params.size

    def _p(self, name):
        off, shape = self._slices[name]
        return self.params[off : off + int(np.prod(shape))].reshape(shape)

    def _pack(self, grads):
        out = np.zeros_like(self.params)
        for name, g in grads.items():
            off, shape = self._slices[name]
            out[off : off + int(np.prod(shape))] = np.asarray(g).reshape(-1)
        return GradientVector(out, self.layout_id)


class SoftmaxRegression(_FlatParamModel):
    """Multinomial logistic regression on flattened inputs."""

    kind = "logreg"

    def __init__(self, in_dim, classes):
        if classes < 2:
            raise DimensionError("logreg needs at least 2 classes")
        super().__init__([("W", (in_dim, classes)), ("b", (classes,))])
        self.in_dim = in_dim
        self.classes = classes
        self.layout_id = f"logreg[{in_dim}-{classes}]"

    def init_params(self, gen):
        self._p("W")[:] = gen.standard_normal((self.in_dim, self.classes)) / np.sqrt(self.in_dim)
        self._p("b")[:] = 0.0

    def _x(self, inputs):
        x = np.asarray(inputs, dtype=np.float64)
        x = x.reshape(x.shape[0], -1) if x.ndim > 1 else x.reshape(1, -1)
        if x.shape[1] != self.in_dim:
            raise DimensionError(f"logreg: expected {self.in_dim} features, got {x.shape[1]}")
        return x

    def logits(self, inputs):
        x = self._x(inputs)
        return matmul(x, self._p("W")) + self._p("b")

    def forward_loss(self, inputs, targets):
        z = self.logits(inputs)
        labels = _as_labels(targets, self.classes, self.kind)
        per = _ce_per_example(z, labels)
        return per, _check_mean(self.kind, lmean(per))

    def backward(self, inputs, targets):
        x = self._x(inputs)
        z = matmul(x, self._p("W")) + self._p("b")
        g = _ce_grad_logits(z, _as_labels(targets, self.classes, self.kind))
        return self._pack({"W": matmul(x.T, g), "b": lsum(g, axis=0)})

    def predict(self, inputs):
        return np.argmax(self.logits(inputs), axis=1)


class MLP(_FlatParamModel):
    """One tanh hidden layer, softmax head."""

    kind = "mlp"

    def __init__(self, in_dim, hidden, classes):
        if classes < 2:
            raise DimensionError("mlp needs at least 2 classes")
        super().__init__(
            [
                ("W1", (in_dim, hidden)),
                ("b1", (hidden,)),
                ("W2", (hidden, classes)),
                ("b2", (classes,)),
            ]
        )
        self.in_dim = in_dim
        self.hidden = hidden
        self.classes = classes
        self.layout_id = f"mlp[{in_dim}-{hidden}-{classes}]"

    def init_params(self, gen):
        self._p("W1")[:] = gen.standard_normal((self.in_dim, self.hidden)) / np.sqrt(self.in_dim)
        self._p("b1")[:] = 0.0
        self._p("W2")[:] = gen.standard_normal((self.hidden, self.classes)) / np.sqrt(self.hidden)
        self._p("b2")[:] = 0.0

    def _x(self, inputs):
        x = np.asarray(inputs, dtype=np.float64)
        x = x.reshape(x.shape[0], -1) if x.ndim > 1 else x.reshape(1, -1)
        if x.shape[1] != self.in_dim:
            raise DimensionError(f"mlp: expected {self.in_dim} features, got {x.shape[1]}")
        return x

    def _forward(self, x):
        h = np.tanh(matmul(x, self._p("W1")) + self._p("b1"))
        z = matmul(h, self._p("W2")) + self._p("b2")
        return h, z

    def logits(self, inputs):
        return self._forward(self._x(inputs))[1]

    def forward_loss(self, inputs, targets):
        per = _ce_per_example(
            self.logits(inputs), _as_labels(targets, self.classes, self.kind)
        )
        return per, _check_mean(self.kind, lmean(per))

    def backward(self, inputs, targets):
        x = self._x(inputs)
        h, z = self._forward(x)
        g = _ce_grad_logits(z, _as_labels(targets, self.classes, self.kind))
        dh = matmul(g, self._p("W2").T)
        dpre = dh * (1.0 - h * h)
        return self._pack(
            {
                "W1": matmul(x.T, dpre),
                "b1": lsum(dpre, axis=0),
                "W2": matmul(h.T, g),
                "b2": lsum(g, axis=0),
            }
        )

    def predict(self, inputs):
        return np.argmax(self.logits(inputs), axis=1)


def _conv_out(size, k=3, stride=2, pad=1):
    return (size + 2 * pad - k) // stride + 1


def _patch_index(h, w, k, stride):
    # (positions, k*k) row/col indices into the padded image
    i0 = np.repeat(np.arange(k), k)
    j0 = np.tile(np.arange(k), k)
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    i1 = stride * np.repeat(np.arange(oh), ow)
    j1 = stride * np.tile(np.arange(ow), oh)
    return i1[:, None] + i0[None, :], j1[:, None] + j0[None, :], oh, ow


def _im2col(x, k, stride):
    # x: (n, c, h, w) already padded; returns (n*oh*ow, c*k*k)
    n, c, h, w = x.shape
    rows, cols, oh, ow = _patch_index(h, w, k, stride)
    patches = x[:, :, rows, cols]  # (n, c, oh*ow, k*k)
    return patches.transpose(0, 2, 1, 3).reshape(n * oh * ow, c * k * k), oh, ow


def _col2im(dcols, n, c, h, w, k, stride):
    # scatter-add back into the padded image; np.add.at loops the index
    # array sequentially, so repeated positions accumulate in fixed order
    rows, cols, oh, ow = _patch_index(h, w, k, stride)
    dx = np.zeros((n, c, h, w))
    vals = dcols.reshape(n, oh * ow, c, k * k).transpose(0, 2, 1, 3)
    np.add.at(dx, (slice(None), slice(None), rows, cols), vals)
    return dx


class SmallCNN(_FlatParamModel):
    """Two stride-2 3x3 conv layers (tanh) and a dense softmax head.

    Convolution runs as im2col + deterministic matmul. Padding is 1, so a
    28x28 input maps 28 -> 14 -> 7 spatially.
    """

    kind = "cnn_small"
    K = 3
    STRIDE = 2
    PAD = 1

    def __init__(self, image_hw=28, classes=10, c1=8, c2=16):
        o1 = _conv_out(image_hw)
        o2 = _conv_out(o1)
        if o2 < 1:
            raise DimensionError(f"image size {image_hw} too small for two stride-2 convs")
        super().__init__(
            [
                ("Wc1", (c1, 1 * self.K * self.K)),
                ("bc1", (c1,)),
                ("Wc2", (c2, c1 * self.K * self.K)),
                ("bc2", (c2,)),
                ("Wd", (c2 * o2 * o2, classes)),
                ("bd", (classes,)),
            ]
        )
        self.image_hw = image_hw
        self.classes = classes
        self.c1 = c1
        self.c2 = c2
        self.o1 = o1
        self.o2 = o2
        self.layout_id = f"cnn_small[{image_hw}x{image_hw}-{c1}-{c2}-{classes}]"

    def init_params(self, gen):
        for name, fan_in in (
            ("Wc1", self.K * self.K),
            ("Wc2", self.c1 * self.K * self.K),
            ("Wd", self.c2 * self.o2 * self.o2),
        ):
            w = self._p(name)
            w[:] = gen.standard_normal(w.shape) / np.sqrt(fan_in)
        self._p("bc1")[:] = 0.0
        self._p("bc2")[:] = 0.0
        self._p("bd")[:] = 0.0

    def _x(self, inputs):
        x = np.asarray(inputs, dtype=np.float64)
        hw = self.image_hw
        if x.ndim == 2 and x.shape == (hw, hw):
            x = x[None]
        if x.ndim == 2:  # flat rows
            x = x.reshape(x.shape[0], hw, hw)
        if x.ndim == 3:
            x = x[:, None, :, :]
        if x.ndim != 4 or x.shape[1] != 1 or x.shape[2] != hw or x.shape[3] != hw:
            raise DimensionError(f"cnn_small: cannot interpret input shape {np.shape(inputs)}")
        return x

    @staticmethod
    def _padded(x):
        n, c, h, w = x.shape
        out = np.zeros((n, c, h + 2, w + 2))
        out[:, :, 1:-1, 1:-1] = x
        return out

    def _conv_forward(self, x, wname, bname):
        cols, oh, ow = _im2col(self._padded(x), self.K, self.STRIDE)
        wc = self._p(wname)
        pre = matmul(cols, wc.T) + self._p(bname)
        pre = pre.reshape(x.shape[0], oh, ow, wc.shape[0]).transpose(0, 3, 1, 2)
        return np.tanh(pre), cols

    def _forward(self, x):
        a1, cols1 = self._conv_forward(x, "Wc1", "bc1")
        a2, cols2 = self._conv_forward(a1, "Wc2", "bc2")
        flat = a2.transpose(0, 2, 3, 1).reshape(x.shape[0], -1)
        z = matmul(flat, self._p("Wd")) + self._p("bd")
        return a1, cols1, a2, cols2, flat, z

    def logits(self, inputs):
        return self._forward(self._x(inputs))[5]

    def forward_loss(self, inputs, targets):
        per = _ce_per_example(
            self.logits(inputs), _as_labels(targets, self.classes, self.kind)
        )
        return per, _check_mean(self.kind, lmean(per))

    def backward(self, inputs, targets):
        x = self._x(inputs)
        n = x.shape[0]
        a1, cols1, a2, cols2, flat, z = self._forward(x)
        g = _ce_grad_logits(z, _as_labels(targets, self.classes, self.kind))

        dWd = matmul(flat.T, g)
        dbd = lsum(g, axis=0)
        dflat = matmul(g, self._p("Wd").T)
        da2 = dflat.reshape(n, self.o2, self.o2, self.c2).transpose(0, 3, 1, 2)

        dpre2 = (da2 * (1.0 - a2 * a2)).transpose(0, 2, 3, 1).reshape(-1, self.c2)
        dWc2 = matmul(dpre2.T, cols2)
        dbc2 = lsum(dpre2, axis=0)
        dcols2 = matmul(dpre2, self._p("Wc2"))
        da1 = _col2im(dcols2, n, self.c1, self.o1 + 2, self.o1 + 2, self.K, self.STRIDE)
        da1 = da1[:, :, 1:-1, 1:-1]

        dpre1 = (da1 * (1.0 - a1 * a1)).transpose(0, 2, 3, 1).reshape(-1, self.c1)
        dWc1 = matmul(dpre1.T, cols1)
        dbc1 = lsum(dpre1, axis=0)

        return self._pack(
            {"Wc1": dWc1, "bc1": dbc1, "Wc2": dWc2, "bc2": dbc2, "Wd": dWd, "bd": dbd}
        )

    def predict(self, inputs):
        return np.argmax(self.logits(inputs), axis=1)


class ModelPair:
    """Source model plus the attacker's smaller stand-in.

    The stand-in must be strictly smaller: the threat model is an observer
    who cannot afford (or see) the real model, so a surrogate as big as the
    source is a configuration mistake.
    """

    def __init__(self, source, surrogate):
        if surrogate.n_params >= source.n_params:
            raise ValueError(
                f"surrogate has {surrogate.n_params} params, source only "
                f"{source.n_params}; the stand-in must be strictly smaller"
            )
        self.source = source
        self.surrogate = surrogate


MODEL_KINDS = ("linreg2", "logreg", "mlp", "cnn_small")


def build_model(spec, in_shape=None, classes=None):
    """Construct a model from a config dict.

    spec["kind"] picks the class; dataset-derived in_shape/classes fill in
    dimensions unless the spec overrides them.
    """
    kind = spec.get("kind")
    if kind == "linreg2":
        return LinReg2()
    in_dim = spec.get("in_dim")
    if in_dim is None and in_shape is not None:
        in_dim = int(np.prod(in_shape))
    k = spec.get("classes", classes)
    if kind == "logreg":
        return SoftmaxRegression(in_dim, k)
    if kind == "mlp":
        return MLP(in_dim, spec.get("hidden", 32), k)
    if kind == "cnn_small":
        hw = spec.get("image_hw")
        if hw is None and in_shape is not None and len(in_shape) >= 2:
            hw = in_shape[-1]
        return SmallCNN(image_hw=hw or 28, classes=k)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
