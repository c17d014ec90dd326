"""Persistence and reproducibility: model files, datasets, generation, toy training.

The model file is a versioned, self-describing text format: shape headers
followed by base-10 floats at 17 significant digits, which round-trips IEEE
doubles bitwise.  Random networks come from a hand-rolled xoshiro256**
stream (seeded through splitmix64) so that generated weights are identical
across platforms and numpy versions; the generator is pinned by test
vectors.  The toy trainer fits small skip-product networks with full-batch
gradient descent on softmax cross-entropy, with hand-derived parameter
gradients.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .networks import CcpNetwork, ConvCcpNetwork, ConvLayerSpec, NcpNetwork, Network

__all__ = [
    "MalformedFile",
    "TrainingDiverged",
    "Xoshiro256StarStar",
    "Dataset",
    "save_model",
    "load_model",
    "generate_random_network",
    "load_dataset_csv",
    "save_dataset_csv",
    "synthetic_blobs",
    "synthetic_rings",
    "dataset_loss",
    "parameter_gradients",
    "toy_train",
    "training_accuracy",
]

_HEADER = "pnverify-model v1"
_MASK64 = (1 << 64) - 1


class MalformedFile(ValueError):
    """Model file cannot be parsed: bad version, bad shapes, or truncation."""


class TrainingDiverged(RuntimeError):
    """Training loss became non-finite."""


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256StarStar:
    """The xoshiro256** generator, implemented bit-for-bit.

    Seeding expands a single 64-bit seed through splitmix64 into the four
    state words, following the reference recipe.  ``next_double`` uses the
    53-high-bits construction, giving uniforms in [0, 1).

    Test vectors (frozen in the test suite and README): from raw state
    (1, 2, 3, 4) the first outputs are 11520, 0, 1509978240,
    1215971899390074240.
    """

    def __init__(self, seed: int):
        s = seed & _MASK64
        state = []
        for _ in range(4):
            s = (s + 0x9E3779B97F4A7C15) & _MASK64
            z = s
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
            state.append(z ^ (z >> 31))
        self._s = state

    @classmethod
    def from_state(cls, s0: int, s1: int, s2: int, s3: int) -> "Xoshiro256StarStar":
        gen = cls.__new__(cls)
        gen._s = [s0 & _MASK64, s1 & _MASK64, s2 & _MASK64, s3 & _MASK64]
        return gen

    def next_u64(self) -> int:
        s = self._s
        result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def next_double(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float, shape) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        vals = np.fromiter(
            (lo + (hi - lo) * self.next_double() for _ in range(n)),
            dtype=np.float64,
            count=n,
        )
        return vals.reshape(shape)


# --------------------------------------------------------------------------
# model files


def _format_array(name: str, a: np.ndarray) -> list[str]:
    lines = [f"array {name} {' '.join(str(s) for s in a.shape)}"]
    flat = a.reshape(-1)
    for i in range(0, flat.size, 4):
        lines.append(" ".join(f"{v:.17g}" for v in flat[i : i + 4]))
    return lines


def save_model(net: Network | ConvCcpNetwork, path) -> None:
    lines = [_HEADER]
    if isinstance(net, CcpNetwork):
        lines += [
            "kind ccp",
            f"degree {net.degree}",
            f"input_dim {net.input_dim}",
            f"hidden_dim {net.hidden}",
            f"output_dim {net.output}",
        ]
        for n, Wn in enumerate(net.W, start=1):
            lines += _format_array(f"W{n}", Wn)
        lines += _format_array("C", net.C)
        lines += _format_array("beta", net.beta)
    elif isinstance(net, NcpNetwork):
        lines += [
            "kind ncp",
            f"degree {net.degree}",
            f"input_dim {net.input_dim}",
            f"hidden_dim {net.hidden}",
            f"output_dim {net.output}",
        ]
        for n, Wn in enumerate(net.W, start=1):
            lines += _format_array(f"W{n}", Wn)
        for n, Sn in enumerate(net.S, start=1):
            lines += _format_array(f"S{n}", Sn)
        for n, bn in enumerate(net.b, start=1):
            lines += _format_array(f"b{n}", bn)
        lines += _format_array("C", net.C)
        lines += _format_array("beta", net.beta)
    elif isinstance(net, ConvCcpNetwork):
        lines += ["kind ccp-conv", f"degree {net.degree}", f"output_dim {net.output}"]
        for spec in net.specs:
            lines.append(
                "conv "
                + " ".join(
                    str(v)
                    for v in (
                        spec.in_channels,
                        spec.input_h,
                        spec.input_w,
                        spec.out_channels,
                        spec.kernel_h,
                        spec.kernel_w,
                        spec.stride,
                        spec.padding,
                    )
                )
            )
        for n, kern in enumerate(net.kernels, start=1):
            lines += _format_array(f"K{n}", kern)
        lines += _format_array("C", net.C)
        lines += _format_array("beta", net.beta)
    else:
        raise TypeError(f"unsupported network type {type(net).__name__}")
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n")


class _Cursor:
    """Line cursor over the model file; every read failure is MalformedFile."""

    def __init__(self, text: str):
        self.lines = [ln.strip() for ln in text.splitlines()]
        self.lines = [ln for ln in self.lines if ln and not ln.startswith("#")]
        self.pos = 0

    def next_line(self) -> str:
        if self.pos >= len(self.lines):
            raise MalformedFile("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def expect_key(self, key: str) -> list[str]:
        parts = self.next_line().split()
        if parts[0] != key:
            raise MalformedFile(f"expected '{key}', found '{parts[0]}'")
        return parts[1:]

    def int_field(self, key: str) -> int:
        parts = self.expect_key(key)
        if len(parts) != 1:
            raise MalformedFile(f"'{key}' takes exactly one value")
        try:
            return int(parts[0])
        except ValueError as exc:
            raise MalformedFile(f"'{key}' is not an integer: {parts[0]}") from exc

    def read_array(self, name: str, shape: tuple[int, ...]) -> np.ndarray:
        parts = self.expect_key("array")
        if parts[0] != name:
            raise MalformedFile(f"expected array '{name}', found '{parts[0]}'")
        try:
            declared = tuple(int(p) for p in parts[1:])
        except ValueError as exc:
            raise MalformedFile(f"bad shape for array '{name}'") from exc
        if declared != shape:
            raise MalformedFile(f"array '{name}' has shape {declared}, expected {shape}")
        count = int(np.prod(shape))
        values: list[float] = []
        while len(values) < count:
            for tok in self.next_line().split():
                try:
                    values.append(float(tok))
                except ValueError as exc:
                    raise MalformedFile(f"bad float in array '{name}': {tok}") from exc
        if len(values) != count:
            raise MalformedFile(f"array '{name}' has extra values on its last line")
        return np.array(values).reshape(shape)

    def expect_end(self) -> None:
        if self.next_line() != "end":
            raise MalformedFile("missing 'end' marker")
        if self.pos != len(self.lines):
            raise MalformedFile("trailing content after 'end'")


def load_model(path) -> Network | ConvCcpNetwork:
    cur = _Cursor(Path(path).read_text())
    header = cur.next_line()
    if header != _HEADER:
        raise MalformedFile(f"unsupported header: {header!r} (want {_HEADER!r})")
    kind = cur.expect_key("kind")
    if kind == ["ccp"] or kind == ["ncp"]:
        degree = cur.int_field("degree")
        d = cur.int_field("input_dim")
        k = cur.int_field("hidden_dim")
        o = cur.int_field("output_dim")
        if degree <= 0 or d <= 0 or k <= 0 or o <= 0:
            raise MalformedFile("dimensions must be positive")
        W = tuple(cur.read_array(f"W{n}", (d, k)) for n in range(1, degree + 1))
        if kind == ["ccp"]:
            C = cur.read_array("C", (o, k))
            beta = cur.read_array("beta", (o,))
            cur.expect_end()
            return CcpNetwork(W=W, C=C, beta=beta)
        S = tuple(cur.read_array(f"S{n}", (k, k)) for n in range(1, degree))
        b = tuple(cur.read_array(f"b{n}", (k,)) for n in range(1, degree))
        C = cur.read_array("C", (o, k))
        beta = cur.read_array("beta", (o,))
        cur.expect_end()
        return NcpNetwork(W=W, S=S, b=b, C=C, beta=beta)
    if kind == ["ccp-conv"]:
        degree = cur.int_field("degree")
        o = cur.int_field("output_dim")
        specs = []
        for _ in range(degree):
            parts = cur.expect_key("conv")
            if len(parts) != 8:
                raise MalformedFile("conv line needs 8 integers")
            try:
                in_c, in_h, in_w, out_c, k_h, k_w, stride, padding = (int(p) for p in parts)
            except ValueError as exc:
                raise MalformedFile("conv line needs 8 integers") from exc
            specs.append(
                ConvLayerSpec(
                    in_channels=in_c,
                    out_channels=out_c,
                    kernel_h=k_h,
                    kernel_w=k_w,
                    stride=stride,
                    padding=padding,
                    input_h=in_h,
                    input_w=in_w,
                )
            )
        kernels = tuple(
            cur.read_array(f"K{n}", (s.out_channels, s.in_channels, s.kernel_h, s.kernel_w))
            for n, s in enumerate(specs, start=1)
        )
        C = cur.read_array("C", (o, specs[0].output_size))
        beta = cur.read_array("beta", (o,))
        cur.expect_end()
        return ConvCcpNetwork(specs=tuple(specs), kernels=kernels, C=C, beta=beta)
    raise MalformedFile(f"unknown kind: {' '.join(kind)}")


# --------------------------------------------------------------------------
# random generation


def generate_random_network(kind: str, dims, seed: int, scale: float):
    """Deterministic random network with weights i.i.d. uniform [-scale, scale].

    ``dims`` is ``(degree, input_dim, hidden_dim, output_dim)`` for the
    dense kinds, and ``(degree, ConvLayerSpec, output_dim)`` for
    ``ccp-conv`` (the layer geometry is repeated at every level).  Arrays
    are filled row-major in model-file order from one xoshiro256** stream,
    so equal seeds give bitwise-equal networks everywhere.
    """
    if scale < 0:
        raise ValueError("scale must be non-negative")
    rng = Xoshiro256StarStar(seed)
    if kind in ("ccp", "ncp"):
        degree, d, k, o = (int(v) for v in dims)
        if min(degree, d, k, o) <= 0:
            raise ValueError("all dimensions must be positive")
        W = tuple(rng.uniform(-scale, scale, (d, k)) for _ in range(degree))
        if kind == "ccp":
            C = rng.uniform(-scale, scale, (o, k))
            beta = rng.uniform(-scale, scale, (o,))
            return CcpNetwork(W=W, C=C, beta=beta)
        S = tuple(rng.uniform(-scale, scale, (k, k)) for _ in range(degree - 1))
        b = tuple(rng.uniform(-scale, scale, (k,)) for _ in range(degree - 1))
        C = rng.uniform(-scale, scale, (o, k))
        beta = rng.uniform(-scale, scale, (o,))
        return NcpNetwork(W=W, S=S, b=b, C=C, beta=beta)
    if kind == "ccp-conv":
        degree, spec, o = dims
        degree, o = int(degree), int(o)
        if degree <= 0 or o <= 0:
            raise ValueError("degree and output_dim must be positive")
        if not isinstance(spec, ConvLayerSpec):
            raise ValueError("ccp-conv dims must carry a ConvLayerSpec")
        shape = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
        kernels = tuple(rng.uniform(-scale, scale, shape) for _ in range(degree))
        C = rng.uniform(-scale, scale, (o, spec.output_size))
        beta = rng.uniform(-scale, scale, (o,))
        return ConvCcpNetwork(specs=(spec,) * degree, kernels=kernels, C=C, beta=beta)
    raise ValueError(f"unknown network kind: {kind}")


# --------------------------------------------------------------------------
# datasets


@dataclass(frozen=True)
class Dataset:
    """Labeled points with features in the unit hypercube."""

    labels: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        features = np.asarray(self.features, dtype=np.float64)
        if labels.ndim != 1 or features.ndim != 2:
            raise ValueError("labels must be 1-D and features 2-D")
        if labels.shape[0] != features.shape[0]:
            raise ValueError("labels and features disagree on row count")
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        if features.size and (features.min() < 0.0 or features.max() > 1.0):
            raise ValueError("features must lie in [0, 1]")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "features", features)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0


def load_dataset_csv(path) -> Dataset:
    """Rows of ``label,f1,...,fd``; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise ValueError(f"{path}: empty dataset")
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]
    if not rows:
        raise ValueError(f"{path}: header but no data rows")
    width = len(rows[0])
    labels = []
    features = []
    for i, row in enumerate(rows):
        if len(row) != width:
            raise ValueError(f"{path}: row {i} has {len(row)} fields, expected {width}")
        try:
            labels.append(int(row[0]))
            features.append([float(v) for v in row[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from exc
    return Dataset(labels=np.array(labels), features=np.array(features))


def save_dataset_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{i + 1}" for i in range(dataset.dim)])
        for label, feat in zip(dataset.labels, dataset.features):
            writer.writerow([int(label)] + [f"{v:.17g}" for v in feat])


def synthetic_blobs(n_per_class: int, centers, spread: float, seed: int) -> Dataset:
    """Gaussian blobs clipped into the unit box, one blob per class."""
    centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    rng = np.random.default_rng(seed)
    feats = []
    labels = []
    for c, center in enumerate(centers):
        pts = center + spread * rng.standard_normal((n_per_class, centers.shape[1]))
        feats.append(np.clip(pts, 0.0, 1.0))
        labels.append(np.full(n_per_class, c))
    return Dataset(labels=np.concatenate(labels), features=np.vstack(feats))


def synthetic_rings(n: int, d: int, band: float, seed: int) -> Dataset:
    """Radial two-class task: label 1 outside a centered sphere, 0 inside.

    Points within ``band`` of the decision sphere are rejected, so the
    classes are separated by a margin and small-radius robustness is
    attainable.  The boundary being genuinely quadratic makes this the toy
    workload where interval propagation is visibly outclassed.
    """
    rng = np.random.default_rng(seed)
    radius = 0.25 * np.sqrt(d)  # near-median distance from the box center
    feats = []
    labels = []
    while len(feats) < n:
        z = rng.uniform(0.0, 1.0, d)
        dist = float(np.linalg.norm(z - 0.5))
        if abs(dist - radius) < band:
            continue
        feats.append(z)
        labels.append(int(dist > radius))
    return Dataset(labels=np.array(labels), features=np.array(feats))


# --------------------------------------------------------------------------
# toy trainer


def _batch_states(net: CcpNetwork, Z: np.ndarray):
    XH = [Z @ Wn for Wn in net.W]
    X = [XH[0]]
    for n in range(1, net.degree):
        X.append((XH[n] + 1.0) * X[-1])
    return XH, X


def parameter_gradients(net: CcpNetwork, dataset: Dataset):
    """Softmax cross-entropy loss and its gradients w.r.t. all parameters.

    Backward pass mirrors the forward recursion: with ``up`` the running
    gradient w.r.t. the level-``n`` state, the product rule gives
    ``dL/dxhat_n = up * x_{n-1}`` (hence ``dW_n = Z.T @ (up * x_{n-1})``)
    and ``dL/dx_{n-1} = up * (xhat_n + 1)``.

    Returns ``(loss, dW, dC, dbeta)`` with batch-mean scaling.
    """
    Z = dataset.features
    m = len(dataset)
    if m == 0:
        raise ValueError("empty dataset")
    XH, X = _batch_states(net, Z)
    logits = X[-1] @ net.C.T + net.beta
    shifted = logits - logits.max(axis=1, keepdims=True)
    expv = np.exp(shifted)
    P = expv / expv.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):  # p=0 underflow surfaces as inf loss
        loss = float(-np.mean(np.log(P[np.arange(m), dataset.labels])))
    Y = np.zeros_like(P)
    Y[np.arange(m), dataset.labels] = 1.0
    G = (P - Y) / m
    dC = G.T @ X[-1]
    dbeta = G.sum(axis=0)
    up = G @ net.C
    dW: list[np.ndarray | None] = [None] * net.degree
    for n in range(net.degree - 1, 0, -1):
        dW[n] = Z.T @ (up * X[n - 1])
        up = up * (XH[n] + 1.0)
    dW[0] = Z.T @ up
    return loss, dW, dC, dbeta


def dataset_loss(net: CcpNetwork, dataset: Dataset) -> float:
    return parameter_gradients(net, dataset)[0]


def toy_train(dataset: Dataset, dims, epochs: int, lr: float, seed: int) -> CcpNetwork:
    """Full-batch gradient descent on softmax cross-entropy.

    ``dims = (degree, hidden_dim)`` with degree 2 or 3; input and output
    sizes come from the dataset.  Raises ``TrainingDiverged`` the moment
    the loss stops being finite.
    """
    degree, k = (int(v) for v in dims)
    if degree not in (2, 3):
        raise ValueError("toy trainer supports degree 2 or 3 only")
    if dataset.n_classes < 2:
        raise ValueError("need at least two classes")
    if epochs < 0 or lr < 0:
        raise ValueError("epochs and lr must be non-negative")
    net = generate_random_network(
        "ccp", (degree, dataset.dim, k, dataset.n_classes), seed, scale=0.1
    )
    for epoch in range(epochs):
        loss, dW, dC, dbeta = parameter_gradients(net, dataset)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss became non-finite at epoch {epoch}")
        net = CcpNetwork(
            W=tuple(Wn - lr * dWn for Wn, dWn in zip(net.W, dW)),
            C=net.C - lr * dC,
            beta=net.beta - lr * dbeta,
        )
    return net


def training_accuracy(net: CcpNetwork, dataset: Dataset) -> float:
    _, X = _batch_states(net, dataset.features)
    logits = X[-1] @ net.C.T + net.beta
    return float(np.mean(np.argmax(logits, axis=1) == dataset.labels))
