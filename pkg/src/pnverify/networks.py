"""Exact evaluation of polynomial networks: outputs, input gradients, Hessians.

A polynomial network computes a polynomial of its input through
Hadamard-product recursions (no activation functions).  Two factorizations
are supported, both ending in ``f(z) = C @ x_N + beta``:

* ``CcpNetwork`` -- product with skip connections at every level::

      x_1 = W_1.T @ z
      x_n = (W_n.T @ z) * x_{n-1} + x_{n-1}

* ``NcpNetwork`` -- nested affine maps inside each product::

      x_1 = W_1.T @ z
      x_n = (W_n.T @ z) * (S_n.T @ x_{n-1} + b_n)

All derivatives are closed-form recursions over the same structure.  The
dense Hessian is exposed for small-``d`` oracle/test use only; production
bounding code never materializes a ``d x d`` matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "CcpNetwork",
    "NcpNetwork",
    "ConvCcpNetwork",
    "ConvLayerSpec",
    "Objective",
    "ccp_forward",
    "ncp_forward",
    "forward",
    "network_jacobian",
    "objective_value",
    "objective_gradient",
    "objective_hessian_dense",
    "conv_to_dense",
    "lower_conv_network",
]


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def _as_vector(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class CcpNetwork:
    """Product network with per-level skip terms.

    ``W`` holds the degree-many ``d x k`` weight matrices, ``C`` is the
    ``o x k`` output map and ``beta`` the output bias.
    """

    W: tuple[np.ndarray, ...]
    C: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if len(self.W) == 0:
            raise ValueError("network needs at least one weight matrix")
        W = tuple(_as_matrix(Wn, f"W[{n}]") for n, Wn in enumerate(self.W))
        C = _as_matrix(self.C, "C")
        beta = _as_vector(self.beta, "beta")
        d, k = W[0].shape
        for n, Wn in enumerate(W):
            if Wn.shape != (d, k):
                raise ValueError(f"W[{n}] has shape {Wn.shape}, expected {(d, k)}")
        if C.shape[1] != k:
            raise ValueError(f"C has {C.shape[1]} columns, expected {k}")
        if beta.shape[0] != C.shape[0]:
            raise ValueError("beta length does not match C rows")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "beta", beta)

    @property
    def degree(self) -> int:
        return len(self.W)

    @property
    def input_dim(self) -> int:
        return self.W[0].shape[0]

    @property
    def hidden(self) -> int:
        return self.W[0].shape[1]

    @property
    def output(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class NcpNetwork:
    """Nested-affine product network.

    Levels 2..N mix the previous state through ``S_n.T @ x + b_n`` before the
    Hadamard product; ``S`` and ``b`` therefore have ``degree - 1`` entries.
    """

    W: tuple[np.ndarray, ...]
    S: tuple[np.ndarray, ...]
    b: tuple[np.ndarray, ...]
    C: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if len(self.W) == 0:
            raise ValueError("network needs at least one weight matrix")
        W = tuple(_as_matrix(Wn, f"W[{n}]") for n, Wn in enumerate(self.W))
        S = tuple(_as_matrix(Sn, f"S[{n}]") for n, Sn in enumerate(self.S))
        b = tuple(_as_vector(bn, f"b[{n}]") for n, bn in enumerate(self.b))
        C = _as_matrix(self.C, "C")
        beta = _as_vector(self.beta, "beta")
        d, k = W[0].shape
        for n, Wn in enumerate(W):
            if Wn.shape != (d, k):
                raise ValueError(f"W[{n}] has shape {Wn.shape}, expected {(d, k)}")
        if len(S) != len(W) - 1 or len(b) != len(W) - 1:
            raise ValueError("S and b must have degree-1 entries each")
        for n, Sn in enumerate(S):
            if Sn.shape != (k, k):
                raise ValueError(f"S[{n}] has shape {Sn.shape}, expected {(k, k)}")
        for n, bn in enumerate(b):
            if bn.shape != (k,):
                raise ValueError(f"b[{n}] has shape {bn.shape}, expected {(k,)}")
        if C.shape[1] != k:
            raise ValueError(f"C has {C.shape[1]} columns, expected {k}")
        if beta.shape[0] != C.shape[0]:
            raise ValueError("beta length does not match C rows")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "beta", beta)

    @property
    def degree(self) -> int:
        return len(self.W)

    @property
    def input_dim(self) -> int:
        return self.W[0].shape[0]

    @property
    def hidden(self) -> int:
        return self.W[0].shape[1]

    @property
    def output(self) -> int:
        return self.C.shape[0]


Network = CcpNetwork | NcpNetwork


@dataclass(frozen=True)
class Objective:
    """Margin g(z) = f(z)[t] - f(z)[gamma] for a (true, adversary) class pair."""

    network: Network
    t: int
    gamma: int

    def __post_init__(self):
        o = self.network.output
        if not (0 <= self.t < o and 0 <= self.gamma < o):
            raise ValueError(f"class indices must lie in [0, {o})")
        if self.t == self.gamma:
            raise ValueError("true and adversarial class must differ")

    @property
    def c_row(self) -> np.ndarray:
        """Output-layer row C[t] - C[gamma] that weights the hidden state."""
        return self.network.C[self.t] - self.network.C[self.gamma]


def _check_input(net: Network, z) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (net.input_dim,):
        raise ValueError(f"input has shape {z.shape}, expected ({net.input_dim},)")
    if not np.all(np.isfinite(z)):
        raise ValueError("input contains non-finite entries")
    return z


def hidden_states(net: Network, z) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray] | None]:
    """Per-level states (xhat, x, inner) of the recursion at ``z``.

    ``xhat[n] = W_{n+1}.T @ z`` and ``x[n]`` is the level-``n+1`` hidden
    state; ``inner`` holds the affine values ``S.T @ x + b`` for the nested
    factorization (``None`` otherwise).  Used by derivative recursions and
    the toy trainer's backward pass.
    """
    z = _check_input(net, z)
    xhat = [Wn.T @ z for Wn in net.W]
    x = [xhat[0]]
    inner: list[np.ndarray] | None
    if isinstance(net, CcpNetwork):
        inner = None
        for n in range(1, net.degree):
            x.append(xhat[n] * x[-1] + x[-1])
    else:
        inner = []
        for n in range(1, net.degree):
            yn = net.S[n - 1].T @ x[-1] + net.b[n - 1]
            inner.append(yn)
            x.append(xhat[n] * yn)
    return xhat, x, inner


def ccp_forward(net: CcpNetwork, z) -> np.ndarray:
    """Evaluate ``f(z) = C @ x_N + beta`` for the skip-product recursion."""
    if not isinstance(net, CcpNetwork):
        raise TypeError("ccp_forward expects a CcpNetwork")
    _, x, _ = hidden_states(net, z)
    return net.C @ x[-1] + net.beta


def ncp_forward(net: NcpNetwork, z) -> np.ndarray:
    """Evaluate ``f(z)`` for the nested-affine recursion."""
    if not isinstance(net, NcpNetwork):
        raise TypeError("ncp_forward expects an NcpNetwork")
    _, x, _ = hidden_states(net, z)
    return net.C @ x[-1] + net.beta


def forward(net: Network, z) -> np.ndarray:
    if isinstance(net, CcpNetwork):
        return ccp_forward(net, z)
    if isinstance(net, NcpNetwork):
        return ncp_forward(net, z)
    raise TypeError(f"unsupported network type {type(net).__name__}")


def network_jacobian(net: Network, z) -> np.ndarray:
    """The ``k x d`` Jacobian of the last hidden state ``x_N`` w.r.t. ``z``.

    Row ``i`` follows the product rule through the recursion:

    * skip-product: ``J_n[i] = w_i * x_{n-1}[i] + (w_i.T z + 1) * J_{n-1}[i]``
    * nested:       ``J_n[i] = w_i * inner_n[i] + (w_i.T z) * (S_n.T J_{n-1})[i]``

    with base case ``J_1 = W_1.T``.
    """
    z = _check_input(net, z)
    xhat, x, inner = hidden_states(net, z)
    J = net.W[0].T.copy()
    for n in range(1, net.degree):
        WnT = net.W[n].T
        if isinstance(net, CcpNetwork):
            J = WnT * x[n - 1][:, None] + (xhat[n] + 1.0)[:, None] * J
        else:
            assert inner is not None
            J = WnT * inner[n - 1][:, None] + xhat[n][:, None] * (net.S[n - 1].T @ J)
    return J


def objective_value(obj: Objective, z) -> float:
    out = forward(obj.network, z)
    return float(out[obj.t] - out[obj.gamma])


def objective_gradient(obj: Objective, z) -> np.ndarray:
    """Exact gradient of the margin: ``(C[t] - C[gamma]) @ J(x_N)``."""
    return obj.c_row @ network_jacobian(obj.network, z)


def objective_hessian_dense(obj: Objective, z) -> np.ndarray:
    """Exact ``d x d`` Hessian of the margin (test-oracle use; symmetric).

    Maintains one Hessian per hidden unit.  Each level adds the symmetric
    rank-2 part ``w u.T + u w.T`` (with ``u`` the relevant previous-level
    gradient row) and rescales the carried Hessians; level 1 contributes
    nothing because ``x_1`` is linear in ``z``.
    """
    net = obj.network
    z = _check_input(net, z)
    d, k = net.input_dim, net.hidden
    xhat, x, inner = hidden_states(net, z)
    J = net.W[0].T.copy()
    H = np.zeros((k, d, d))
    for n in range(1, net.degree):
        WnT = net.W[n].T
        if isinstance(net, CcpNetwork):
            cross = np.einsum("ia,ib->iab", WnT, J)
            H = cross + cross.transpose(0, 2, 1) + (xhat[n] + 1.0)[:, None, None] * H
            J = WnT * x[n - 1][:, None] + (xhat[n] + 1.0)[:, None] * J
        else:
            assert inner is not None
            Sn = net.S[n - 1]
            SJ = Sn.T @ J
            cross = np.einsum("ia,ib->iab", WnT, SJ)
            Hmix = np.einsum("ji,jab->iab", Sn, H)
            H = cross + cross.transpose(0, 2, 1) + xhat[n][:, None, None] * Hmix
            J = WnT * inner[n - 1][:, None] + xhat[n][:, None] * SJ
    return np.einsum("i,iab->ab", obj.c_row, H)


@dataclass(frozen=True)
class ConvLayerSpec:
    """Geometry of one 2-D convolution (square stride/padding, no bias)."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int
    padding: int
    input_h: int
    input_w: int

    def __post_init__(self):
        for name in ("in_channels", "out_channels", "kernel_h", "kernel_w", "stride", "input_h", "input_w"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.padding < 0:
            raise ValueError("padding must be non-negative")
        if self.output_h <= 0 or self.output_w <= 0:
            raise ValueError("convolution output is empty for this geometry")

    @property
    def output_h(self) -> int:
        return (self.input_h + 2 * self.padding - self.kernel_h) // self.stride + 1

    @property
    def output_w(self) -> int:
        return (self.input_w + 2 * self.padding - self.kernel_w) // self.stride + 1

    @property
    def input_size(self) -> int:
        return self.in_channels * self.input_h * self.input_w

    @property
    def output_size(self) -> int:
        return self.out_channels * self.output_h * self.output_w


def conv_to_dense(spec: ConvLayerSpec, kernel) -> np.ndarray:
    """Lower a convolution to the dense matrix acting on the flattened image.

    Returns ``M`` with ``M @ flatten(image) == flatten(conv(image))`` for
    channel-major row-major flattening.  Out-of-image taps (padding) simply
    contribute no entry.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    expected = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
    if kernel.shape != expected:
        raise ValueError(f"kernel has shape {kernel.shape}, expected {expected}")
    M = np.zeros((spec.output_size, spec.input_size))
    for oc in range(spec.out_channels):
        for oy in range(spec.output_h):
            for ox in range(spec.output_w):
                row = (oc * spec.output_h + oy) * spec.output_w + ox
                for ic in range(spec.in_channels):
                    for ky in range(spec.kernel_h):
                        iy = oy * spec.stride - spec.padding + ky
                        if iy < 0 or iy >= spec.input_h:
                            continue
                        for kx in range(spec.kernel_w):
                            ix = ox * spec.stride - spec.padding + kx
                            if ix < 0 or ix >= spec.input_w:
                                continue
                            col = (ic * spec.input_h + iy) * spec.input_w + ix
                            M[row, col] = kernel[oc, ic, ky, kx]
    return M


@dataclass(frozen=True)
class ConvCcpNetwork:
    """Skip-product network whose per-level maps are convolutions of the input.

    Every level convolves the same input image, so all layer geometries must
    share the input size and produce one common hidden size.
    """

    specs: tuple[ConvLayerSpec, ...]
    kernels: tuple[np.ndarray, ...]
    C: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if len(self.specs) == 0 or len(self.specs) != len(self.kernels):
            raise ValueError("need one kernel per layer spec")
        kernels = tuple(np.asarray(k, dtype=np.float64) for k in self.kernels)
        C = _as_matrix(self.C, "C")
        beta = _as_vector(self.beta, "beta")
        first = self.specs[0]
        for n, (spec, kern) in enumerate(zip(self.specs, kernels)):
            expected = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
            if kern.shape != expected:
                raise ValueError(f"kernel[{n}] has shape {kern.shape}, expected {expected}")
            if not np.all(np.isfinite(kern)):
                raise ValueError(f"kernel[{n}] contains non-finite entries")
            if spec.input_size != first.input_size:
                raise ValueError("all layers must consume the same input size")
            if spec.output_size != first.output_size:
                raise ValueError("all layers must produce the same hidden size")
        if C.shape[1] != first.output_size:
            raise ValueError(f"C has {C.shape[1]} columns, expected {first.output_size}")
        if beta.shape[0] != C.shape[0]:
            raise ValueError("beta length does not match C rows")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "beta", beta)

    @property
    def degree(self) -> int:
        return len(self.specs)

    @property
    def input_dim(self) -> int:
        return self.specs[0].input_size

    @property
    def hidden(self) -> int:
        return self.specs[0].output_size

    @property
    def output(self) -> int:
        return self.C.shape[0]


def lower_conv_network(net: ConvCcpNetwork) -> CcpNetwork:
    """Replace every convolution by its dense equivalent (same function)."""
    W = tuple(conv_to_dense(spec, kern).T for spec, kern in zip(net.specs, net.kernels))
    return CcpNetwork(W=W, C=net.C, beta=net.beta)
