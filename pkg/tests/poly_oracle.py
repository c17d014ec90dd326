"""Symbolic monomial-expansion oracle for small product networks.

A polynomial in d variables is a dict mapping exponent tuples to
coefficients, e.g. ``{(2, 0): 1.0, (0, 1): -3.0}`` for ``z0^2 - 3 z1``.
Products are dict convolutions and derivatives are formal, so evaluation,
gradients and Hessians come out exact (up to float rounding) without ever
touching the production recursions.  Only sensible for d <= 3 and low
degree; term counts explode beyond that.
"""

import itertools

import numpy as np

Poly = dict


def zero(d: int) -> Poly:
    return {}


def const(c: float, d: int) -> Poly:
    if c == 0.0:
        return {}
    return {(0,) * d: float(c)}


def variable(i: int, d: int) -> Poly:
    expo = [0] * d
    expo[i] = 1
    return {tuple(expo): 1.0}


def linear(w, d: int) -> Poly:
    """w . z as a polynomial (w is a length-d coefficient vector)."""
    p: Poly = {}
    for i, wi in enumerate(w):
        if wi != 0.0:
            expo = [0] * d
            expo[i] = 1
            p[tuple(expo)] = float(wi)
    return p


def padd(p: Poly, q: Poly) -> Poly:
    out = dict(p)
    for expo, c in q.items():
        out[expo] = out.get(expo, 0.0) + c
    return {e: c for e, c in out.items() if c != 0.0}


def pscale(p: Poly, c: float) -> Poly:
    if c == 0.0:
        return {}
    return {e: c * v for e, v in p.items()}


def pmul(p: Poly, q: Poly) -> Poly:
    out: Poly = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            key = tuple(a + b for a, b in zip(e1, e2))
            out[key] = out.get(key, 0.0) + c1 * c2
    return {e: c for e, c in out.items() if c != 0.0}


def peval(p: Poly, z) -> float:
    z = np.asarray(z, dtype=np.float64)
    total = 0.0
    for expo, c in p.items():
        term = c
        for zi, ei in zip(z, expo):
            term *= zi**ei
        total += term
    return total


def pdiff(p: Poly, i: int) -> Poly:
    out: Poly = {}
    for expo, c in p.items():
        if expo[i] == 0:
            continue
        new = list(expo)
        new[i] -= 1
        out[tuple(new)] = out.get(tuple(new), 0.0) + c * expo[i]
    return out


def pgrad(p: Poly, z, d: int) -> np.ndarray:
    return np.array([peval(pdiff(p, i), z) for i in range(d)])


def phess(p: Poly, z, d: int) -> np.ndarray:
    H = np.zeros((d, d))
    for i, j in itertools.product(range(d), range(d)):
        H[i, j] = peval(pdiff(pdiff(p, i), j), z)
    return H


def ccp_output_polys(net) -> list:
    """One polynomial per network output for the skip-product recursion."""
    d = net.input_dim
    x = [linear(net.W[0][:, i], d) for i in range(net.hidden)]
    for n in range(1, net.degree):
        xhat = [linear(net.W[n][:, i], d) for i in range(net.hidden)]
        x = [pmul(padd(xhat[i], const(1.0, d)), x[i]) for i in range(net.hidden)]
    outs = []
    for c in range(net.output):
        p = const(float(net.beta[c]), d)
        for i in range(net.hidden):
            p = padd(p, pscale(x[i], float(net.C[c, i])))
        outs.append(p)
    return outs


def ncp_output_polys(net) -> list:
    """Same for the nested factorization: x_n = (W_n' z) * (S_n' x_{n-1} + b_n)."""
    d = net.input_dim
    x = [linear(net.W[0][:, i], d) for i in range(net.hidden)]
    for n in range(1, net.degree):
        xhat = [linear(net.W[n][:, i], d) for i in range(net.hidden)]
        S = net.S[n - 1]
        b = net.b[n - 1]
        mixed = []
        for i in range(net.hidden):
            p = const(float(b[i]), d)
            for j in range(net.hidden):
                p = padd(p, pscale(x[j], float(S[j, i])))
            mixed.append(p)
        x = [pmul(xhat[i], mixed[i]) for i in range(net.hidden)]
    outs = []
    for c in range(net.output):
        p = const(float(net.beta[c]), d)
        for i in range(net.hidden):
            p = padd(p, pscale(x[i], float(net.C[c, i])))
        outs.append(p)
    return outs


def output_polys(net) -> list:
    if hasattr(net, "S"):
        return ncp_output_polys(net)
    return ccp_output_polys(net)


def margin_poly(obj) -> Poly:
    outs = output_polys(obj.network)
    return padd(outs[obj.t], pscale(outs[obj.gamma], -1.0))
