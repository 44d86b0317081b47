"""Truncated Taylor series in t with field-valued coefficients.

A series is a list ``[f_0, f_1, ..., f_K]`` of normalized coefficients,
``f_k = (d/dt)^k f(0) / k!``. Products are Cauchy products, so the chain
and product rules of repeated time differentiation are applied exactly
(in exact arithmetic) rather than by finite differences in t.
"""

from __future__ import annotations

from math import factorial
from typing import Callable, Sequence

import numpy as np

Series = list


def to_derivatives(coeffs: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [factorial(k) * c for k, c in enumerate(coeffs)]


def from_derivatives(derivs: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [d / factorial(k) for k, d in enumerate(derivs)]


def cauchy(a: Sequence, b: Sequence, op: Callable = np.multiply, order: int | None = None) -> Series:
    """Coefficients of the product series under the bilinear ``op``."""
    K = min(len(a), len(b)) - 1 if order is None else order
    out = []
    for k in range(K + 1):
        acc = op(a[0], b[k])
        for i in range(1, k + 1):
            acc = acc + op(a[i], b[k - i])
        out.append(acc)
    return out


def power(u: Sequence[np.ndarray], alpha: float, order: int | None = None) -> Series:
    """Series of u^alpha (u_0 must be nonzero).

    Uses the recurrence w_k = (1 / (k u_0)) sum_{i=1}^k ((alpha+1) i - k) u_i w_{k-i}.
    """
    K = len(u) - 1 if order is None else order
    w = [np.power(u[0], alpha)]
    for k in range(1, K + 1):
        acc = np.zeros_like(w[0])
        for i in range(1, k + 1):
            acc = acc + ((alpha + 1.0) * i - k) * u[i] * w[k - i]
        w.append(acc / (k * u[0]))
    return w


def scale(a: Sequence, c) -> Series:
    return [c * x for x in a]


def add(*terms: Sequence) -> Series:
    K = min(len(t) for t in terms)
    return [sum(t[k] for t in terms) for k in range(K)]


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pointwise matrix product, matrix axes at 1 and 2."""
    return np.einsum("pij...,pjk...->pik...", a, b)


def matvec(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("pij...,pj...->pi...", a, u)


def vdot(u: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("pi...,pi...->p...", u, w)


def inverse(F: Sequence[np.ndarray], F0_inv: np.ndarray, order: int | None = None) -> Series:
    """Series of F^{-1} given F_0^{-1}: G_k = -G_0 sum_{i>=1} F_i G_{k-i}."""
    K = len(F) - 1 if order is None else order
    G = [F0_inv]
    for k in range(1, K + 1):
        acc = matmul(F[1], G[k - 1])
        for i in range(2, k + 1):
            acc = acc + matmul(F[i], G[k - i])
        G.append(-matmul(F0_inv, acc))
    return G


def evaluate(coeffs: Sequence[np.ndarray], t: float, deriv: int = 0) -> np.ndarray:
    """Value (or time derivative) of the polynomial sum_k c_k t^k at t."""
    out = np.zeros_like(coeffs[0])
    for k in range(deriv, len(coeffs)):
        fac = factorial(k) / factorial(k - deriv)
        out = out + fac * coeffs[k] * t ** (k - deriv)
    return out
