"""Empirical check of the anisotropic trace inequality on Sigma.

For a field B with |B_d| >= theta on the strip 0 <= x_d <= iota,

    |f|_0^2 <= C (||B . grad f||_0 ||f||_0 + ||f||_0^2),

with C depending only on the C^1 norm of B, theta and iota. The verifier
measures the ratio of the two sides over an ensemble of band-limited
fields, and also checks the transport identity behind the bound by
integrating the horizontal characteristics of B / B_d with RK4.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import TransversalityLost
from .grid import TWO_PI, SlabGrid, gradient, integrate

log = logging.getLogger(__name__)

FieldFn = Callable[..., tuple]


@dataclass(frozen=True)
class BandLimitedField:
    """f(x) = sum_k a_k cos(k . x' + phi_k) (c0_k + c1_k x_d + c2_k x_d^2).

    Attributes:
        wavevectors: Integer tangential wavevectors, shape (K, d-1).
        amps, phases: Per-mode amplitude and phase.
        poly: Normal polynomial coefficients, shape (K, 3).
    """

    wavevectors: np.ndarray
    amps: np.ndarray
    phases: np.ndarray
    poly: np.ndarray

    @property
    def dim(self) -> int:
        return self.wavevectors.shape[1] + 1

    def _parts(self, xs):
        xt, z = xs[:-1], xs[-1]
        for k, a, ph, c in zip(self.wavevectors, self.amps, self.phases, self.poly):
            arg = sum(ki * xi for ki, xi in zip(k, xt)) + ph
            yield k, a, arg, c[0] + c[1] * z + c[2] * z ** 2, c[1] + 2 * c[2] * z

    def __call__(self, *xs) -> np.ndarray:
        return sum(a * np.cos(arg) * p for _, a, arg, p, _ in self._parts(xs))

    def grad(self, *xs) -> list[np.ndarray]:
        out = [0.0] * self.dim
        for k, a, arg, p, dp in self._parts(xs):
            for i, ki in enumerate(k):
                out[i] = out[i] - a * ki * np.sin(arg) * p
            out[-1] = out[-1] + a * np.cos(arg) * dp
        return out


def constant_field(dim: int, value: float = 1.0) -> BandLimitedField:
    return BandLimitedField(np.zeros((1, dim - 1), dtype=int), np.array([value]), np.zeros(1),
                            np.array([[1.0, 0.0, 0.0]]))


def random_band_limited(rng: np.random.Generator, dim: int, kmax: int = 3, modes: int = 6) -> BandLimitedField:
    """Random field with |k_i| <= kmax and a random quadratic profile in x_d."""
    k = rng.integers(-kmax, kmax + 1, size=(modes, dim - 1))
    return BandLimitedField(k, rng.normal(size=modes), rng.uniform(0, TWO_PI, size=modes),
                            rng.normal(size=(modes, 3)))


def field_ensemble(seed: int, count: int, dim: int = 3, kmax: int = 3) -> list[BandLimitedField]:
    rng = np.random.default_rng(seed)
    return [random_band_limited(rng, dim, kmax) for _ in range(count)]


def _rk4_trajectories(Bbar: FieldFn, starts: list[np.ndarray], s_end: float, steps: int, dim: int):
    """Integrate dY/ds = B_h(Y, s) / B_d(Y, s) from s = 0; yields (s, Y) at every step."""
    def rate(y, s):
        vals = Bbar(*y, s)
        return [vals[i] / vals[-1] for i in range(dim - 1)]

    y = [np.array(c, dtype=float) for c in starts]
    ds = s_end / steps
    yield 0.0, y
    for n in range(steps):
        s = n * ds
        k1 = rate(y, s)
        k2 = rate([yi + 0.5 * ds * ki for yi, ki in zip(y, k1)], s + 0.5 * ds)
        k3 = rate([yi + 0.5 * ds * ki for yi, ki in zip(y, k2)], s + 0.5 * ds)
        k4 = rate([yi + ds * ki for yi, ki in zip(y, k3)], s + ds)
        y = [yi + ds / 6 * (a + 2 * b + 2 * c + d) for yi, a, b, c, d in zip(y, k1, k2, k3, k4)]
        yield s + ds, y


@dataclass
class TraceMember:
    """Both sides of the inequality for one field."""

    trace_sq: float
    l2_sq: float
    directional_l2: float
    ratio: float
    bound: float
    transport_residual: float

    @property
    def holds(self) -> bool:
        return self.trace_sq <= self.bound * (1 + 1e-12)


@dataclass
class TraceEstimate:
    """Ensemble summary.

    Attributes:
        max_ratio: Empirical constant max |f|^2 / (||B.grad f|| ||f|| + ||f||^2).
        jacobian_bound: exp(||div_h (B_h / B_d)||_inf iota) over the strip.
        members: Per-field details.
    """

    max_ratio: float
    jacobian_bound: float
    members: list

    @property
    def all_hold(self) -> bool:
        return all(m.holds for m in self.members)

    @property
    def max_transport_residual(self) -> float:
        return max(m.transport_residual for m in self.members)


def _strip_mask(grid: SlabGrid, iota: float) -> np.ndarray:
    z = grid.coords[-1]
    return (z >= -1e-14) & (z <= iota + 1e-14)


def _check_transversal(grid: SlabGrid, Bn: np.ndarray, theta: float, iota: float) -> float:
    strip = _strip_mask(grid, iota)
    low = float(np.abs(Bn[strip]).min())
    if low < theta:
        raise TransversalityLost(f"|B_d| = {low:.3e} below theta = {theta:.3e} on the strip")
    return low


def _jacobian_bound(grid: SlabGrid, Bbar: FieldFn, iota: float) -> float:
    vals = [np.broadcast_to(np.asarray(c, dtype=float), grid.scalar_shape) for c in Bbar(*grid.coords)]
    div = np.zeros(grid.scalar_shape)
    for i in range(grid.dim - 1):
        div += gradient(grid, vals[i] / vals[-1])[:, i]
    return float(np.exp(np.abs(div[_strip_mask(grid, iota)]).max() * iota))


def _measure(grid: SlabGrid, Bbar: FieldFn, f: BandLimitedField, theta: float, iota: float,
             cjac: float, steps: int) -> TraceMember:
    nt = grid.dim - 1
    fv = f(*grid.coords)
    Bv = [np.broadcast_to(np.asarray(c, dtype=float), grid.scalar_shape) for c in Bbar(*grid.coords)]
    df = gradient(grid, fv)
    Bdf = sum(Bv[i] * df[:, i] for i in range(grid.dim))
    l2_sq = float(integrate(grid, fv ** 2))
    dir_l2 = float(np.sqrt(integrate(grid, Bdf ** 2)))
    cell = grid.h_t ** nt
    trace_sq = float((fv[1, ..., 0] ** 2).sum() * cell)
    denom = dir_l2 * np.sqrt(l2_sq) + l2_sq
    ratio = trace_sq / denom if denom > 0 else (0.0 if trace_sq == 0 else np.inf)
    bound = cjac / iota * l2_sq + 4 * cjac / theta * dir_l2 * np.sqrt(l2_sq)

    # transport identity along the characteristics, evaluated at y_d = iota
    xs = np.meshgrid(*([grid.x_t] * nt), indexing="ij")
    integral, prev = 0.0, None
    ds = iota / steps
    for s, y in _rk4_trajectories(Bbar, xs, iota, steps, grid.dim):
        Bs = Bbar(*y, s)
        g = f.grad(*y, np.full_like(y[0], s))
        val = sum(Bs[i] / Bs[-1] * g[i] for i in range(grid.dim)) * f(*y, np.full_like(y[0], s))
        cur = float(val.sum() * cell)
        if prev is not None:
            integral += 0.5 * ds * (prev + cur)
        prev = cur
        last = y
    end = float((f(*last, np.full_like(last[0], iota)) ** 2).sum() * cell)
    residual = abs(trace_sq - (end - 2 * integral)) / max(trace_sq, 1e-300) if trace_sq > 0 else abs(end - 2 * integral)
    return TraceMember(trace_sq, l2_sq, dir_l2, float(ratio), float(bound), float(residual))


def verify_trace_inequality(Bbar: FieldFn, f_ensemble: Sequence[BandLimitedField], theta: float,
                            iota: float, n: int = 32, steps: int | None = None,
                            workers: int = 1) -> TraceEstimate:
    """Measure the trace-inequality ratio over an ensemble.

    Args:
        Bbar: Callable (x_1, ..., x_d) -> tuple of d component arrays.
        f_ensemble: Band-limited fields, all of the same dimension.
        theta: Lower bound of |B_d| on the strip.
        iota: Strip thickness.
        n: Tangential points per direction; the normal spacing matches.
        steps: RK4 steps in s for the transport identity (default 4 n).
        workers: Thread count for the ensemble.

    Raises:
        TransversalityLost: if |B_d| < theta somewhere on the strip.
    """
    if not f_ensemble:
        raise ValueError("empty ensemble")
    dim = f_ensemble[0].dim
    grid = SlabGrid(dim=dim, n_tangential=n, n_normal=max(6, n // 2))
    Bn = np.broadcast_to(np.asarray(Bbar(*grid.coords)[-1], dtype=float), grid.scalar_shape)
    _check_transversal(grid, Bn, theta, iota)
    cjac = _jacobian_bound(grid, Bbar, iota)
    steps = 4 * n if steps is None else steps

    def one(f):
        return _measure(grid, Bbar, f, theta, iota, cjac, steps)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            members = list(pool.map(one, f_ensemble))
    else:
        members = [one(f) for f in f_ensemble]
    est = TraceEstimate(max_ratio=max(m.ratio for m in members), jacobian_bound=cjac, members=members)
    log.info("trace ratio max %.4f over %d fields (C_jac %.3f)", est.max_ratio, len(members), cjac)
    return est


def standard_fields(dim: int = 3) -> dict[str, FieldFn]:
    """Three transversal background fields used by the acceptance check."""
    def vertical(*x):
        return tuple([0.0] * (dim - 1) + [1.0])

    def sheared(*x):
        return tuple([0.3 * np.sin(x[0])] + [0.0] * (dim - 2) + [1.0])

    def tilted(*x):
        return tuple([0.5 + 0.2 * np.cos(x[-1])] + [0.1 * np.sin(x[0])] * (dim - 2)
                     + [1.0 + 0.2 * np.cos(x[0])])

    return {"vertical": vertical, "sheared": sheared, "tilted": tilted}
