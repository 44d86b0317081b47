"""Algebraic identity suites on ensembles of random smooth states.

Two classes of identity are checked:

* round-off class: both sides are built from the same discrete
  derivatives, so they must agree to a small multiple of machine
  precision (relative residual below ``ROUNDOFF_TOL``);
* derivative class: agreement needs the discrete product rule, so the
  residual only vanishes under refinement. These report the observed
  order over a ladder of resolutions, fitted on the worst state per level.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .cases import manufactured
from .diagnostics import commutator_check
from .geometry import build_geometry
from .grid import Phase, SlabGrid, interface_trace
from .initial_data import boundary_matrix, boundary_matrix_det

log = logging.getLogger(__name__)

ROUNDOFF_TOL = 1e-9
MIN_ORDER = 3.0


def _rel(res: np.ndarray, scale: np.ndarray) -> float:
    return float(np.abs(res).max() / max(float(np.abs(scale).max()), 1e-300))


def fitted_order(levels, errors) -> float:
    """Least-squares slope of -log(error) against log(n)."""
    x = np.log(np.asarray(levels, dtype=float))
    y = np.log(np.maximum(np.asarray(errors, dtype=float), 1e-300))
    return float(-np.polyfit(x, y, 1)[0])


@dataclass
class SuiteResult:
    """Outcome of one identity suite.

    Attributes:
        name: Suite name.
        kind: ``"roundoff"`` or ``"derivative"``.
        count: Number of random states.
        worst: Worst relative residual (round-off) or worst per level.
        order: Fitted order for derivative-class suites.
        seconds: Wall time.
    """

    name: str
    kind: str
    count: int
    worst: float | list
    order: float | None = None
    levels: tuple = ()
    seconds: float = 0.0
    passed: bool = False

    def line(self) -> str:
        if self.kind == "roundoff":
            detail = f"max rel residual {self.worst:.2e}"
        else:
            detail = f"order {self.order:.2f} over n={list(self.levels)}, worst " + \
                     ", ".join(f"{w:.2e}" for w in self.worst)
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} ({self.count} states, {detail}, {self.seconds:.1f}s)"


@dataclass
class IdentityReport:
    suites: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def as_dict(self) -> dict:
        return {s.name: {"kind": s.kind, "count": s.count, "worst": s.worst, "order": s.order,
                         "levels": list(s.levels), "seconds": s.seconds, "passed": s.passed}
                for s in self.suites}


def _state(grid: SlabGrid, seed: int, amplitude: float = 0.1):
    return manufactured(grid, seed=seed, amplitude=amplitude)


def piola_suite(seeds, n: int = 64, dim: int = 2) -> SuiteResult:
    """d_j (J A_ij) = 0; exact in 2D since the cofactor entries are single derivatives."""
    t0 = time.perf_counter()
    grid = SlabGrid(dim=dim, n_tangential=n, n_normal=n)
    worst = 0.0
    for s in seeds:
        geom = _state(grid, s).geometry0
        scale = np.abs(geom.cof).max() * max(grid.n_tangential, grid.n_normal)
        worst = max(worst, float(np.abs(geom.piola_residual()).max() / scale))
    return SuiteResult("piola", "roundoff", len(seeds), worst, seconds=time.perf_counter() - t0,
                       passed=worst <= ROUNDOFF_TOL)


def piola_suite_3d(seeds, levels=(8, 16, 32)) -> SuiteResult:
    """3D Piola identity: needs the product rule, so it is derivative class."""
    t0 = time.perf_counter()
    worst = []
    for n in levels:
        grid = SlabGrid(dim=3, n_tangential=n, n_normal=n)
        w = 0.0
        for s in seeds:
            geom = _state(grid, s).geometry0
            w = max(w, float(np.abs(geom.piola_residual()).max()))
        worst.append(w)
    order = fitted_order(levels, worst)
    return SuiteResult("piola_3d", "derivative", len(seeds), worst, order, tuple(levels),
                       time.perf_counter() - t0, passed=order >= MIN_ORDER)


def normal_suite(seeds, n: int = 64, dim: int = 2) -> SuiteResult:
    """N = J A e_d against the tangent-vector formula."""
    t0 = time.perf_counter()
    grid = SlabGrid(dim=dim, n_tangential=n, n_normal=n)
    worst = 0.0
    for s in seeds:
        geom = build_geometry(grid, _state(grid, s).eta0)
        JAe = geom.J[:, None] * geom.A[:, :, -1]
        worst = max(worst, _rel(JAe - geom.N_cross, geom.N_cross))
    return SuiteResult(f"normal_{dim}d", "roundoff", len(seeds), worst, seconds=time.perf_counter() - t0,
                       passed=worst <= ROUNDOFF_TOL)


def boundary_det_suite(seeds, n: int = 64, dim: int = 2) -> SuiteResult:
    """Closed-form det E against LU determinants of the assembled matrix."""
    t0 = time.perf_counter()
    grid = SlabGrid(dim=dim, n_tangential=n, n_normal=8)
    worst = 0.0
    for s in seeds:
        ref = _state(grid, s)
        g = ref.geometry0
        tr = lambda f: interface_trace(f, Phase.PLUS)  # noqa: E731
        frame = [tr(t) for t in g.frame]
        p, rho, J = tr(ref.p0), tr(ref.rho0), tr(g.J)
        b, N = tr(ref.b0), tr(g.N)
        E = boundary_matrix(p, rho, b, J, N, frame, ref.gamma)
        closed = boundary_matrix_det(p, rho, b, J, N, ref.gamma, dim)
        worst = max(worst, _rel(np.linalg.det(E) - closed, closed))
    return SuiteResult(f"boundary_det_{dim}d", "roundoff", len(seeds), worst, seconds=time.perf_counter() - t0,
                       passed=worst <= ROUNDOFF_TOL)


def _alphas(dim: int) -> list[tuple]:
    if dim == 2:
        return [(2, 0), (1, 1), (0, 2)]
    return [(1, 1, 0), (0, 1, 1), (1, 0, 1)]


def commutator_suite(seeds, levels=(16, 32, 64), dim: int = 2) -> tuple[SuiteResult, SuiteResult]:
    """Covariant commutator: expanded form (round-off) and good-unknown form (derivative class).

    Each state cycles through the |alpha| = 2 multi-indices and the
    components i, so every term of the correction is exercised.
    """
    t0 = time.perf_counter()
    alphas = _alphas(dim)
    expanded = 0.0
    worst = []
    for n in levels:
        grid = SlabGrid(dim=dim, n_tangential=n, n_normal=n)
        w = 0.0
        for k, s in enumerate(seeds):
            ref = _state(grid, s)
            alpha = alphas[k % len(alphas)]
            i = (k // len(alphas)) % dim
            c = commutator_check(grid, ref.eta0, ref.p0, alpha, i)
            expanded = max(expanded, c.expanded_residual)
            w = max(w, c.full_residual)
        worst.append(w)
    order = fitted_order(levels, worst)
    secs = time.perf_counter() - t0
    return (SuiteResult("commutator_expanded", "roundoff", len(seeds), expanded, seconds=secs,
                        passed=expanded <= ROUNDOFF_TOL),
            SuiteResult("commutator_good_unknown", "derivative", len(seeds), worst, order, tuple(levels),
                        secs, passed=order >= MIN_ORDER))


def run_identity_suites(seed: int = 7, count: int = 200, n: int = 64,
                        levels=(16, 32, 64), include_3d: bool = True) -> IdentityReport:
    """All suites on ``count`` random states drawn from ``seed``."""
    rng = np.random.default_rng(seed)
    seeds = [int(x) for x in rng.integers(0, 2 ** 31 - 1, size=count)]
    rep = IdentityReport()
    rep.suites.append(piola_suite(seeds, n))
    rep.suites.append(normal_suite(seeds, n, 2))
    rep.suites.append(boundary_det_suite(seeds, n, 2))
    rep.suites.extend(commutator_suite(seeds, levels))
    if include_3d:
        rep.suites.append(normal_suite(seeds, max(8, n // 4), 3))
        rep.suites.append(boundary_det_suite(seeds, max(8, n // 4), 3))
        rep.suites.append(piola_suite_3d(seeds))
    for s in rep.suites:
        log.info(s.line())
    return rep
