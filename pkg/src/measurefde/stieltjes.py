"""Stieltjes integration against nondecreasing, left-continuous integrators.

An integrator g is stored as an absolutely continuous part (a nonnegative
density integrated from an anchor point) plus a finite sorted list of positive
jumps.  g is left-continuous by convention: the value at a jump time excludes
the jump, so g(t+) - g(t) equals the jump magnitude there.  Integrals of a
regulated f against g pick up f(tau) * jump(tau) at every jump with
a <= tau < b; the jump at b belongs to the interval to the right.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_left
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad


class IntegratorDomainError(ValueError):
    """The density part failed to integrate to a finite value."""


class IntegrandError(ValueError):
    """The integrand produced a non-finite sample."""


def _zero(_s: float) -> float:
    return 0.0


def _one(_s: float) -> float:
    return 1.0


@dataclass(frozen=True)
class QuadConfig:
    """Composite-quadrature settings for :func:`integrate`."""

    base_mesh: float = 1.0 / 512.0   # max width of one Simpson panel
    refinement_levels: int = 6
    abs_tol: float = 1e-9

    def __post_init__(self):
        if self.base_mesh <= 0 or self.refinement_levels <= 0 or self.abs_tol <= 0:
            raise ValueError("QuadConfig fields must be strictly positive")


DEFAULT_QUAD = QuadConfig()


@dataclass(frozen=True)
class Integrator:
    """Nondecreasing, left-continuous function on the real line."""

    anchor_time: float = 0.0
    anchor_value: float = 0.0
    density: Callable[[float], float] = _zero
    jumps: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        jumps = tuple((float(t), float(m)) for t, m in self.jumps)
        times = [t for t, _ in jumps]
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ValueError("jump times must be strictly increasing")
        if any(m <= 0 for _, m in jumps):
            raise ValueError("jump magnitudes must be strictly positive")
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "_jump_times", tuple(times))

    # -- constructors ---------------------------------------------------

    @classmethod
    def identity(cls) -> "Integrator":
        """g(t) = t."""
        return cls(0.0, 0.0, _one, ())

    @classmethod
    def pure_jumps(cls, jumps: Sequence[tuple[float, float]]) -> "Integrator":
        return cls(0.0, 0.0, _zero, tuple(jumps))

    @classmethod
    def with_jumps(cls, density: Callable[[float], float],
                   jumps: Sequence[tuple[float, float]]) -> "Integrator":
        return cls(0.0, 0.0, density, tuple(jumps))

    # -- evaluation -----------------------------------------------------

    def jump_sum_below(self, t: float) -> float:
        """Sum of magnitudes of jumps strictly below t (left continuity)."""
        idx = bisect_left(self._jump_times, t)
        return math.fsum(m for _, m in self.jumps[:idx])

    def jumps_in(self, a: float, b: float) -> list[tuple[float, float]]:
        """Jumps with a <= tau < b (the ownership convention for [a, b])."""
        return [(t, m) for t, m in self.jumps if a <= t < b]

    def value_at(self, t: float) -> float:
        """g(t) = anchor + integral of the density + jumps strictly below t."""
        if t == self.anchor_time:
            dens = 0.0
        else:
            with warnings.catch_warnings():
                # roundoff chatter at the tight tolerance; accuracy is
                # covered by the exactness tests
                warnings.simplefilter("ignore", IntegrationWarning)
                dens, _err = quad(self.density, self.anchor_time, t,
                                  epsabs=1e-13, epsrel=1e-12, limit=200)
        val = self.anchor_value + dens \
            + self.jump_sum_below(t) - self.jump_sum_below(self.anchor_time)
        if not math.isfinite(val):
            raise IntegratorDomainError(f"integrator value at t={t} is not finite")
        return val

    def values_at(self, ts: np.ndarray, panel: float = 1.0 / 512.0) -> np.ndarray:
        """Vectorised evaluation on a sorted grid (composite Simpson per gap)."""
        ts = np.asarray(ts, dtype=float)
        order = np.argsort(ts, kind="stable")
        sorted_ts = ts[order]
        pieces = np.empty_like(sorted_ts)
        prev_t = self.anchor_time
        acc = self.anchor_value - self.jump_sum_below(self.anchor_time)
        for i, t in enumerate(sorted_ts):
            acc += _simpson_density(self.density, prev_t, t, panel)
            prev_t = t
            pieces[i] = acc + self.jump_sum_below(t)
        if not np.all(np.isfinite(pieces)):
            raise IntegratorDomainError("integrator produced non-finite values")
        out = np.empty_like(pieces)
        out[order] = pieces
        return out


def _simpson_density(density, a: float, b: float, panel: float) -> float:
    """Signed integral of the density over [a, b], composite Simpson."""
    if a == b:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    n = max(1, int(math.ceil((b - a) / panel)))
    xs = np.linspace(a, b, 2 * n + 1)
    fx = _sample(density, xs)
    h = (b - a) / (2 * n)
    w = np.ones(2 * n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return sign * float(h / 3.0 * np.dot(w, fx))


def _sample(fn, xs: np.ndarray) -> np.ndarray:
    """Evaluate a scalar callable on an array, vectorised when possible."""
    try:
        out = np.asarray(fn(xs), dtype=float)
        if out.shape == xs.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(fn(float(x))) for x in xs])


def _as_vec(value) -> np.ndarray:
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if not np.all(np.isfinite(v)):
        raise IntegrandError("integrand sample is not finite")
    return v


def integrate(f: Callable[[float], object], g: Integrator, a: float, b: float,
              cfg: QuadConfig = DEFAULT_QUAD,
              breakpoints: Sequence[float] = ()) -> np.ndarray:
    """Approximate the Stieltjes integral of f against g over [a, b].

    Composite Simpson of f * density on subintervals split at all jump times
    of g and at caller-declared breakpoints of f, plus sum of f(tau) * jump
    over jumps with a <= tau < b.  a > b is handled by a sign flip.
    """
    if a > b:
        return -integrate(f, g, b, a, cfg, breakpoints)
    probe = _as_vec(f(a))
    total = np.zeros_like(probe)
    if a == b:
        return total
    cuts = {a, b}
    cuts.update(t for t, _ in g.jumps if a < t < b)
    cuts.update(t for t in breakpoints if a < t < b)
    pts = sorted(cuts)
    for u, v in zip(pts, pts[1:]):
        total += _simpson_segment(f, g.density, u, v, cfg.base_mesh)
    for tau, mag in g.jumps_in(a, b):
        total += _as_vec(f(tau)) * mag
    return total


def _simpson_segment(f, density, a: float, b: float, panel: float) -> np.ndarray:
    n = max(1, int(math.ceil((b - a) / panel)))
    xs = np.linspace(a, b, 2 * n + 1)
    dens = _sample(density, xs)
    # the segment ends sit on declared breakpoints or jump times, where a
    # regulated f may be discontinuous: sample its one-sided values there
    # (the point value at the breakpoint itself has no mass here)
    nudge = max(1e-13, 1e-12 * (b - a))
    ends = [float(xs[0]) + nudge, float(xs[-1]) - nudge]
    fx = np.stack([_as_vec(f(ends[0]))]
                  + [_as_vec(f(float(x))) for x in xs[1:-1]]
                  + [_as_vec(f(ends[1]))])
    h = (b - a) / (2 * n)
    w = np.ones(2 * n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (h / 3.0) * np.einsum("i,i,ij->j", w, dens, fx)


def refine_ladder(f, g: Integrator, a: float, b: float, levels: int,
                  n0: int = 8) -> list[np.ndarray]:
    """Tagged Riemann-Stieltjes sums on successively halved dyadic meshes.

    Division points include every jump time of g, and each subinterval is
    tagged at its left endpoint, so a jump's contribution is f at the jump
    itself.  Used as an independent convergence oracle for :func:`integrate`.
    """
    if levels <= 0:
        raise ValueError("levels must be positive")
    if a > b:
        return [-v for v in refine_ladder(f, g, b, a, levels, n0)]
    out = []
    for level in range(levels):
        n = n0 * (2 ** level)
        div = np.union1d(np.linspace(a, b, n + 1),
                         [t for t, _ in g.jumps if a < t < b])
        gv = g.values_at(div)
        tags = div[:-1]
        fx = np.stack([_as_vec(f(float(t))) for t in tags])
        out.append(np.einsum("i,ij->j", np.diff(gv), fx))
    return out


def gronwall_bound(k: float, l: float, g: Integrator, a: float, xi: float) -> float:
    """Explicit bound k * exp(l * (g(xi) - g(a))) for xi >= a."""
    if xi < a:
        raise ValueError("xi must satisfy xi >= a")
    if k < 0 or l <= 0:
        raise ValueError("need k >= 0 and l > 0")
    if k == 0.0:
        return 0.0
    return k * math.exp(l * (g.value_at(xi) - g.value_at(a)))


@dataclass(frozen=True)
class GronwallReport:
    times: np.ndarray
    psi_values: np.ndarray
    hypothesis_rhs: np.ndarray     # k + l * int_a^xi psi dg
    bound_values: np.ndarray       # k * exp(l (g(xi) - g(a)))
    hypothesis_ok: np.ndarray
    bound_ok: np.ndarray
    status: str                    # "ok" | "hypothesis-not-satisfied" | "bound-violated"

    @property
    def passed(self) -> bool:
        return self.status != "bound-violated"


def check_gronwall(psi: Callable[[float], float], k: float, l: float,
                   g: Integrator, a: float, b: float,
                   n_grid: int = 129, cfg: QuadConfig = DEFAULT_QUAD,
                   slack: float = 1e-8) -> GronwallReport:
    """Grid verification of the Gronwall implication for psi against g.

    At every grid point xi the hypothesis psi(xi) <= k + l * int_a^xi psi dg
    and the conclusion psi(xi) <= k * exp(l (g(xi) - g(a))) are evaluated.
    A hypothesis failure downgrades the report instead of failing it: the
    implication is vacuous there.
    """
    grid = np.union1d(np.linspace(a, b, n_grid),
                      [t for t, _ in g.jumps if a < t < b])
    psi_vals = np.array([float(psi(float(x))) for x in grid])
    if np.any(psi_vals < 0):
        raise ValueError("psi must be nonnegative")
    gv = g.values_at(grid)
    cum = np.zeros_like(grid)
    for i in range(1, len(grid)):
        piece = integrate(psi, g, float(grid[i - 1]), float(grid[i]), cfg)
        cum[i] = cum[i - 1] + float(piece[0])
    hyp_rhs = k + l * cum
    bound = k * np.exp(l * (gv - gv[0]))
    tol = slack * (1.0 + np.abs(hyp_rhs))
    hyp_ok = psi_vals <= hyp_rhs + tol
    bound_ok = psi_vals <= bound + slack * (1.0 + np.abs(bound))
    if not bool(np.all(hyp_ok)):
        status = "hypothesis-not-satisfied"
    elif not bool(np.all(bound_ok)):
        status = "bound-violated"
    else:
        status = "ok"
    return GronwallReport(grid, psi_vals, hyp_rhs, bound, hyp_ok, bound_ok, status)
