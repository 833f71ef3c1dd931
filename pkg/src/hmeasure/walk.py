"""Random-walk engine: reference stepper and vectorized MC estimators.

The measure estimators run the walk *backwards* relative to the defining
picture: a chain starts at the absorbing site x, takes a first step (the
exit convention, n >= 1), and is killed on re-entering the absorber
B u L_0. Its score is the number of time indices spent on the source
line L_N before the kill. The mean score over chains is an unbiased
estimate of the point measure of x; restricted to chains whose first
step went through a given edge it estimates that edge's measure, and the
per-chain scores add exactly across the four edges.

Walks above the highest obstacle-free line are never simulated step by
step (their return time has infinite mean). An up-move from the jump
line L_H is replaced by an exact sample of the signed lateral
displacement K accumulated by the excursion, drawn from the kernel q
with Fourier transform (2 - cos t) - sqrt((2 - cos t)^2 - 1). The
excursion contributes exactly one time index, spent on L_H at landing,
which is also how the true chain counts it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .lattice import DirectedEdge, RngStream, Site, SiteSet, as_stream

__all__ = [
    "AbsorptionRecord",
    "Estimate",
    "step",
    "run_until_absorbed",
    "mc_point_measure",
    "mc_edge_measure",
    "mc_hat_measure",
    "mc_visits_to_line",
    "mc_escape_probability",
    "sky_jump_table",
    "jump_line_height",
    "StepCapExceeded",
]

BATCH = 1 << 14  # fixed lockstep batch; the chain partition never depends on threads

# direction codes: 0:+x1  1:-x1  2:+x2  3:-x2
_DX = np.array([1, -1, 0, 0], dtype=np.int64)
_DY = np.array([0, 0, 1, -1], dtype=np.int64)


class StepCapExceeded(RuntimeError):
    pass


@dataclass
class AbsorptionRecord:
    absorbed_at: Site
    previous: Site | None
    steps: int
    visits_to_target_line: int | None = None


@dataclass(frozen=True)
class Estimate:
    """MC estimate with batch-mean standard error."""

    mean: float
    stderr: float
    n_chains: int
    seed: int

    @classmethod
    def from_scores(cls, scores: np.ndarray, seed: int) -> "Estimate":
        n = scores.size
        mean = float(scores.mean()) if n else float("nan")
        if n < 2:
            return cls(mean, float("nan"), n, seed)
        groups = min(n, max(16, int(round(math.sqrt(n)))))
        if groups < 2:
            se = float(scores.std(ddof=1) / math.sqrt(n))
        else:
            gm = np.array([g.mean() for g in np.array_split(scores, groups)])
            se = float(gm.std(ddof=1) / math.sqrt(groups))
        return cls(mean, se, n, seed)

    def agrees_with(self, value: float, n_sigma: float = 4.0) -> bool:
        return abs(self.mean - value) <= n_sigma * self.stderr


# -- single-walk reference implementation ------------------------------------


def step(rng: RngStream | int, site) -> Site:
    """One uniform nearest-neighbour step (may leave H; callers police that)."""
    g = as_stream(rng).generator()
    d = int(g.integers(0, 4))
    return Site(site[0] + int(_DX[d]), site[1] + int(_DY[d]))


def run_until_absorbed(
    rng: RngStream | int,
    start,
    absorber: Callable[[Site], bool],
    target_line: int | None = None,
    step_cap: int = 10**9,
) -> AbsorptionRecord:
    """Walk from `start` until the absorber fires; hitting-time convention.

    The absorber should cover all of L_0 (the walk itself does not treat
    the floor specially). visits_to_target_line counts indices n in
    [0, absorption) on the line, so a start on the line counts once.
    Plain python loop; the mc_* functions are the fast path.
    """
    g = as_stream(rng).generator()
    pos = Site(int(start[0]), int(start[1]))
    if absorber(pos):
        return AbsorptionRecord(pos, None, 0, 0 if target_line is not None else None)
    visits = 0
    prev = None
    steps = 0
    while True:
        if target_line is not None and pos.x2 == target_line:
            visits += 1
        d = int(g.integers(0, 4))
        nxt = Site(pos.x1 + int(_DX[d]), pos.x2 + int(_DY[d]))
        steps += 1
        if absorber(nxt):
            return AbsorptionRecord(
                nxt, pos, steps, visits if target_line is not None else None
            )
        prev, pos = pos, nxt
        if steps >= step_cap:
            raise StepCapExceeded(f"no absorption within {step_cap} steps")


# -- sky-jump displacement kernel ---------------------------------------------

_JUMP_KMAX = 1 << 19
_jump_cache: dict[str, np.ndarray] = {}


def sky_jump_table(k_max: int = _JUMP_KMAX) -> tuple[np.ndarray, np.ndarray]:
    """(q, cdf) for |K| = 0..k_max.

    q[k] is the probability that an excursion above the line returns
    displaced by +-k (both signs together for k >= 1; q[0] is the atom at
    zero). Computed as Fourier coefficients of phi via one FFT, truncated
    and renormalized (clipped tail ~ 2/(pi*k_max)).
    """
    key = f"tab{k_max}"
    if key not in _jump_cache:
        M = 1 << 21 if k_max > (1 << 18) else 1 << 18
        theta = 2.0 * np.pi * np.arange(M) / M
        a = 2.0 - np.cos(theta)
        phi = a - np.sqrt(a * a - 1.0)
        coef = np.fft.ifft(phi).real
        q = np.empty(k_max + 1)
        q[0] = coef[0]
        q[1:] = 2.0 * coef[1 : k_max + 1]
        q = np.maximum(q, 0.0)
        q /= q.sum()
        _jump_cache[key] = q
    q = _jump_cache[key]
    return q, np.cumsum(q)


def _sample_jumps(g: np.random.Generator, n: int, cdf: np.ndarray) -> np.ndarray:
    k = np.searchsorted(cdf, g.random(n), side="right").astype(np.int64)
    sign = np.where(g.random(n) < 0.5, -1, 1)
    return k * sign


# -- vectorized absorption chains ---------------------------------------------


def _batch_plan(chains: int) -> list[tuple[int, int]]:
    out = []
    start = 0
    while start < chains:
        size = min(BATCH, chains - start)
        out.append((len(out), size))
        start += size
    return out


def _score_batch(
    batch_idx: int,
    size: int,
    base: RngStream,
    x0: Site,
    N: int,
    H: int,
    raster: np.ndarray | None,
    r_off: int,
    edge_absorbs: bool,
    count_start: bool,
    step_cap: int,
    cdf: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Run one lockstep batch; return (visit scores, first-step direction)."""
    g = np.random.Generator(np.random.Philox(base.child_sequence(7, batch_idx)))
    x1 = np.full(size, x0.x1, dtype=np.int64)
    x2 = np.full(size, x0.x2, dtype=np.int64)
    visits = np.zeros(size, dtype=np.int64)
    if count_start and x0.x2 == N:
        visits += 1

    def absorbed_at(a1, a2):
        dead = a2 <= 0  # floor, and the invalid below-floor first step
        if raster is not None:
            inside = (a1 >= r_off) & (a1 < r_off + raster.shape[1]) & (a2 <= H) & (a2 >= 0)
            idx1 = np.clip(a1 - r_off, 0, raster.shape[1] - 1)
            idx2 = np.clip(a2, 0, H)
            dead = dead | (inside & raster[idx2, idx1])
            if edge_absorbs:
                dead = dead | ((a1 < r_off) | (a1 >= r_off + raster.shape[1]))
        return dead

    # first step (exit convention); jump logic applies if the start is on L_H
    d0 = g.integers(0, 4, size=size)
    first_dir = d0.astype(np.uint8)
    if x0.x2 == H:
        jump = d0 == 2
        x1 += np.where(jump, 0, _DX[d0])
        x2 += np.where(jump, 0, _DY[d0])
        nj = int(jump.sum())
        if nj:
            x1[jump] += _sample_jumps(g, nj, cdf)
    else:
        x1 += _DX[d0]
        x2 += _DY[d0]
    alive = ~absorbed_at(x1, x2)
    visits[alive & (x2 == N)] += 1

    steps = 1
    idx = np.nonzero(alive)[0]
    while idx.size:
        if steps >= step_cap:
            raise StepCapExceeded(f"chains alive after {steps} lockstep steps")
        c1 = x1[idx]
        c2 = x2[idx]
        d = g.integers(0, 4, size=idx.size)
        on_lid = c2 == H
        jump = on_lid & (d == 2)
        nj = int(jump.sum())
        if nj:
            c1 = c1 + np.where(jump, 0, _DX[d])
            c2 = c2 + np.where(jump, 0, _DY[d])
            c1[jump] += _sample_jumps(g, nj, cdf)
        else:
            c1 = c1 + _DX[d]
            c2 = c2 + _DY[d]
        x1[idx] = c1
        x2[idx] = c2
        dead = absorbed_at(c1, c2)
        hits = ~dead & (c2 == N)
        if hits.any():
            visits[idx[hits]] += 1
        idx = idx[~dead]
        steps += 1
    return visits, first_dir


def jump_line_height(obstacle: SiteSet, N: int, halfwidth: int) -> int:
    """Lowest line at/above N from which sky jumps are taken.

    Exact whenever the obstacle within the raster stays at or below the
    returned height; taller obstacles are clipped at the cap (jumps then
    fly over anything above it, a documented one-sided approximation).
    """
    cap = max(2 * N, 64)
    top = obstacle.max_height_in(-halfwidth, halfwidth, cap=cap)
    return max(N, min(top, cap))


def _mc_raster(obstacle: SiteSet, N: int, halfwidth: int):
    """(raster, offset, H, edge_absorbs) for the lockstep kernel."""
    H = jump_line_height(obstacle, N, halfwidth)
    if obstacle.is_empty:
        return None, 0, H, False
    raster = obstacle.raster((-halfwidth, halfwidth, 0, H))

    def _blocked(x1):
        col = raster[1:, x1 + halfwidth]
        return col.size > 0 and bool(col.all())

    edge_absorbs = _blocked(-halfwidth) and _blocked(halfwidth)
    return raster, -halfwidth, H, edge_absorbs


def _run_scored_chains(
    obstacle: SiteSet,
    x: Site,
    N: int,
    chains: int,
    rng,
    *,
    count_start: bool = False,
    halfwidth: int | None = None,
    step_cap: int = 10**9,
    threads: int = 1,
) -> tuple[np.ndarray, np.ndarray, RngStream]:
    base = as_stream(rng)
    if halfwidth is None:
        halfwidth = 16 * max(N, 1) + 64
    raster, r_off, H, edge_absorbs = _mc_raster(obstacle, N, halfwidth)
    _, cdf = sky_jump_table()
    plan = _batch_plan(chains)

    def work(item):
        b, size = item
        return _score_batch(
            b, size, base, x, N, H, raster, r_off, edge_absorbs,
            count_start, step_cap, cdf,
        )

    if threads > 1 and len(plan) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, plan))
    else:
        parts = [work(item) for item in plan]
    visits = np.concatenate([p[0] for p in parts])
    dirs = np.concatenate([p[1] for p in parts])
    return visits, dirs, base


def _require_absorbing_site(obstacle: SiteSet, x: Site, N: int) -> None:
    if x.x2 < 0:
        raise ValueError(f"{tuple(x)} lies below the floor")
    if not (x.x2 == 0 or x in obstacle):
        raise ValueError(f"{tuple(x)} is neither on the floor nor in the obstacle")
    if x.x2 >= N:
        raise ValueError(f"need source height N > x2, got N={N}, x2={x.x2}")


def mc_point_measure(
    obstacle: SiteSet, x, N: int, chains: int, rng=0, **kw
) -> Estimate:
    """Unbiased MC estimate of the point measure of x in B u L_0 at height N."""
    x = Site(int(x[0]), int(x[1]))
    _require_absorbing_site(obstacle, x, N)
    if chains < 1:
        raise ValueError("need chains >= 1")
    visits, _, base = _run_scored_chains(obstacle, x, N, chains, rng, **kw)
    return Estimate.from_scores(visits.astype(float), base.seed)


_DIR_OF = {(1, 0): 0, (-1, 0): 1, (0, 1): 2, (0, -1): 3}


def mc_edge_measure(
    obstacle: SiteSet, edge, N: int, chains: int, rng=0, **kw
) -> Estimate:
    """MC estimate of a directed absorption-edge measure (tail in B u L_0)."""
    tail = Site(int(edge[0][0]), int(edge[0][1]))
    head = Site(int(edge[1][0]), int(edge[1][1]))
    delta = (head.x1 - tail.x1, head.x2 - tail.x2)
    if delta not in _DIR_OF:
        raise ValueError(f"edge {tuple(tail)}->{tuple(head)} is not nearest-neighbour")
    if head.x2 < 0:
        raise ValueError("edge head lies below the floor")
    if head.x2 == 0 or head in obstacle:
        raise ValueError("edge head must be outside B u L_0")
    _require_absorbing_site(obstacle, tail, N)
    visits, dirs, base = _run_scored_chains(obstacle, tail, N, chains, rng, **kw)
    scores = visits.astype(float) * (dirs == _DIR_OF[delta])
    return Estimate.from_scores(scores, base.seed)


def mc_hat_measure(
    obstacle: SiteSet, y, N: int, chains: int, rng=0, **kw
) -> Estimate:
    """MC estimate of the outer measure at y: sum of edge measures x->y, x in B."""
    y = Site(int(y[0]), int(y[1]))
    if y in obstacle:
        raise ValueError(f"{tuple(y)} belongs to the obstacle")
    base = as_stream(rng)
    legs = []
    for i, nb in enumerate(y.neighbors()):
        if nb.x2 >= 0 and nb in obstacle:
            legs.append((i, nb))
    if not legs:
        raise ValueError(f"{tuple(y)} has no obstacle neighbour")
    if y.x2 == 0:
        return Estimate(0.0, 0.0, chains, base.seed)  # floor absorbs first
    mean = 0.0
    var = 0.0
    for i, x_site in legs:
        est = mc_edge_measure(
            obstacle, (x_site, y), N, chains, base.substream(100 + i), **kw
        )
        mean += est.mean
        var += est.stderr**2
    return Estimate(mean, math.sqrt(var), chains, base.seed)


def mc_visits_to_line(N: int, chains: int, rng=0, obstacle: SiteSet | None = None, **kw) -> Estimate:
    """MC check of the 4N identity: visits to L_N from (0,N) before the floor."""
    if N < 1:
        raise ValueError("need N >= 1")
    obstacle = SiteSet.empty() if obstacle is None else obstacle
    visits, _, base = _run_scored_chains(
        obstacle, Site(0, N), N, chains, rng, count_start=True, **kw
    )
    return Estimate.from_scores(visits.astype(float), base.seed)


# -- escape (two-target) chains ------------------------------------------------


def mc_escape_probability(
    start,
    target_a,
    target_b,
    chains: int,
    rng=0,
    *,
    step_cap: int = 10**7,
    threads: int = 1,
) -> Estimate:
    """P(hit A strictly before B) by direct simulation, exit convention.

    target_a/target_b are vectorized predicates of (x1 array, x2 array).
    B wins simultaneous membership. A u B must enclose the start (the
    step cap guards against non-enclosing targets).
    """
    start = Site(int(start[0]), int(start[1]))
    base = as_stream(rng)
    plan = _batch_plan(chains)

    def work(item):
        b, size = item
        g = np.random.Generator(np.random.Philox(base.child_sequence(11, b)))
        x1 = np.full(size, start.x1, dtype=np.int64)
        x2 = np.full(size, start.x2, dtype=np.int64)
        score = np.zeros(size, dtype=np.float64)
        idx = np.arange(size)
        steps = 0
        while idx.size:
            if steps >= step_cap:
                raise StepCapExceeded(
                    f"escape chains alive after {steps} steps; targets may not enclose"
                )
            d = g.integers(0, 4, size=idx.size)
            x1[idx] += _DX[d]
            x2[idx] += _DY[d]
            c1, c2 = x1[idx], x2[idx]
            in_b = np.asarray(target_b(c1, c2), dtype=bool)
            in_a = np.asarray(target_a(c1, c2), dtype=bool) & ~in_b
            if in_a.any():
                score[idx[in_a]] = 1.0
            idx = idx[~(in_a | in_b)]
            steps += 1
        return score

    if threads > 1 and len(plan) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, plan))
    else:
        parts = [work(item) for item in plan]
    return Estimate.from_scores(np.concatenate(parts), base.seed)
