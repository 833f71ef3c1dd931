"""Continuous-time growth on the half-plane lattice.

Two mechanisms share the GrowthState container:

* simulate_sqrt_process: every occupied site tries to give birth onto
  each nearest neighbor, at rate sqrt(x2) when x2 > 0 and rate 1 on the
  floor row. Births onto occupied sites are suppressed; we implement the
  suppression by exclusion (only occupied-to-vacant pairs enter the rate
  table), which is the same process because suppressed attempts change
  nothing. The loop is an exact Gillespie simulation: exponential
  waiting time at the total rate, then a site chosen proportionally to
  its aggregate rate, then a uniform vacant neighbor.

* harmonic_growth_step: one birth driven by the outer measure. The
  intensity of a vacant boundary site y is hat(y) computed by the exact
  solver; the next site is sampled proportionally and the total
  intensity (the exponential waiting rate) is reported. A numerically
  zero table is reported as a frozen state instead of sampled.

The process lives on a finite vertical strip of `width` columns. The
lateral policy decides what happens at the strip edges: "periodic"
wraps neighbor lookups around, "frozen" treats off-strip targets as
nonexistent. There is no ceiling. The floor row of the strip is
occupied from the start and stays occupied.

Draw order per event is fixed (waiting time, then parent site, then
target index), so a (seed, width, policy) triple fully determines a
trajectory.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field as dc_field

import numpy as np

from .lattice import Site, SiteSet, as_stream
from .solver import (
    TruncatedDomain,
    default_halfwidth,
    exact_hat_measure,
    exact_point_measure,
    green_field,
)

__all__ = [
    "GrowthState",
    "ClockSet",
    "GrowthBudgetError",
    "simulate_sqrt_process",
    "HarmonicStep",
    "harmonic_growth_step",
    "ProbeReport",
    "positivity_probe",
    "HeightBoundReport",
    "height_bound_check",
]

# birth target order: up, down, left, right (down only above the floor)
_OFFSETS = ((0, 1), (0, -1), (-1, 0), (1, 0))


class GrowthBudgetError(RuntimeError):
    """The event cap was reached before t_end."""


def _strip_columns(width: int) -> range:
    # width columns, centered: width 64 spans -32..31
    return range(-(width // 2), width - width // 2)


@dataclass
class GrowthState:
    """A growth trajectory: starting set, event log, final configuration.

    occupied is the final set; snapshot(t) rebuilds any earlier one from
    the log. Event times are strictly increasing and the occupied sets
    along the log are nested by construction. The strip floor is part of
    every snapshot.
    """

    width: int
    policy: str
    t: float
    occupied: SiteSet
    initial: SiteSet
    events: list[tuple[float, Site]] = dc_field(default_factory=list)

    @property
    def halfwidth(self) -> int:
        return self.width // 2

    @property
    def columns(self) -> range:
        return _strip_columns(self.width)

    @classmethod
    def from_set(cls, B: SiteSet, width: int = 0, policy: str = "frozen") -> "GrowthState":
        """Wrap a static configuration (no history) for the probes.

        width 0 means no growth strip: the probes then treat only B's
        own floor sites as part of the configuration.
        """
        return cls(width=width, policy=policy, t=0.0, occupied=B, initial=B, events=[])

    def snapshot(self, t: float) -> SiteSet:
        if t < 0.0:
            raise ValueError(f"negative time {t}")
        if t >= self.t or not self.events:
            return self.occupied
        times = [e[0] for e in self.events]
        k = bisect_right(times, t)
        if k == len(self.events):
            return self.occupied
        if k == 0:
            return self.initial
        cols = self.columns
        top = int(self.initial.max_height_in(cols[0], cols[-1]))
        base = list(self.initial.sites((cols[0], cols[-1], 0, top)))
        return SiteSet.from_sites(base + [e[1] for e in self.events[:k]])

    def column_heights(self) -> dict[int, int]:
        """Highest occupied x2 per strip column (0 where only the floor is)."""
        h = {x1: 0 for x1 in self.columns}
        for x1, height in self.initial.columns().items():
            if x1 in h:
                h[x1] = max(h[x1], int(height))
        for x1, x2 in self.initial.extras:
            if x1 in h:
                h[x1] = max(h[x1], x2)
        for _, s in self.events:
            if s.x1 in h:
                h[s.x1] = max(h[s.x1], s.x2)
        return h

    def events_csv(self) -> str:
        lines = ["t,x1,x2"]
        for t, s in self.events:
            lines.append(f"{t!r},{s.x1},{s.x2}")
        return "\n".join(lines) + "\n"


class ClockSet:
    """Aggregate birth rates of the occupied set, kept current per event.

    Each occupied site holds one entry: base rate (1 on the floor,
    sqrt(x2) above it) times its number of vacant targets. The total
    over the table is the Gillespie rate. Entries are stored in site
    insertion order, which the simulation makes deterministic.
    """

    def __init__(self, occupied: set[tuple[int, int]], width: int, policy: str):
        if policy not in ("periodic", "frozen"):
            raise ValueError(f"unknown lateral policy {policy!r}")
        cols = _strip_columns(width)
        for s in occupied:
            if s[0] not in cols or s[1] < 0:
                raise ValueError(f"occupied site {s} outside the strip")
        self.width = width
        self.policy = policy
        self._lo = cols[0]
        self._occ = occupied
        self._rate: dict[tuple[int, int], float] = {}
        for s in sorted(occupied):
            self._rate[s] = self._site_rate(s)

    def _targets(self, site: tuple[int, int]) -> list[tuple[int, int]]:
        x1, x2 = site
        out = [(x1, x2 + 1)]
        if x2 > 0:
            out.append((x1, x2 - 1))
        for dx in (-1, 1):
            nx = x1 + dx
            if nx < self._lo or nx > self._lo + self.width - 1:
                if self.policy == "frozen":
                    continue
                nx = (nx - self._lo) % self.width + self._lo
            out.append((nx, x2))
        return out

    def _site_rate(self, site: tuple[int, int]) -> float:
        n_vacant = sum(1 for t in self._targets(site) if t not in self._occ)
        if n_vacant == 0:
            return 0.0
        base = 1.0 if site[1] == 0 else math.sqrt(site[1])
        return base * n_vacant

    def vacant_targets(self, site: tuple[int, int]) -> list[tuple[int, int]]:
        return [t for t in self._targets(site) if t not in self._occ]

    def totals(self) -> tuple[list[tuple[int, int]], np.ndarray, float]:
        keys = list(self._rate.keys())
        vals = np.fromiter(self._rate.values(), dtype=float, count=len(keys))
        cum = np.cumsum(vals)
        total = float(cum[-1]) if len(keys) else 0.0
        return keys, cum, total

    def birth(self, site: tuple[int, int]) -> None:
        """Mark `site` occupied and refresh the affected entries."""
        if site in self._occ:
            raise ValueError(f"birth onto occupied site {site}")
        self._occ.add(site)
        self._rate[site] = self._site_rate(site)
        for nb in self._targets(site):
            if nb in self._occ:
                self._rate[nb] = self._site_rate(nb)

    def audit(self) -> None:
        """Compare the incremental table against a from-scratch rebuild."""
        fresh = {}
        for s in sorted(self._occ):
            r = self._site_rate(s)
            if r > 0.0:
                fresh[s] = r
        inc = {s: r for s, r in self._rate.items() if r > 0.0}
        if inc != fresh:
            raise RuntimeError("clock table diverged from a fresh rebuild")


def simulate_sqrt_process(
    width: int,
    t_end: float,
    seed=0,
    *,
    initial: SiteSet | None = None,
    policy: str = "periodic",
    max_events: int = 1_000_000,
    audit_every: int = 0,
) -> GrowthState:
    """Run the sqrt-height birth process on a strip until t_end.

    initial defaults to the strip floor; a custom initial set is clipped
    to the strip and the floor is added to it (rates below a floating
    cluster would be ill-defined). audit_every > 0 rebuilds the clock
    table from scratch every that many events and fails loudly on any
    mismatch; it is meant for tests, not production runs.

    Raises GrowthBudgetError when the cap would be exceeded before
    t_end.
    """
    if width < 1:
        raise ValueError(f"need width >= 1, got {width}")
    if not t_end > 0.0:
        raise ValueError(f"need t_end > 0, got {t_end}")
    cols = _strip_columns(width)

    occ: set[tuple[int, int]] = {(x1, 0) for x1 in cols}
    if initial is not None:
        top = initial.max_height_in(cols[0], cols[-1])
        for s in initial.sites((cols[0], cols[-1], 0, max(int(top), 0))):
            occ.add((s.x1, s.x2))
    start_set = SiteSet.from_sites(sorted(occ))

    clocks = ClockSet(occ, width, policy)
    g = as_stream(seed).substream(13).generator()

    t = 0.0
    events: list[tuple[float, Site]] = []
    while True:
        keys, cum, total = clocks.totals()
        if total <= 0.0:
            t = t_end  # jammed: nothing can ever fire again
            break
        dt = g.exponential(1.0 / total)
        if t + dt > t_end:
            t = t_end
            break
        if len(events) >= max_events:
            raise GrowthBudgetError(
                f"event cap {max_events} reached at t={t:.6g} (t_end={t_end:.6g})"
            )
        t = t + dt
        parent = keys[int(np.searchsorted(cum, g.random() * total, side="right"))]
        vac = clocks.vacant_targets(parent)
        child = vac[int(g.integers(len(vac)))] if len(vac) > 1 else vac[0]
        clocks.birth(child)
        events.append((t, Site(*child)))
        if audit_every and len(events) % audit_every == 0:
            clocks.audit()

    return GrowthState(
        width=width,
        policy=policy,
        t=t,
        occupied=SiteSet.from_sites(sorted(occ)),
        initial=start_set,
        events=events,
    )


@dataclass
class HarmonicStep:
    """One outer-measure growth step: the intensity table and the draw."""

    obstacle: SiteSet
    N: int
    W: int
    window: tuple[int, int, int, int]
    site: Site | None
    table: list[tuple[Site, float]]
    total: float
    frozen: bool

    def next_set(self) -> SiteSet:
        if self.site is None:
            return self.obstacle
        return self.obstacle.union(SiteSet.from_sites([self.site]))

    def table_csv(self) -> str:
        lines = ["x1,x2,intensity"]
        for s, v in self.table:
            lines.append(f"{s.x1},{s.x2},{v!r}")
        return "\n".join(lines) + "\n"


def harmonic_growth_step(
    B: SiteSet,
    N: int,
    *,
    window: tuple[int, int, int, int] | None = None,
    w: int | None = None,
    rng=0,
    frozen_tol: float = 1e-10,
    boundary: str = "exact",
) -> HarmonicStep:
    """Sample the next growth site with probability proportional to hat.

    The intensity table covers the outer boundary of B inside `window`
    (the growth region; defaults to the whole solve window). total is
    the exponential waiting rate of the continuous-time chain over that
    region. A total below frozen_tol is reported as a frozen state
    rather than sampled. A fixed window with growing N is how the dying
    configurations show themselves: their deep-surface total keeps
    falling, while a healthy set's total stabilizes at a positive value.

    The table never includes the solver's lid row: for obstacles tall
    enough to be clipped there, that row is the truncation frontier,
    not a real surface. Each accepted birth changes the field globally,
    so callers looping this must pass the updated set back in; nothing
    is cached here.
    """
    W = default_halfwidth(N) if w is None else int(w)
    dom = TruncatedDomain(N, W, B)
    if B.count_in(dom.window) == 0:
        raise ValueError("obstacle is empty inside the window")
    if window is None:
        window = dom.window
    x1_lo, x1_hi, x2_lo, x2_hi = window
    box = (
        max(int(x1_lo), -W),
        min(int(x1_hi), W),
        max(int(x2_lo), 0),
        min(int(x2_hi), dom.height - 1),
    )
    fld = green_field(dom, boundary=boundary)
    ys = B.outer_boundary(box)
    table = [(y, exact_hat_measure(fld, y)) for y in ys]
    total = float(sum(v for _, v in table))

    if total < frozen_tol:
        return HarmonicStep(
            obstacle=B, N=N, W=W, window=box,
            site=None, table=table, total=total, frozen=True,
        )

    g = as_stream(rng).substream(17).generator()
    u = g.random() * total
    acc = 0.0
    site = table[-1][0]
    for y, v in table:
        acc += v
        if u < acc:
            site = y
            break
    return HarmonicStep(
        obstacle=B, N=N, W=W, window=box,
        site=site, table=table, total=total, frozen=False,
    )


# -- probes over a configuration ---------------------------------------------


def _surface_sites(dom: TruncatedDomain, min_height: int) -> list[Site]:
    """Occupied sites that can carry flux: those with a vacant in-window
    neighbor, plus the lid row (sky landings) and the wall columns
    (ghost-column flux)."""
    H, W = dom.height, dom.W
    occ = dom.obstacle.raster(dom.window)
    occ[0, :] = True
    absorbing = occ
    vac = ~absorbing
    near = np.zeros_like(vac)
    near[1:, :] |= vac[:-1, :]
    near[:-1, :] |= vac[1:, :]
    near[:, 1:] |= vac[:, :-1]
    near[:, :-1] |= vac[:, 1:]
    cand = occ & near
    cand[H, :] |= occ[H, :]
    cand[1:, 0] |= occ[1:, 0]
    cand[1:, -1] |= occ[1:, -1]
    rows, cols = np.nonzero(cand)
    out = [Site(int(c) - W, int(r)) for r, c in zip(rows, cols) if r >= min_height]
    out.sort(key=lambda s: (s.x2, s.x1))
    return out


@dataclass
class ProbeReport:
    t: float
    N: int
    W: int
    best: float
    argmax: Site | None
    n_checked: int

    def __str__(self) -> str:
        where = "nowhere" if self.argmax is None else f"({self.argmax.x1},{self.argmax.x2})"
        return (
            f"max point measure {self.best!r} at {where}"
            f" over {self.n_checked} sites (t={self.t:g}, N={self.N}, W={self.W})"
        )


def positivity_probe(
    state: GrowthState,
    N: int,
    *,
    w: int | None = None,
    t: float | None = None,
    box: tuple[int, int, int, int] | None = None,
    boundary: str = "exact",
    strict: bool = True,
) -> ProbeReport:
    """Exact max of the point measure over the occupied set at time t.

    The max runs over occupied sites inside `box`; the default box is
    the solve window minus its truncation frontier (the lid row and the
    two edge columns), where clipped tall obstacles would otherwise
    collect the window model's phantom flux. Passing a small fixed box
    while N grows is the way to watch a dying configuration: its deep
    surface drains while the truncation mouth keeps catching walkers.
    strict raises when no probed site carries positive measure, which
    is the frozen phenomenon caught in the act.
    """
    at = state.t if t is None else float(t)
    B_t = state.snapshot(at)
    W = default_halfwidth(N) if w is None else int(w)
    dom = TruncatedDomain(N, W, B_t)
    fld = green_field(dom, boundary=boundary)

    if box is None:
        box = (-W + 1, W - 1, 0, dom.height - 1)
    lo1, hi1 = max(int(box[0]), -W), min(int(box[1]), W)
    lo2, hi2 = max(int(box[2]), 0), min(int(box[3]), dom.height)

    floor_cols = set(state.columns) | set(B_t.floored_columns)
    best = 0.0
    argmax = None
    n = 0
    for s in _surface_sites(dom, 0):
        if not (lo1 <= s.x1 <= hi1 and lo2 <= s.x2 <= hi2):
            continue
        if s.x2 == 0:
            if s.x1 not in floor_cols and s not in B_t:
                continue  # window floor beyond the occupied strip
        elif s not in B_t:
            continue
        v = float(exact_point_measure(fld, s))
        n += 1
        if v > best:
            best, argmax = v, s
    if strict and not best > 0.0:
        raise ValueError(f"no occupied site carries positive measure at t={at:g}")
    return ProbeReport(t=at, N=N, W=W, best=best, argmax=argmax, n_checked=n)


@dataclass
class HeightBoundReport:
    N: int
    N2: int
    C: float | None
    C2: float | None
    rel_change: float | None
    argmax: Site | None
    n_checked: int
    empty: bool

    def __str__(self) -> str:
        if self.empty:
            return f"no occupied sites above the floor (N={self.N}): nothing to bound"
        return (
            f"C = max measure/sqrt(height) = {self.C!r} at"
            f" ({self.argmax.x1},{self.argmax.x2});"
            f" N {self.N}->{self.N2} moves it by {self.rel_change:.3%}"
        )


def height_bound_check(
    B: SiteSet,
    N: int,
    *,
    w_factor: int = 8,
    stability_tol: float = 0.5,
    boundary: str = "exact",
) -> HeightBoundReport:
    """Fit C in measure(x) <= C*sqrt(x2) over the occupied sites above
    the floor, then re-fit at 2N and require the fit to be stable.

    Nothing above the floor produces an empty-domain report instead of a
    fit. stability_tol is a loose safety net; callers wanting a tighter
    band assert on rel_change themselves.
    """

    def fit(n: int) -> tuple[float, Site | None, int]:
        dom = TruncatedDomain(n, default_halfwidth(n, w_factor), B)
        sites = _surface_sites(dom, 1)
        sites = [s for s in sites if s in B]
        if not sites:
            return math.nan, None, 0
        fld = green_field(dom, boundary=boundary)
        best, arg = 0.0, sites[0]
        for s in sites:
            c = exact_point_measure(fld, s) / math.sqrt(s.x2)
            if c > best:
                best, arg = c, s
        return best, arg, len(sites)

    C, argmax, n_sites = fit(N)
    if n_sites == 0:
        return HeightBoundReport(
            N=N, N2=2 * N, C=None, C2=None, rel_change=None,
            argmax=None, n_checked=0, empty=True,
        )
    C2, _, _ = fit(2 * N)
    if not (math.isfinite(C) and math.isfinite(C2)):
        raise RuntimeError(f"height-bound fit is not finite: C={C!r}, C2={C2!r}")
    rel = abs(C2 - C) / max(C, 1e-300)
    if rel > stability_tol:
        raise RuntimeError(
            f"height-bound fit unstable under doubling: C={C!r} -> C2={C2!r}"
        )
    return HeightBoundReport(
        N=N, N2=2 * N, C=C, C2=C2, rel_change=rel,
        argmax=argmax, n_checked=n_sites, empty=False,
    )
