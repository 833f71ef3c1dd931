"""Half-plane lattice primitives.

The ambient space is the upper half-plane of the square lattice,
H = {(x1, x2) in Z^2 : x2 >= 0}, with nearest-neighbour adjacency.
L_n denotes the horizontal line {x2 == n}; L_0 is the absorbing floor.

This module holds the site/edge value types, the obstacle-set container
used by every solver and sampler, the seeded RNG handle, and the plain
text serialization format for sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, NamedTuple

import numpy as np

__all__ = [
    "Site",
    "DirectedEdge",
    "SiteSet",
    "RngStream",
    "UnboundedColumnError",
    "Window",
    "parse_set_text",
    "format_set_text",
]

# Inclusive rectangle (x1_min, x1_max, x2_min, x2_max).
Window = tuple[int, int, int, int]

_STEPS = ((1, 0), (-1, 0), (0, 1), (0, -1))


class Site(NamedTuple):
    """Lattice point. Membership in H (x2 >= 0) is enforced where it matters."""

    x1: int
    x2: int

    def neighbors(self) -> tuple["Site", ...]:
        """The four nearest neighbours, in (+x1, -x1, +x2, -x2) order.

        Neighbours below the floor (x2 < 0) are included; callers that
        work inside H filter them.
        """
        return tuple(Site(self.x1 + dx, self.x2 + dy) for dx, dy in _STEPS)

    def shifted(self, d: int) -> "Site":
        return Site(self.x1 + d, self.x2)


class DirectedEdge(NamedTuple):
    """Directed nearest-neighbour edge, tail -> head."""

    tail: Site
    head: Site

    def is_adjacent(self) -> bool:
        return abs(self.tail.x1 - self.head.x1) + abs(self.tail.x2 - self.head.x2) == 1


class UnboundedColumnError(ValueError):
    """Raised when a column height is requested for an infinite column."""


def _check_site(x1, x2) -> None:
    if x2 < 0:
        raise ValueError(f"site ({x1},{x2}) lies below the floor")


class SiteSet:
    """Immutable obstacle set B, stored column-wise.

    The canonical representation keeps, per column x1, the largest h such
    that the full run of sites (x1,1)..(x1,h) belongs to the set, plus a
    flag for whether (x1,0) is included, plus sparse extra sites that sit
    strictly above their column run. Columns may be marked infinite
    (math.inf) by generators that describe regions such as wedges; those
    are materialized lazily against a window.

    Treat instances as immutable; all methods return new objects.
    """

    __slots__ = ("_heights", "_floored", "_extras")

    def __init__(
        self,
        heights: dict[int, int | float] | None = None,
        extras: Iterable[tuple[int, int]] = (),
        floored: Iterable[int] = (),
    ):
        hs: dict[int, int | float] = {}
        for x1, h in (heights or {}).items():
            if h == math.inf:
                hs[int(x1)] = math.inf
                continue
            h = int(h)
            if h < 0:
                raise ValueError(f"negative run height {h} in column {x1}")
            if h >= 1:
                hs[int(x1)] = h
        fl = set(int(c) for c in floored)
        ex = set()
        for x1, x2 in extras:
            _check_site(x1, x2)
            x1, x2 = int(x1), int(x2)
            if x2 == 0:
                fl.add(x1)
            else:
                ex.add((x1, x2))
        # absorb extras that extend a run contiguously, so column_height is
        # the true largest h with (x1,1..h) all present
        changed = True
        while changed:
            changed = False
            for x1, x2 in list(ex):
                run = hs.get(x1, 0)
                if run != math.inf and x2 == run + 1:
                    hs[x1] = x2
                    ex.discard((x1, x2))
                    changed = True
        # drop extras already covered by runs
        for x1, x2 in list(ex):
            run = hs.get(x1, 0)
            if run == math.inf or x2 <= run:
                ex.discard((x1, x2))
        self._heights = hs
        self._floored = frozenset(fl)
        self._extras = frozenset(ex)

    # -- constructors ---------------------------------------------------

    @classmethod
    def empty(cls) -> "SiteSet":
        return cls()

    @classmethod
    def from_sites(cls, sites: Iterable[tuple[int, int] | Site]) -> "SiteSet":
        cols: dict[int, set[int]] = {}
        floored = []
        for s in sites:
            x1, x2 = int(s[0]), int(s[1])
            _check_site(x1, x2)
            if x2 == 0:
                floored.append(x1)
            else:
                cols.setdefault(x1, set()).add(x2)
        heights: dict[int, int | float] = {}
        extras = []
        for x1, hs in cols.items():
            run = 0
            while run + 1 in hs:
                run += 1
            if run:
                heights[x1] = run
            extras.extend((x1, h) for h in hs if h > run)
        return cls(heights, extras, floored)

    # -- queries ---------------------------------------------------------

    def __contains__(self, site) -> bool:
        x1, x2 = int(site[0]), int(site[1])
        if x2 < 0:
            return False
        if x2 == 0:
            return x1 in self._floored
        run = self._heights.get(x1, 0)
        if run == math.inf or x2 <= run:
            return True
        return (x1, x2) in self._extras

    contains = __contains__

    @property
    def is_empty(self) -> bool:
        return not (self._heights or self._floored or self._extras)

    def column_height(self, x1: int) -> int:
        """Largest h with the whole run (x1,1)..(x1,h) in the set (0 if none)."""
        run = self._heights.get(int(x1), 0)
        if run == math.inf:
            raise UnboundedColumnError(f"column {x1} is marked infinite")
        return run

    def columns(self) -> dict[int, int | float]:
        return dict(self._heights)

    @property
    def extras(self) -> frozenset[tuple[int, int]]:
        return self._extras

    @property
    def floored_columns(self) -> frozenset[int]:
        return self._floored

    def has_unbounded_column(self) -> bool:
        return any(h == math.inf for h in self._heights.values())

    def max_height_in(self, x1_lo: int, x1_hi: int, cap: int | None = None) -> int:
        """Max x2 over set sites with x1 in [x1_lo, x1_hi].

        Infinite columns report `cap` (required if any are present).
        """
        best = 0
        for x1, h in self._heights.items():
            if x1_lo <= x1 <= x1_hi:
                if h == math.inf:
                    if cap is None:
                        raise UnboundedColumnError("unbounded column in range; pass cap")
                    best = max(best, cap)
                else:
                    best = max(best, h)
        for x1, x2 in self._extras:
            if x1_lo <= x1 <= x1_hi:
                best = max(best, x2)
        return best

    def sites(self, window: Window) -> Iterator[Site]:
        """Iterate set sites inside the inclusive window, ordered by (x2, x1)."""
        x1_lo, x1_hi, x2_lo, x2_hi = window
        out = []
        for x1 in self._floored:
            if x1_lo <= x1 <= x1_hi and x2_lo <= 0 <= x2_hi:
                out.append(Site(x1, 0))
        for x1, h in self._heights.items():
            if not (x1_lo <= x1 <= x1_hi):
                continue
            top = x2_hi if h == math.inf else min(int(h), x2_hi)
            for x2 in range(max(1, x2_lo), top + 1):
                out.append(Site(x1, x2))
        for x1, x2 in self._extras:
            if x1_lo <= x1 <= x1_hi and x2_lo <= x2 <= x2_hi:
                out.append(Site(x1, x2))
        out.sort(key=lambda s: (s.x2, s.x1))
        return iter(out)

    def count_in(self, window: Window) -> int:
        return sum(1 for _ in self.sites(window))

    def raster(self, window: Window) -> np.ndarray:
        """Boolean occupancy array, shape (x2_hi-x2_lo+1, x1_hi-x1_lo+1).

        Row index r corresponds to x2 = x2_lo + r, column index c to
        x1 = x1_lo + c. Sites outside the window are simply not
        represented; callers treat them as vacant (valid whenever the
        set is materialized at least as wide as the working window).
        """
        x1_lo, x1_hi, x2_lo, x2_hi = window
        grid = np.zeros((x2_hi - x2_lo + 1, x1_hi - x1_lo + 1), dtype=bool)
        if x2_lo <= 0 <= x2_hi:
            for x1 in self._floored:
                if x1_lo <= x1 <= x1_hi:
                    grid[0 - x2_lo, x1 - x1_lo] = True
        for x1, h in self._heights.items():
            if not (x1_lo <= x1 <= x1_hi):
                continue
            top = x2_hi if h == math.inf else min(int(h), x2_hi)
            lo = max(1, x2_lo)
            if top >= lo:
                grid[lo - x2_lo : top - x2_lo + 1, x1 - x1_lo] = True
        for x1, x2 in self._extras:
            if x1_lo <= x1 <= x1_hi and x2_lo <= x2 <= x2_hi:
                grid[x2 - x2_lo, x1 - x1_lo] = True
        return grid

    def outer_boundary(self, window: Window, include_floor: bool = False) -> list[Site]:
        """Vacant window sites adjacent to the set, ordered by (x2, x1).

        Floor sites (x2 == 0) are excluded unless include_floor; adjacency
        is tested against the full set, not just its windowed part.
        """
        x1_lo, x1_hi, x2_lo, x2_hi = window
        found = set()
        for s in self.sites((x1_lo - 1, x1_hi + 1, max(0, x2_lo - 1), x2_hi + 1)):
            for nb in s.neighbors():
                if nb.x2 < 0 or nb in self:
                    continue
                if not (x1_lo <= nb.x1 <= x1_hi and x2_lo <= nb.x2 <= x2_hi):
                    continue
                if nb.x2 == 0 and not include_floor:
                    continue
                found.add(nb)
        return sorted(found, key=lambda s: (s.x2, s.x1))

    def shift(self, d: int) -> "SiteSet":
        """Translate the whole set laterally by d."""
        return SiteSet(
            {x1 + d: h for x1, h in self._heights.items()},
            [(x1 + d, x2) for x1, x2 in self._extras],
            [x1 + d for x1 in self._floored],
        )

    def union(self, other: "SiteSet") -> "SiteSet":
        if other.has_unbounded_column() and self.has_unbounded_column():
            merged: dict[int, int | float] = dict(self._heights)
            for x1, h in other._heights.items():
                cur = merged.get(x1, 0)
                merged[x1] = math.inf if math.inf in (h, cur) else max(cur, h)
            return SiteSet(
                merged,
                list(self._extras) + list(other._extras),
                list(self._floored) + list(other._floored),
            )
        heights: dict[int, int | float] = dict(self._heights)
        for x1, h in other._heights.items():
            cur = heights.get(x1, 0)
            heights[x1] = math.inf if math.inf in (h, cur) else max(cur, h)
        return SiteSet(
            heights,
            list(self._extras) + list(other._extras),
            list(self._floored) + list(other._floored),
        )

    # -- equality / repr --------------------------------------------------

    def _key(self):
        return (
            tuple(sorted(self._heights.items())),
            tuple(sorted(self._extras)),
            tuple(sorted(self._floored)),
        )

    def __eq__(self, other):
        return isinstance(other, SiteSet) and self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        n_runs = len(self._heights)
        return f"SiteSet({n_runs} columns, {len(self._extras)} extras, {len(self._floored)} floored)"


# -- text format -----------------------------------------------------------
#
#   # comment
#   col <x1> <h>        full run (x1,1)..(x1,h); h = inf allowed
#   site <x1> <x2>      single site
#
# Round-trips losslessly through SiteSet's canonical form.


def format_set_text(s: SiteSet, header: str | None = None) -> str:
    lines = []
    if header:
        for ln in header.splitlines():
            lines.append(f"# {ln}")
    for x1 in sorted(s.columns()):
        h = s.columns()[x1]
        lines.append(f"col {x1} {'inf' if h == math.inf else int(h)}")
    for x1 in sorted(s.floored_columns):
        lines.append(f"site {x1} 0")
    for x1, x2 in sorted(s.extras):
        lines.append(f"site {x1} {x2}")
    return "\n".join(lines) + "\n"


def parse_set_text(text: str) -> SiteSet:
    heights: dict[int, int | float] = {}
    extras: list[tuple[int, int]] = []
    floored: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "col" and len(parts) == 3:
                x1 = int(parts[1])
                h = math.inf if parts[2] in ("inf", "Inf", "INF") else int(parts[2])
                heights[x1] = h
            elif parts[0] == "site" and len(parts) == 3:
                x1, x2 = int(parts[1]), int(parts[2])
                if x2 == 0:
                    floored.append(x1)
                else:
                    extras.append((x1, x2))
            else:
                raise ValueError
        except ValueError:
            raise ValueError(f"bad set line {lineno}: {raw!r}") from None
    return SiteSet(heights, extras, floored)


# -- RNG handle --------------------------------------------------------------


@dataclass
class RngStream:
    """Seeded, named RNG stream.

    (seed, stream) fully determines the generated sequence. substream(k)
    derives an independent child stream; the derivation is stable across
    runs, platforms, and worker counts.
    """

    seed: int
    stream: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def generator(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
            self._gen = np.random.Generator(np.random.Philox(ss))
        return self._gen

    def substream(self, k: int) -> "RngStream":
        # fold k into a fresh stream id rather than chaining spawn keys, so
        # the object stays a flat (seed, stream) pair as specified
        mixed = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream, int(k))
        ).generate_state(1, dtype=np.uint64)[0]
        return RngStream(seed=self.seed, stream=int(mixed))

    def child_sequence(self, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream, *key))


def as_stream(rng: "RngStream | int | None", default_seed: int = 0) -> RngStream:
    if rng is None:
        return RngStream(default_seed)
    if isinstance(rng, RngStream):
        return rng
    return RngStream(int(rng))
