"""Generators for the obstacle-set families used throughout, plus file IO
and a growth-class probe.

Three families come up again and again:

* the dyadic counterexample set (columns of height 2^|n|),
* the wedge below a line of slope c (the blocking set of the decay
  argument),
* sets dominated by a power envelope x2 <= |x1|^(1/alpha) up to finitely
  many exceptional sites.

Infinite families are materialized by predicate within a half-width;
callers pick the half-width to cover their solve window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from .lattice import Site, SiteSet, Window, format_set_text, parse_set_text

__all__ = [
    "make_counterexample",
    "make_wedge",
    "make_power_envelope",
    "load_set",
    "save_set",
    "classify_growth",
    "GrowthClass",
]

# classify_growth knobs. The sublinear fit accepts only exponents clearly
# above 1 (alpha_hat >= SUBLINEAR_MIN_ALPHA) backed by at least
# SUBLINEAR_MIN_EVIDENCE columns of height >= 2; near-linear profiles such
# as a gappy wedge fit alpha_hat -> 1 and must fall through to
# indeterminate rather than masquerade as sublinear.
SUBLINEAR_MIN_ALPHA = 1.1
SUBLINEAR_MIN_EVIDENCE = 3
SUPERLINEAR_C_CANDIDATES = (
    Fraction(1),
    Fraction(1, 2),
    Fraction(2),
    Fraction(1, 4),
    Fraction(4),
)


def make_counterexample(n_max: int) -> SiteSet:
    """Dyadic column set: columns at |n| <= n_max of height 2^|n|, floor included.

    The union formula starts each column at x2 = 0, so the floor sites
    under the columns belong to the set as well.
    """
    n_max = int(n_max)
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    if n_max > 4096:
        # 2^n keeps exact integer arithmetic, but multi-kilobyte heights per
        # column stop being useful long before this
        raise OverflowError("2^n_max exceeds the practical range")
    heights = {n: 2 ** abs(n) for n in range(-n_max, n_max + 1)}
    return SiteSet(heights, floored=range(-n_max, n_max + 1))


def make_wedge(c, M: int = 1, half_width: int = 0) -> SiteSet:
    """Wedge strictly below the lines x2 = c*|x1|: sites with 1 <= x2 < c|x1|.

    c is taken exactly as a rational. M is the growth offset carried with
    the family (the inequality h >= c'|x1| holds from |x1| >= M on for the
    classifier's fitted c', roughly c/2 because of the strict cut).
    half_width bounds the materialized columns.
    """
    c = Fraction(c)
    if c <= 0:
        raise ValueError("slope c must be > 0")
    if int(M) < 1:
        raise ValueError("growth offset M must be >= 1")
    half_width = int(half_width)
    heights: dict[int, int] = {}
    for x1 in range(-half_width, half_width + 1):
        # largest integer strictly below c*|x1|
        h = math.ceil(c * abs(x1)) - 1
        if h >= 1:
            heights[x1] = h
    return SiteSet(heights)


def _env_height(x1: int, alpha) -> int:
    """floor(|x1|^(1/alpha)), integer-exact for rational alpha."""
    x = abs(int(x1))
    if x <= 1:
        return x
    fa = Fraction(alpha)
    if fa.denominator <= 64 and fa.numerator <= 64:
        p, q = fa.numerator, fa.denominator
        # largest h with h^p <= x^q
        target = x**q
        h = int(round(x ** (1.0 / float(fa))))
        while h**p > target:
            h -= 1
        while (h + 1) ** p <= target:
            h += 1
        return h
    return int(x ** (1.0 / float(alpha)) * (1 + 1e-12))


def make_power_envelope(alpha, half_width: int, extras: Iterable = ()) -> SiteSet:
    """Sites with 1 <= x2 <= |x1|^(1/alpha) for |x1| <= half_width, plus extras.

    alpha > 1. Extras are arbitrary finite sites (the exceptional set);
    they may lie inside the envelope, in which case they are redundant.
    """
    if not Fraction(alpha) > 1:
        raise ValueError("alpha must be > 1")
    half_width = int(half_width)
    heights: dict[int, int] = {}
    for x1 in range(-half_width, half_width + 1):
        h = _env_height(x1, alpha)
        if h >= 1:
            heights[x1] = h
    ex = [(int(s[0]), int(s[1])) for s in extras]
    return SiteSet(heights, extras=ex)


def load_set(path) -> SiteSet:
    with open(path) as f:
        return parse_set_text(f.read())


def save_set(B: SiteSet, path) -> None:
    with open(path, "w") as f:
        f.write(format_set_text(B))


@dataclass(frozen=True)
class GrowthClass:
    """Outcome of the growth-class probe over a window.

    kind is "superlinear", "sublinear", or "indeterminate".
    superlinear carries witness constants (c, M): h_{x1} >= c|x1| checked
    at every window column with |x1| >= M. sublinear carries the fitted
    exponent alpha and the exceptional sites found above the fitted
    envelope. indeterminate carries a note describing what failed.
    """

    kind: str
    c: Fraction | None = None
    M: int | None = None
    alpha: float | None = None
    exceptional: tuple[Site, ...] = ()
    window: Window | None = None
    note: str = ""

    def __str__(self) -> str:
        if self.kind == "superlinear":
            return f"superlinear(c={self.c}, M={self.M})"
        if self.kind == "sublinear":
            ex = ", ".join(f"({s.x1},{s.x2})" for s in self.exceptional)
            return f"sublinear(alpha={self.alpha:.6g}, exceptional=[{ex}])"
        return f"indeterminate({self.note})"


def _window_columns(B: SiteSet, window: Window) -> dict[int, int]:
    """Column run heights over the window, capped at the window top."""
    x1_lo, x1_hi, _, x2_hi = window
    runs = B.columns()
    out = {}
    for x1 in range(x1_lo, x1_hi + 1):
        h = runs.get(x1, 0)
        out[x1] = x2_hi if h == math.inf else min(int(h), x2_hi)
    return out


def classify_growth(B: SiteSet, window: Window) -> GrowthClass:
    """Fit the column profile h_{x1} against linear and power envelopes.

    Sublinear is tried first: alpha_hat = 1 / max(ln h / ln |x1|) over
    window columns with |x1| >= 2 and h >= 2. Accepted when alpha_hat is
    clearly above 1 and at most a handful of sites poke above the fitted
    envelope (those are reported as the exceptional set). Otherwise the
    linear witnesses h >= c|x1| for |x1| >= M are tried over a fixed
    candidate ladder of slopes, smallest workable M first. Neither
    fitting -> indeterminate.
    """
    x1_lo, x1_hi, _, x2_hi = window
    if x1_hi - x1_lo < 2:
        raise ValueError("window too narrow to classify")
    cols = _window_columns(B, window)

    # -- power-envelope fit ------------------------------------------------
    ratios = []
    for x1, h in cols.items():
        if abs(x1) >= 2 and h >= 2:
            ratios.append(math.log(h) / math.log(abs(x1)))
    if len(ratios) >= SUBLINEAR_MIN_EVIDENCE and max(ratios) > 0:
        alpha_hat = 1.0 / max(ratios)
        if alpha_hat >= SUBLINEAR_MIN_ALPHA:
            exceptional = []
            for x1, h in sorted(cols.items()):
                cap = _float_env(abs(x1), alpha_hat)
                if h > cap:
                    exceptional.extend(Site(x1, k) for k in range(int(cap) + 1, h + 1))
            for x1, x2 in sorted(B.extras):
                if x1_lo <= x1 <= x1_hi and x2 <= x2_hi and x2 > _float_env(abs(x1), alpha_hat):
                    exceptional.append(Site(x1, x2))
            # floor sites always sit inside any envelope; nothing to scan there
            n_cols = len([h for h in cols.values() if h > 0]) or 1
            if len(exceptional) <= max(8, n_cols // 20):
                return GrowthClass(
                    kind="sublinear",
                    alpha=alpha_hat,
                    exceptional=tuple(exceptional),
                    window=window,
                )

    # -- linear witnesses ----------------------------------------------------
    hw = max(abs(x1_lo), abs(x1_hi))
    m_cap = max(1, min(8, hw // 4))
    for c in SUPERLINEAR_C_CANDIDATES:
        for M in range(1, m_cap + 1):
            ok = True
            for x1, h in cols.items():
                if abs(x1) < M:
                    continue
                if Fraction(h) < c * abs(x1):
                    ok = False
                    break
            if ok:
                return GrowthClass(kind="superlinear", c=c, M=M, window=window)

    return GrowthClass(
        kind="indeterminate",
        window=window,
        note="no linear witness on the candidate ladder; power fit rejected",
    )


def _float_env(x: int, alpha_hat: float) -> float:
    if x <= 0:
        return 0.0
    if x == 1:
        return 1.0
    # slack absorbs the float round trip through the fitted exponent
    return x ** (1.0 / alpha_hat) * (1 + 1e-9)
