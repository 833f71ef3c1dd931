"""Exact (grid) side of the measure computations.

Two linear problems are solved here, both by red-black SOR on numpy
arrays:

* the visit-density field m on a truncated window [-W,W] x [0,H]:
  m(y) = expected number of visits to y by independent walkers released
  from every vacant site of the source line L_N, before absorption on
  the obstacle or the floor. Point, edge and outer measures are linear
  functionals of m.

* first-hitting ("escape") probabilities u on a finite box with two
  absorbing families A (u=1) and B (u=0).

Boundary treatment of the window (boundary="exact", the default):

* top: the lid row H sits at or above both the source line and the
  obstacle's top (clipped at max(2N, 64) for very tall obstacles). An
  up-move from row H starts an excursion through the obstacle-free sky;
  its exact effect is a return to row H displaced by K ~ q, the
  closed-form excursion-displacement kernel. The lid balance therefore
  convolves the row with q. Displacements landing beyond the side walls
  are exchanged against the vacuum value 4H (exact when the outside is
  vacuum).
* sides: exact half-strip kernels close the walls: R (first-return
  distribution of walkers stepping out) and J (first-entry flux from the
  sources beyond the window). Both come from the vertical eigenmodes
  sin(w_j h), w_j = (2j+1) pi/(2H+1), decaying laterally with
  cosh(lam_j) = 2 - cos(w_j).

With an empty obstacle the composite reproduces m = 4*x2 identically at
any W and N, so truncation error vanishes there; with an obstacle the
only model error left is the height mix of walkers that leave the window
and return (the outside strip is modelled with a reflecting lid), second
order in practice. boundary="absorb" keeps the plain absorbing-to-loss
walls with a reflecting lid for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Sequence

import numpy as np

from .lattice import DirectedEdge, Site, SiteSet, Window
from .walk import jump_line_height, sky_jump_table

__all__ = [
    "TruncatedDomain",
    "ScalarField",
    "MeasureReport",
    "NotEnclosedError",
    "green_field",
    "exact_point_measure",
    "exact_edge_measure",
    "exact_hat_measure",
    "measure_report",
    "HittingField",
    "solve_hitting",
    "hitting_probability",
    "visits_line_exact",
    "converge_measure",
    "ConvergenceTable",
    "default_halfwidth",
    "sor_omega",
    "strip_closure_kernels",
]

DEFAULT_W_FACTOR = 8


def default_halfwidth(N: int, factor: int = DEFAULT_W_FACTOR) -> int:
    return factor * N


class NotEnclosedError(ValueError):
    """A hitting problem's box rows are not fully covered by targets."""


def sor_omega(nx: int, ny: int) -> float:
    """Near-optimal relaxation factor for a 5-point Laplacian on nx x ny."""
    rho = 0.5 * (math.cos(math.pi / (nx + 1)) + math.cos(math.pi / (ny + 1)))
    w = 2.0 / (1.0 + math.sqrt(max(1e-30, 1.0 - rho * rho)))
    return min(w, 1.997)


@dataclass(frozen=True)
class TruncatedDomain:
    """Finite window [-W, W] x [0, lid] with an obstacle set.

    N is the source line height, W the lateral half-width. The invariant
    W >= 2N keeps the window meaningfully wider than tall. lid is the top
    row of the window; by default it is placed just above the obstacle
    (never below N, capped at max(2N, 64)) so that the sky above it is
    obstacle-free and the excursion kernel applies exactly.
    """

    N: int
    W: int
    obstacle: SiteSet
    lid: int | None = None

    def __post_init__(self):
        if self.N < 1:
            raise ValueError(f"need N >= 1, got {self.N}")
        if self.W < 2 * self.N:
            raise ValueError(f"need W >= 2N, got W={self.W}, N={self.N}")
        if self.lid is None:
            object.__setattr__(self, "lid", jump_line_height(self.obstacle, self.N, self.W))
        if self.lid < self.N:
            raise ValueError(f"lid {self.lid} below the source line N={self.N}")

    @property
    def height(self) -> int:
        return self.lid

    @property
    def window(self) -> Window:
        return (-self.W, self.W, 0, self.height)

    def n_columns(self) -> int:
        return 2 * self.W + 1

    def col_index(self, x1: int) -> int:
        return x1 + self.W

    def in_window(self, site) -> bool:
        x1, x2 = site[0], site[1]
        return -self.W <= x1 <= self.W and 0 <= x2 <= self.height


def strip_closure_kernels(H: int, src_height: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact lateral-closure kernels for a vacuum half-strip of height H.

    Heights run 1..H, the floor absorbs, the top row reflects (lazy lid).
    Returns (R, J):

    R[h-1, g-1] : probability that a walker emitted sideways out of the
        window at height h first re-enters it at height g.
    J[g-1]      : total first-entry flux into the wall column at height g
        from the infinitely many unit sources at (d, src_height), d >= 1
        outside the window.

    Both follow from the vertical eigenmodes sin(w_j h),
    w_j = (2j+1) pi / (2H+1), with lateral decay e^{-lam_j},
    cosh(lam_j) = 2 - cos(w_j).
    """
    j = np.arange(H)
    w = (2 * j + 1) * np.pi / (2 * H + 1)
    lam = np.arccosh(2.0 - np.cos(w))
    decay = np.exp(-lam)
    h = np.arange(1, H + 1)
    sinM = np.sin(np.outer(w, h))  # (modes, heights)
    norm = 4.0 / (2 * H + 1)
    R = (sinM * (norm * decay)[:, None]).T @ sinM
    src_amp = np.sin(w * src_height)
    J = sinM.T @ (norm * decay / (1.0 - decay) * src_amp)
    return R, J


@dataclass
class ScalarField:
    """Converged visit-density field plus the bookkeeping needed for measures."""

    domain: TruncatedDomain
    values: np.ndarray  # (height+1, 2W+1); row r = height r
    free: np.ndarray  # boolean, same shape; True where m is an unknown
    source: np.ndarray  # same shape; 1.0 at vacant source-line sites
    boundary: str
    tol: float
    residual: float
    sweeps: int
    ghost_left: np.ndarray | None = None  # virtual column value, heights 1..H
    ghost_right: np.ndarray | None = None
    closure_J: np.ndarray | None = None
    overflow: np.ndarray | None = None  # per-column beyond-wall jump mass
    sky_in: np.ndarray | None = None  # per-column flux landing on the lid from above

    @property
    def source_count(self) -> float:
        return float(self.source.sum())

    def value_at(self, site) -> float:
        x1, x2 = int(site[0]), int(site[1])
        if not self.domain.in_window((x1, x2)):
            raise ValueError(f"site ({x1},{x2}) outside window of {self.domain}")
        return float(self.values[x2, self.domain.col_index(x1)])

    def is_absorbing(self, site) -> bool:
        x1, x2 = int(site[0]), int(site[1])
        if x2 == 0:
            return True
        return (x1, x2) in self.domain.obstacle

    def interior_residual(self) -> float:
        return self.residual

    def to_csv(self, path) -> None:
        dom = self.domain
        with open(path, "w") as f:
            f.write(f"# N={dom.N} W={dom.W} lid={dom.lid} boundary={self.boundary}\n")
            f.write(f"# sources={self.source_count} residual={self.residual:.3e}\n")
            f.write("x1,x2,value\n")
            H = dom.height
            for x2 in range(H + 1):
                row = self.values[x2]
                for c, v in enumerate(row):
                    if v != 0.0:
                        f.write(f"{c - dom.W},{x2},{v!r}\n")


def _absorbing_mask(dom: TruncatedDomain) -> np.ndarray:
    H, W = dom.height, dom.W
    mask = dom.obstacle.raster((-W, W, 0, H))
    mask[0, :] = True  # the floor
    return mask


def _lid_kernel(W: int, C: int) -> tuple[np.ndarray, int, int, np.ndarray, float]:
    """FFT-ready sky-jump kernel for a lid of C columns, plus overflow.

    Returns (Kf, ktr, P, overflow, q0):

    Kf       : rfft of the two-sided kernel, padded to P for linear
               convolution of a length-C row (displacements |k| <= ktr).
    overflow : per-column probability that a jump lands beyond a wall,
               overflow[j] = T(W - x1_j) + T(W + x1_j) with the one-sided
               tail T(s) = sum_{k > s} q[k]/2 of the renormalized table.
    q0       : atom at zero displacement (the lid self-loop weight).

    ktr = 2W covers every in-window displacement, so per-column in-window
    mass plus overflow is exactly 1.
    """
    q, _ = sky_jump_table()
    ktr = min(2 * W, len(q) - 1)
    kern = np.zeros(2 * ktr + 1)
    kern[ktr] = q[0]
    half = 0.5 * q[1 : ktr + 1]
    kern[ktr + 1 :] = half
    kern[ktr - 1 :: -1] = half
    P = 1 << int(C + 2 * ktr - 1).bit_length()
    Kf = np.fft.rfft(kern, P)
    suffix = np.concatenate((np.cumsum(q[::-1])[::-1], [0.0]))
    x1 = np.arange(C) - W
    s_r = np.minimum(W - x1 + 1, len(q))
    s_l = np.minimum(W + x1 + 1, len(q))
    overflow = 0.5 * (suffix[s_r] + suffix[s_l])
    return Kf, ktr, P, overflow, float(q[0])


def green_field(
    dom: TruncatedDomain,
    *,
    omega: float | str = "auto",
    tol: float | None = None,
    max_sweeps: int = 200_000,
    boundary: str = "exact",
    check_every: int = 32,
) -> ScalarField:
    """Solve the visit-density field on the truncated window.

    The converged field satisfies, at every non-absorbing site y,

        m(y) = source(y) + sum_{y' ~ y, y' non-absorbing} m(y') / 4

    with the lid and lateral closures folded into the neighbour sum.
    Under boundary="exact" an up-move from the lid row redistributes over
    the row by the excursion-displacement kernel q (a convolution), the
    part of a jump that clears a side wall is lost, and the matching
    inflow from the vacuum outside (lid value 4*H out there) is injected;
    the walls are closed by the half-strip kernels. source(y) = 1 exactly
    on the vacant sites of L_N inside the window. Residual is the
    max-norm of that balance.
    """
    if boundary not in ("exact", "absorb"):
        raise ValueError(f"unknown boundary mode {boundary!r}")
    H, W, N = dom.height, dom.W, dom.N
    C = dom.n_columns()
    absorbing = _absorbing_mask(dom)
    free = ~absorbing
    free[0, :] = False

    src = np.zeros((H + 1, C))
    src[N, free[N, :]] = 1.0
    n_src = float(src.sum())
    if tol is None:
        tol = 1e-12 * max(1.0, n_src)

    heights = np.arange(H + 1, dtype=float)
    m = np.where(free, 4.0 * heights[:, None], 0.0)

    diag = np.ones((H + 1, C))
    if boundary == "exact":
        R, J = strip_closure_kernels(H, N)
        Kf, ktr, P, ovf, q0 = _lid_kernel(W, C)
        lid_inject = 4.0 * H * ovf
        # lid self-loop: the q0 atom of the jump kernel
        diag[H, :] -= 0.25 * q0
    else:
        R = J = None
        ovf = None
        # mirror lid: an up-move from the top row is a self-loop
        diag[H, :] -= 0.25
    invd = 1.0 / diag

    if omega == "auto":
        w_relax = sor_omega(C, 2 * H + 1)
    else:
        w_relax = float(omega)

    cols = np.arange(C)
    parity = (heights[:, None].astype(int) + cols[None, :]) % 2
    masks = [free & (parity == 0), free & (parity == 1)]

    def lid_conv(row):
        return np.fft.irfft(np.fft.rfft(row, P) * Kf, P)[ktr : ktr + C]

    def neighbor_sum(arr):
        S = np.zeros_like(arr)
        S[1:, :] += arr[:-1, :]
        S[:-1, :] += arr[1:, :]
        S[:, 1:] += arr[:, :-1]
        S[:, :-1] += arr[:, 1:]
        if boundary == "exact":
            row = arr[H, :]
            S[H, :] += lid_conv(row) - q0 * row + lid_inject
            gL = R.T @ arr[1:, 0] + 4.0 * J
            gR = R.T @ arr[1:, -1] + 4.0 * J
            S[1:, 0] += gL
            S[1:, -1] += gR
        return S

    def residual_of(arr):
        S = neighbor_sum(arr)
        e = diag * arr - src - 0.25 * S
        return float(np.abs(np.where(free, e, 0.0)).max())

    res = residual_of(m)
    sweeps = 0
    while res > tol and sweeps < max_sweeps:
        for chunk in range(check_every):
            for mask in masks:
                S = neighbor_sum(m)
                upd = invd * (src + 0.25 * S)
                np.copyto(m, m + w_relax * (upd - m), where=mask)
        sweeps += check_every
        res = residual_of(m)

    if res > tol:
        raise RuntimeError(
            f"SOR failed to reach tol={tol:.2e} in {sweeps} sweeps (residual {res:.2e})"
        )

    gL = gR = sky = None
    if boundary == "exact":
        gL = R.T @ m[1:, 0] + 4.0 * J
        gR = R.T @ m[1:, -1] + 4.0 * J
        sky = lid_conv(m[H, :]) + lid_inject

    return ScalarField(
        domain=dom,
        values=m,
        free=free,
        source=src,
        boundary=boundary,
        tol=tol,
        residual=res,
        sweeps=sweeps,
        ghost_left=gL,
        ghost_right=gR,
        closure_J=J,
        overflow=ovf,
        sky_in=sky,
    )


# -- measures from a converged field ----------------------------------------


def _require_absorbing(fld: ScalarField, site: Site) -> None:
    if not fld.domain.in_window(site):
        raise ValueError(f"site {tuple(site)} is outside the window")
    if not fld.is_absorbing(site):
        raise ValueError(f"site {tuple(site)} is neither on the floor nor in the obstacle")


def exact_point_measure(fld: ScalarField, site) -> float:
    """Measure of one absorbing site: total converged flux into it.

    Flux arrives from in-window non-absorbing neighbours (m/4 each); for
    wall-column sites under the exact closure, from the virtual outside
    column (ghost/4); and for lid-row sites, from sky jumps landing there
    (sky_in/4).
    """
    site = Site(int(site[0]), int(site[1]))
    _require_absorbing(fld, site)
    dom = fld.domain
    total = 0.0
    for nb in site.neighbors():
        if nb.x2 < 0 or not dom.in_window(nb):
            continue
        total += fld.values[nb.x2, dom.col_index(nb.x1)] / 4.0
    if fld.boundary == "exact" and abs(site.x1) == dom.W and site.x2 >= 1:
        ghost = fld.ghost_left if site.x1 == -dom.W else fld.ghost_right
        total += ghost[site.x2 - 1] / 4.0
    if fld.boundary == "exact" and site.x2 == dom.height:
        total += fld.sky_in[dom.col_index(site.x1)] / 4.0
    return total


def exact_edge_measure(fld: ScalarField, edge: DirectedEdge) -> float:
    """Measure of a directed absorption edge tail->head: m(head)/4.

    head is the last free site of the reversed walk; tail must absorb.
    """
    tail, head = Site(*edge[0]), Site(*edge[1])
    e = DirectedEdge(tail, head)
    if not e.is_adjacent():
        raise ValueError(f"edge {e} is not a nearest-neighbour pair")
    if head.x2 < 0:
        raise ValueError(f"edge head {tuple(head)} lies below the floor")
    _require_absorbing(fld, tail)
    if not fld.domain.in_window(head):
        raise ValueError(f"edge head {tuple(head)} is outside the window")
    if fld.is_absorbing(head):
        return 0.0
    return fld.values[head.x2, fld.domain.col_index(head.x1)] / 4.0


def exact_hat_measure(fld: ScalarField, site) -> float:
    """Outer measure of a vacant site y next to the obstacle: deg_B(y) * m(y)/4."""
    y = Site(int(site[0]), int(site[1]))
    if not fld.domain.in_window(y):
        raise ValueError(f"site {tuple(y)} is outside the window")
    B = fld.domain.obstacle
    if y in B:
        raise ValueError(f"site {tuple(y)} belongs to the obstacle")
    deg = sum(1 for nb in y.neighbors() if nb.x2 >= 0 and nb in B)
    if deg == 0:
        raise ValueError(f"site {tuple(y)} has no obstacle neighbour")
    if y.x2 == 0:
        return 0.0  # the floor absorbs first; no walk enters B through y
    return deg * fld.values[y.x2, fld.domain.col_index(y.x1)] / 4.0


@dataclass
class MeasureReport:
    """Point/edge/outer measure tables plus conservation bookkeeping."""

    domain: TruncatedDomain
    boundary: str
    source_count: float
    tol: float
    residual: float
    point: list[tuple[Site, float]]
    edges: list[tuple[DirectedEdge, float]]
    hat: list[tuple[Site, float]]
    absorbed_total: float
    leaked: float

    @property
    def conservation_gap(self) -> float:
        return self.absorbed_total + self.leaked - self.source_count

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            dom = self.domain
            f.write(f"# N={dom.N} W={dom.W} boundary={self.boundary}\n")
            f.write(
                f"# sources={self.source_count} absorbed={self.absorbed_total!r}"
                f" leaked={self.leaked!r} residual={self.residual:.3e}\n"
            )
            f.write("kind,x1,x2,to_x1,to_x2,value\n")
            for s, v in self.point:
                f.write(f"point,{s.x1},{s.x2},,,{v!r}\n")
            for e, v in self.edges:
                f.write(f"edge,{e.tail.x1},{e.tail.x2},{e.head.x1},{e.head.x2},{v!r}\n")
            for s, v in self.hat:
                f.write(f"hat,{s.x1},{s.x2},,,{v!r}\n")


def measure_report(
    fld: ScalarField,
    *,
    sites: Iterable[Site] | None = None,
    with_edges: bool = True,
    with_hat: bool = True,
) -> MeasureReport:
    """Tabulate measures of absorbing sites (all in-window ones by default).

    Conservation: absorbed_total is the flux into every absorbing site of
    the window (floor included); leaked is the net lateral outflow. Their
    sum reproduces the source count up to solver tolerance.
    """
    dom = fld.domain
    m = fld.values
    H, W = dom.height, dom.W

    if sites is None:
        absorbing = _absorbing_mask(dom)
        rows, cols = np.nonzero(absorbing)
        site_list = [Site(int(c) - W, int(r)) for r, c in zip(rows, cols)]
        site_list.sort(key=lambda s: (s.x2, s.x1))
    else:
        site_list = [Site(int(s[0]), int(s[1])) for s in sites]

    point = [(s, exact_point_measure(fld, s)) for s in site_list]

    edges = []
    if with_edges:
        for s in site_list:
            for nb in s.neighbors():
                if nb.x2 < 0 or not dom.in_window(nb) or fld.is_absorbing(nb):
                    continue
                v = m[nb.x2, dom.col_index(nb.x1)] / 4.0
                if v != 0.0:
                    edges.append((DirectedEdge(s, nb), v))

    hat = []
    if with_hat and not dom.obstacle.is_empty:
        for y in dom.obstacle.outer_boundary((-W, W, 0, H)):
            hat.append((y, exact_hat_measure(fld, y)))

    # conservation: total absorbed flux vs sources, with net lateral leak
    absorbing = _absorbing_mask(dom)
    rows, cols = np.nonzero(absorbing)
    absorbed = 0.0
    for r, c in zip(rows, cols):
        absorbed += exact_point_measure(fld, Site(int(c) - W, int(r)))

    gross_out = float(m[1:, 0].sum() + m[1:, -1].sum()) / 4.0
    if fld.boundary == "exact":
        returned = float(fld.ghost_left.sum() + fld.ghost_right.sum()) / 4.0
        # ghost = R-returns + 4J; J entries are *injected* mass, not returns
        influx = 2.0 * float(fld.closure_J.sum())
        # sky: jumps clearing a wall leave; the vacuum outside injects back
        sky_out = float((m[H, :] * fld.overflow).sum()) / 4.0
        sky_in_total = float(H * fld.overflow.sum())
        leaked = gross_out - (returned - influx) - influx + sky_out - sky_in_total
    else:
        leaked = gross_out

    return MeasureReport(
        domain=dom,
        boundary=fld.boundary,
        source_count=fld.source_count,
        tol=fld.tol,
        residual=fld.residual,
        point=point,
        edges=edges,
        hat=hat,
        absorbed_total=absorbed,
        leaked=leaked,
    )


# -- finite-box hitting probabilities ---------------------------------------


MaskLike = "np.ndarray | Callable[[np.ndarray, np.ndarray], np.ndarray]"


def _as_mask(masklike, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    if isinstance(masklike, np.ndarray):
        if masklike.shape != X1.shape:
            raise ValueError("target mask shape does not match the box")
        return masklike.astype(bool)
    out = masklike(X1, X2)
    return np.asarray(out, dtype=bool)


@dataclass
class HittingField:
    """Solution u of the two-target first-hitting problem on a box."""

    box: Window
    values: np.ndarray  # (ny, nx)
    mask_a: np.ndarray
    mask_b: np.ndarray
    residual: float
    sweeps: int

    def value_at(self, site) -> float:
        x1, x2 = int(site[0]), int(site[1])
        x1_lo, x1_hi, x2_lo, x2_hi = self.box
        if not (x1_lo <= x1 <= x1_hi and x2_lo <= x2 <= x2_hi):
            raise ValueError(f"site ({x1},{x2}) outside box {self.box}")
        return float(self.values[x2 - x2_lo, x1 - x1_lo])

    def max_over(self, sites: Iterable) -> float:
        return max(self.value_at(s) for s in sites)


def solve_hitting(
    box: Window,
    target_a,
    target_b,
    *,
    omega: float | str = "auto",
    tol: float = 5e-13,
    max_sweeps: int = 200_000,
    check_every: int = 64,
) -> HittingField:
    """Probability u(z) of hitting A before B, walking freely on the box.

    target_a / target_b are boolean masks of the box (ny, nx) or callables
    of integer coordinate arrays (X1, X2). Overlaps resolve to B (ties are
    failures; first-entry events use strict inequality). The box's top and
    bottom rows must be fully covered by A u B; the lateral sides reflect,
    which is exact for laterally invariant problems and irrelevant when
    A u B encloses the start.
    """
    x1_lo, x1_hi, x2_lo, x2_hi = box
    nx, ny = x1_hi - x1_lo + 1, x2_hi - x2_lo + 1
    if nx < 1 or ny < 3:
        raise ValueError(f"degenerate box {box}")
    X1, X2 = np.meshgrid(np.arange(x1_lo, x1_hi + 1), np.arange(x2_lo, x2_hi + 1))
    Bm = _as_mask(target_b, X1, X2)
    Am = _as_mask(target_a, X1, X2) & ~Bm
    if not np.all(Am[0, :] | Bm[0, :]) or not np.all(Am[-1, :] | Bm[-1, :]):
        raise NotEnclosedError("box top/bottom rows must lie in A u B")

    free = ~(Am | Bm)
    u = np.where(Am, 1.0, 0.0)
    u[free] = 0.5

    diag = np.ones((ny, nx))
    diag[:, 0] -= 0.25  # reflecting side: ghost equals the column itself
    diag[:, -1] -= 0.25
    if nx == 1:
        diag[:, 0] = 0.5
    invd = 1.0 / diag

    if omega == "auto":
        w_relax = sor_omega(2 * nx + 1, ny)
    else:
        w_relax = float(omega)

    parity = (X1 + X2) % 2
    masks = [free & (parity == 0), free & (parity == 1)]

    def neighbor_sum(arr):
        S = np.zeros_like(arr)
        S[1:, :] += arr[:-1, :]
        S[:-1, :] += arr[1:, :]
        S[:, 1:] += arr[:, :-1]
        S[:, :-1] += arr[:, 1:]
        return S

    def residual_of(arr):
        S = neighbor_sum(arr)
        e = diag * arr - 0.25 * S
        return float(np.abs(np.where(free, e, 0.0)).max())

    res = residual_of(u)
    sweeps = 0
    while res > tol and sweeps < max_sweeps:
        for _ in range(check_every):
            for mask in masks:
                S = neighbor_sum(u)
                upd = invd * (0.25 * S)
                np.copyto(u, u + w_relax * (upd - u), where=mask)
        sweeps += check_every
        res = residual_of(u)
    if res > tol:
        raise RuntimeError(f"hitting solve stalled at residual {res:.2e} (tol {tol:.2e})")

    return HittingField(box=box, values=u, mask_a=Am, mask_b=Bm, residual=res, sweeps=sweeps)


def hitting_probability(box: Window, target_a, target_b, start) -> float:
    """u(start): probability of reaching A strictly before B from start."""
    fld = solve_hitting(box, target_a, target_b)
    start = Site(int(start[0]), int(start[1]))
    x1_lo, x1_hi, x2_lo, x2_hi = box
    if not (x1_lo <= start.x1 <= x1_hi and x2_lo <= start.x2 <= x2_hi):
        raise ValueError(f"start {tuple(start)} outside box")
    return fld.value_at(start)


# -- the 4N identity, exactly -------------------------------------------------


def visits_line_exact(N: int, start_height: int | None = None) -> float:
    """E[# visits to L_N before hitting L_0], from (anything, start_height).

    Lateral position is irrelevant by translation invariance, so the walk
    reduces to the lazy height chain: up 1/4, down 1/4, stay 1/2, with the
    reflecting top at N and absorption at 0. Solved directly; the value
    from the line itself is 4N.
    """
    if N < 1:
        raise ValueError("need N >= 1")
    h0 = N if start_height is None else int(start_height)
    if not 0 <= h0 <= N:
        raise ValueError(f"start height {h0} outside [0, {N}]")
    if h0 == 0:
        return 0.0
    Q = np.zeros((N, N))  # states 1..N
    for h in range(1, N + 1):
        i = h - 1
        if h < N:
            Q[i, i] = 0.5
            Q[i, i + 1] = 0.25
            if h > 1:
                Q[i, i - 1] = 0.25
        else:
            Q[i, i] = 0.75
            if N > 1:
                Q[i, i - 1] = 0.25
    rhs = np.zeros(N)
    rhs[N - 1] = 1.0
    v = np.linalg.solve(np.eye(N) - Q, rhs)
    return float(v[h0 - 1])


# -- convergence in N ----------------------------------------------------------


@dataclass
class ConvergenceTable:
    site: Site
    rows: list[dict]  # N, W, value, rel_diff
    converged: bool
    limit: float

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("N,W,value,rel_diff,converged\n")
            for r in self.rows:
                rd = "" if r["rel_diff"] is None else repr(r["rel_diff"])
                f.write(f"{r['N']},{r['W']},{r['value']!r},{rd},{int(self.converged)}\n")


def converge_measure(
    obstacle: SiteSet,
    site,
    *,
    schedule: Sequence[int] | None = None,
    w_factor: int = DEFAULT_W_FACTOR,
    eps_rel: float = 1e-3,
    w_eps_rel: float = 1e-4,
    max_w_doublings: int = 3,
    boundary: str = "exact",
) -> ConvergenceTable:
    """Point measure of `site` along a doubling schedule of source heights.

    For each N the width starts at w_factor*N and doubles until the value
    moves by less than w_eps_rel in relative terms. Converged means the
    last two N-doublings changed the value by less than eps_rel
    relatively.
    """
    site = Site(int(site[0]), int(site[1]))
    if schedule is None:
        schedule = [2**k for k in range(3, 9)]
    rows: list[dict] = []
    prev = None
    for N in schedule:
        if N <= site.x2:
            raise ValueError(f"schedule height {N} not above the site {tuple(site)}")
        W = default_halfwidth(N, w_factor)
        val = exact_point_measure(
            green_field(TruncatedDomain(N, W, obstacle), boundary=boundary), site
        )
        for _ in range(max_w_doublings):
            W2 = 2 * W
            val2 = exact_point_measure(
                green_field(TruncatedDomain(N, W2, obstacle), boundary=boundary), site
            )
            move = abs(val2 - val) / max(abs(val2), 1e-300)
            if move < w_eps_rel:
                break
            W, val = W2, val2
        rel = None if prev is None else abs(val - prev) / max(abs(val), 1e-300)
        rows.append({"N": N, "W": W, "value": val, "rel_diff": rel})
        prev = val
    diffs = [r["rel_diff"] for r in rows if r["rel_diff"] is not None]
    converged = len(diffs) >= 2 and all(d < eps_rel for d in diffs[-2:])
    return ConvergenceTable(site=site, rows=rows, converged=converged, limit=prev)
