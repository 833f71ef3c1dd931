"""Command line front end: `hm <subcommand> ...`.

Every operation of the package is reachable here. With --out DIR a run
also captures itself to files: run.json holds the configuration (the
argv with the --out pair removed, so the same command into a fresh
directory reproduces every byte), plus the seed and version stamps; the
data lands in per-subcommand CSVs whose columns are documented in each
subcommand's --help. Plots are emitted as a CSV plus a generated
standalone matplotlib script, never an interactive window.

Exit codes: 0 success; 1 error; 2 a verify-style subcommand ran fine
but a check failed; 64 usage.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .growth import (
    GrowthState,
    harmonic_growth_step,
    height_bound_check,
    positivity_probe,
    simulate_sqrt_process,
)
from .lattice import Site, SiteSet
from .setgen import (
    classify_growth,
    load_set,
    make_counterexample,
    make_power_envelope,
    make_wedge,
    save_set,
)
from .solver import (
    TruncatedDomain,
    converge_measure,
    default_halfwidth,
    exact_edge_measure,
    exact_hat_measure,
    exact_point_measure,
    green_field,
    solve_hitting,
    visits_line_exact,
)
from .theorems import rectangle_escape_table, verify_thm1, verify_thm2
from .walk import (
    mc_edge_measure,
    mc_escape_probability,
    mc_hat_measure,
    mc_point_measure,
    mc_visits_to_line,
)

__all__ = ["run", "main", "parse_set_spec"]


class _Usage(Exception):
    """Bad flag combination caught after argparse."""


# -- small parsers -------------------------------------------------------------


def _site(text: str) -> Site:
    try:
        a, b = text.split(",")
        return Site(int(a), int(b))
    except Exception:
        raise _Usage(f"expected a site as x1,x2 (got {text!r})")


def _edge(text: str) -> tuple[Site, Site]:
    try:
        tail, head = text.split(":")
    except Exception:
        raise _Usage(f"expected an edge as x1,x2:y1,y2 (got {text!r})")
    return _site(tail), _site(head)


def _ints(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p != ""]
    except Exception:
        raise _Usage(f"expected a comma list of integers (got {text!r})")


def _box(text: str) -> tuple[int, int, int, int]:
    parts = _ints(text)
    if len(parts) != 4:
        raise _Usage(f"expected a box as x1lo,x1hi,x2lo,x2hi (got {text!r})")
    return tuple(parts)  # type: ignore[return-value]


def _extra_sites(text: str) -> list[tuple[int, int]]:
    out = []
    for pair in text.split(";"):
        if not pair:
            continue
        try:
            a, b = pair.split(":")
            out.append((int(a), int(b)))
        except Exception:
            raise _Usage(f"expected extras as x:y;x:y (got {text!r})")
    return out


def parse_set_spec(spec: str, half_width: int | None = None) -> SiteSet:
    """Build an obstacle set from a flat specifier string.

    Grammar: `empty` | `file:<path>` | `cex:nmax=K` | `wedge:c=<rat>[,m=M]`
    | `env:alpha=<rat>[,extras=x:y;x:y]`. Rationals accept `1/2`, `2`,
    `1.5`. The wedge and envelope families describe regions, so they
    need a half-width to materialize; pass the widest window the caller
    will solve on.
    """
    spec = spec.strip()
    if spec == "empty":
        return SiteSet.empty()
    head, _, rest = spec.partition(":")
    if head == "file":
        if not rest:
            raise _Usage("file: specifier needs a path")
        return load_set(rest)
    kv: dict[str, str] = {}
    if rest:
        for part in rest.split(","):
            k, eq, v = part.partition("=")
            if not eq:
                raise _Usage(f"malformed key=value {part!r} in set spec {spec!r}")
            kv[k.strip()] = v.strip()
    try:
        if head == "cex":
            return make_counterexample(int(kv.pop("nmax")))
        if head == "wedge":
            c = Fraction(kv.pop("c"))
            m = int(kv.pop("m", "1"))
            if half_width is None:
                raise _Usage("wedge: needs a window half-width to materialize")
            return make_wedge(c, m, half_width)
        if head == "env":
            alpha = Fraction(kv.pop("alpha"))
            extras = _extra_sites(kv.pop("extras", ""))
            if half_width is None:
                raise _Usage("env: needs a window half-width to materialize")
            return make_power_envelope(alpha, half_width, extras)
    except KeyError as missing:
        raise _Usage(f"set spec {spec!r} is missing {missing}")
    finally:
        if kv and head in ("cex", "wedge", "env"):
            raise _Usage(f"unknown keys {sorted(kv)} in set spec {spec!r}")
    raise _Usage(f"unknown set specifier {spec!r}")


# -- output capture ------------------------------------------------------------


def _strip_out(argv: list[str]) -> list[str]:
    out = []
    skip = False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


class _Capture:
    """Collects files for --out; silently inert when --out is absent."""

    def __init__(self, args: argparse.Namespace, argv: list[str]):
        self.dir = Path(args.out) if getattr(args, "out", None) else None
        self.args = args
        self.argv = argv

    def start(self, subcommand: str) -> None:
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "schema": 1,
            "tool": "hm",
            "subcommand": subcommand,
            "argv": _strip_out(self.argv),
            "seed": getattr(self.args, "seed", None),
            "threads": getattr(self.args, "threads", None),
            "versions": {
                "hmeasure": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
            },
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        (self.dir / "run.json").write_text(text)

    def write(self, name: str, text: str) -> None:
        if self.dir is not None:
            (self.dir / name).write_text(text)

    def path(self, name: str) -> Path | None:
        return None if self.dir is None else self.dir / name


def _rows_csv(rows: list[dict]) -> str:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    lines = [",".join(cols)]
    for r in rows:
        lines.append(",".join(_csv_cell(r.get(k, "")) for k in cols))
    return "\n".join(lines) + "\n"


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _series_plot(csv_name: str, xcol: str, ycol: str, logy: bool, title: str) -> str:
    png = csv_name.rsplit(".", 1)[0] + ".png"
    scale = 'ax.set_yscale("log")\n' if logy else ""
    return (
        '"""Generated plot script: reads the CSV next to it, writes a PNG."""\n'
        "import csv\n"
        "import matplotlib\n"
        'matplotlib.use("Agg")\n'
        "import matplotlib.pyplot as plt\n"
        "\n"
        "xs, ys = [], []\n"
        f"with open({csv_name!r}) as f:\n"
        "    for row in csv.DictReader(f):\n"
        f"        if row.get({xcol!r}) and row.get({ycol!r}):\n"
        f"            xs.append(float(row[{xcol!r}]))\n"
        f"            ys.append(float(row[{ycol!r}]))\n"
        "fig, ax = plt.subplots(figsize=(6, 4))\n"
        'ax.plot(xs, ys, "o-")\n'
        + scale
        + f"ax.set_xlabel({xcol!r})\n"
        f"ax.set_ylabel({ycol!r})\n"
        f"ax.set_title({title!r})\n"
        "ax.grid(True, alpha=0.3)\n"
        "fig.tight_layout()\n"
        f"fig.savefig({png!r}, dpi=150)\n"
        f'print("wrote", {png!r})\n'
    )


_CLUSTER_PLOT = (
    '"""Generated plot script: birth events colored by time."""\n'
    "import csv\n"
    "import matplotlib\n"
    'matplotlib.use("Agg")\n'
    "import matplotlib.pyplot as plt\n"
    "\n"
    "xs, ys, ts = [], [], []\n"
    "with open('events.csv') as f:\n"
    "    for row in csv.DictReader(f):\n"
    "        xs.append(int(row['x1']))\n"
    "        ys.append(int(row['x2']))\n"
    "        ts.append(float(row['t']))\n"
    "fig, ax = plt.subplots(figsize=(7, 4))\n"
    "sc = ax.scatter(xs, ys, c=ts, s=14, marker='s', cmap='viridis')\n"
    "fig.colorbar(sc, ax=ax, label='birth time')\n"
    "ax.set_xlabel('x1')\n"
    "ax.set_ylabel('x2')\n"
    "ax.set_title('grown cluster')\n"
    "fig.tight_layout()\n"
    "fig.savefig('cluster.png', dpi=150)\n"
    "print('wrote cluster.png')\n"
)

_RECT_PLOT = (
    '"""Generated plot script: worst-start escape vs stacking count."""\n'
    "import csv\n"
    "import matplotlib\n"
    'matplotlib.use("Agg")\n'
    "import matplotlib.pyplot as plt\n"
    "\n"
    "series = {}\n"
    "with open('rect.csv') as f:\n"
    "    for row in csv.DictReader(f):\n"
    "        if row.get('k') and row.get('n') and row.get('p_worst'):\n"
    "            series.setdefault(row['k'], []).append(\n"
    "                (int(row['n']), float(row['p_worst'])))\n"
    "fig, ax = plt.subplots(figsize=(6, 4))\n"
    "for k, pts in sorted(series.items(), key=lambda kv: int(kv[0])):\n"
    "    pts.sort()\n"
    "    ax.plot([p[0] for p in pts], [p[1] for p in pts], 'o-', label=f'k={k}')\n"
    "ax.set_yscale('log')\n"
    "ax.set_xlabel('n')\n"
    "ax.set_ylabel('worst-start escape probability')\n"
    "ax.legend()\n"
    "ax.grid(True, alpha=0.3)\n"
    "fig.tight_layout()\n"
    "fig.savefig('rect.png', dpi=150)\n"
    "print('wrote rect.png')\n"
)


# -- handlers ------------------------------------------------------------------


def _cmd_measure(args, cap: _Capture) -> int:
    chosen = [k for k in ("x", "edge", "hat") if getattr(args, k) is not None]
    if len(chosen) != 1:
        raise _Usage("pass exactly one of --x, --edge, --hat")
    kind = chosen[0]
    N = args.N
    W = args.w if args.w is not None else (
        default_halfwidth(N) if args.method == "exact" else 16 * N + 64
    )
    B = parse_set_spec(args.set, half_width=W)

    to1 = to2 = ""
    stderr = ""
    chains = ""
    if args.method == "exact":
        fld = green_field(TruncatedDomain(N, W, B), boundary=args.boundary)
        if kind == "x":
            s = _site(args.x)
            value = exact_point_measure(fld, s)
            x1, x2 = s.x1, s.x2
        elif kind == "edge":
            tail, head = _edge(args.edge)
            value = exact_edge_measure(fld, (tail, head))
            x1, x2, to1, to2 = tail.x1, tail.x2, head.x1, head.x2
        else:
            s = _site(args.hat)
            value = exact_hat_measure(fld, s)
            x1, x2 = s.x1, s.x2
        diag = f"residual={fld.residual:.3e} sweeps={fld.sweeps}"
    else:
        kw = dict(rng=args.seed, threads=args.threads)
        if args.w is not None:
            kw["halfwidth"] = args.w
        if kind == "x":
            s = _site(args.x)
            est = mc_point_measure(B, s, N, args.chains, **kw)
            x1, x2 = s.x1, s.x2
        elif kind == "edge":
            tail, head = _edge(args.edge)
            est = mc_edge_measure(B, (tail, head), N, args.chains, **kw)
            x1, x2, to1, to2 = tail.x1, tail.x2, head.x1, head.x2
        else:
            s = _site(args.hat)
            est = mc_hat_measure(B, s, N, args.chains, **kw)
            x1, x2 = s.x1, s.x2
        value, stderr, chains = est.mean, repr(est.stderr), args.chains
        diag = f"stderr={est.stderr:.3e} chains={args.chains}"

    label = {"x": "point", "edge": "edge", "hat": "hat"}[kind]
    print(f"{label}({x1},{x2}{':' + str(to1) + ',' + str(to2) if to1 != '' else ''})"
          f" = {value!r}   [{args.method}, N={N}, W={W}, {diag}]")
    cap.write(
        "measure.csv",
        "kind,x1,x2,to_x1,to_x2,method,N,W,boundary,value,stderr,chains\n"
        f"{label},{x1},{x2},{to1},{to2},{args.method},{N},{W},"
        f"{args.boundary if args.method == 'exact' else ''},{value!r},{stderr},{chains}\n",
    )
    return 0


def _cmd_converge(args, cap: _Capture) -> int:
    schedule = _ints(args.schedule) if args.schedule else None
    widest = args.w_factor * max(schedule or [256]) * 8
    B = parse_set_spec(args.set, half_width=widest)
    s = _site(args.x)
    table = converge_measure(
        B, s, schedule=schedule, w_factor=args.w_factor,
        eps_rel=args.eps_rel, boundary=args.boundary,
    )
    for r in table.rows:
        rd = "" if r["rel_diff"] is None else f"  rel_diff={r['rel_diff']:.3e}"
        print(f"N={r['N']:<5d} W={r['W']:<6d} value={r['value']!r}{rd}")
    print(f"converged={table.converged} limit={table.limit!r}")
    if cap.dir is not None:
        table.to_csv(cap.path("converge.csv"))
        cap.write("plot_converge.py",
                  _series_plot("converge.csv", "N", "value", False,
                               f"point measure at ({s.x1},{s.x2}) vs source height"))
    return 0


def _cmd_escape(args, cap: _Capture) -> int:
    start = _site(args.start)
    top, bottom = args.top, args.bottom
    if not bottom < start.x2 < top:
        raise _Usage(f"start height {start.x2} must lie strictly between "
                     f"bottom {bottom} and top {top}")
    hw = args.halfwidth if args.halfwidth is not None else 4 * (top - bottom)
    B = parse_set_spec(args.set, half_width=abs(start.x1) + hw)
    box = (start.x1 - hw, start.x1 + hw, bottom, top)
    raster = B.raster(box)
    nx = box[1] - box[0] + 1

    if args.method == "exact":
        def tb(X1, X2):
            inside = raster[np.clip(X2 - bottom, 0, raster.shape[0] - 1),
                            np.clip(X1 - box[0], 0, nx - 1)]
            return (X2 <= bottom) | inside

        fld = solve_hitting(box, lambda X1, X2: X2 >= top, tb)
        value = fld.value_at(start)
        stderr = ""
        print(f"P(reach L_{top} before L_{bottom} or the set) from "
              f"({start.x1},{start.x2}) = {value!r}   [exact, box {box}]")
    else:
        def tb(X1, X2):
            inside = ((X1 >= box[0]) & (X1 <= box[1]) & (X2 >= bottom) & (X2 <= top))
            hit = np.zeros(X1.shape, dtype=bool)
            if raster.any():
                hit[inside] = raster[X2[inside] - bottom, X1[inside] - box[0]]
            return (X2 <= bottom) | hit

        est = mc_escape_probability(
            start, lambda X1, X2: X2 >= top, tb,
            args.chains, args.seed, threads=args.threads,
        )
        value, stderr = est.mean, repr(est.stderr)
        print(f"P(reach L_{top} before L_{bottom} or the set) from "
              f"({start.x1},{start.x2}) = {est.mean!r} +/- {est.stderr:.3e}"
              f"   [mc, {args.chains} chains]")
    cap.write(
        "escape.csv",
        "start_x1,start_x2,top,bottom,halfwidth,method,value,stderr,chains\n"
        f"{start.x1},{start.x2},{top},{bottom},{hw},{args.method},{value!r},{stderr},"
        f"{args.chains if args.method == 'mc' else ''}\n",
    )
    return 0


def _cmd_visits(args, cap: _Capture) -> int:
    N = args.N
    if args.method == "exact":
        if args.set != "empty":
            raise _Usage("exact visits use the obstacle-free line identity; "
                         "pass --method mc for a nonempty set")
        value = visits_line_exact(N)
        stderr = ""
        print(f"visits to L_{N} before the floor, from the line itself: "
              f"{value!r} (identity value {4 * N})")
    else:
        B = parse_set_spec(args.set, half_width=16 * N + 64)
        est = mc_visits_to_line(N, args.chains, args.seed,
                                obstacle=B, threads=args.threads)
        value, stderr = est.mean, repr(est.stderr)
        print(f"visits to L_{N} before the floor: {est.mean!r} +/- {est.stderr:.3e}"
              f" (vacuum identity {4 * N})")
    cap.write(
        "visits.csv",
        "N,method,value,stderr,identity\n"
        f"{N},{args.method},{value!r},{stderr},{4 * N}\n",
    )
    return 0


def _cmd_gen_set(args, cap: _Capture) -> int:
    B = parse_set_spec(args.spec, half_width=args.half_width)
    target = cap.path(args.file) or Path(args.file)
    save_set(B, target)
    hw = args.half_width if args.half_width is not None else 64
    count = B.count_in((-hw, hw, 0, 4 * hw + 4))
    print(f"wrote {target} ({count} sites within half-width {hw})")
    return 0


def _cmd_classify(args, cap: _Capture) -> int:
    window = _box(args.window)
    B = parse_set_spec(args.set, half_width=max(abs(window[0]), abs(window[1])))
    cls = classify_growth(B, window)
    print(str(cls))
    exc = ";".join(f"{s.x1}:{s.x2}" for s in cls.exceptional)
    cap.write(
        "classify.csv",
        "kind,c,M,alpha,n_exceptional,exceptional,window,note\n"
        f"{cls.kind},{cls.c if cls.c is not None else ''},"
        f"{cls.M if cls.M is not None else ''},"
        f"{cls.alpha if cls.alpha is not None else ''},"
        f"{len(cls.exceptional)},{exc},"
        f"{'|'.join(str(v) for v in window)},{cls.note}\n",
    )
    return 0


def _verify_common(rep, cap: _Capture, csv_name: str, plot: tuple | None) -> int:
    print(rep.to_text())
    cap.write("report.json", rep.to_json() + "\n")
    cap.write(csv_name, _rows_csv(rep.rows))
    if plot is not None:
        xcol, ycol, logy, title = plot
        cap.write("plot_" + csv_name.rsplit(".", 1)[0] + ".py",
                  _series_plot(csv_name, xcol, ycol, logy, title))
    return 0 if rep.passed else 2


def _cmd_verify_thm1(args, cap: _Capture) -> int:
    rep = verify_thm1(
        Fraction(args.c), n1=args.n1, k_max=args.kmax, method=args.method,
        family=args.family, w_factor=args.w_factor, chains=args.chains,
        rng=args.seed, threads=args.threads,
    )
    return _verify_common(rep, cap, "decay.csv",
                          ("N_k", "v_segment", True, "segment measure vs dyadic level"))


def _cmd_verify_thm2(args, cap: _Capture) -> int:
    rep = verify_thm2(
        Fraction(args.alpha),
        extras=_extra_sites(args.extras) if args.extras else (),
        schedule=_ints(args.schedule) if args.schedule else None,
        method=args.method, w_factor=args.w_factor,
        scaling_ks=tuple(_ints(args.scaling_ks)),
        chains=args.chains, rng=args.seed, threads=args.threads,
    )
    return _verify_common(rep, cap, "persistence.csv",
                          ("N", "v_B0", False, "base-set measure vs source height"))


def _cmd_rect(args, cap: _Capture) -> int:
    rep = rectangle_escape_table(
        _ints(args.ks), _ints(args.ns), method=args.method,
        chains=args.chains, rng=args.seed, threads=args.threads,
    )
    code = _verify_common(rep, cap, "rect.csv", None)
    cap.write("plot_rect.py", _RECT_PLOT)
    return code


def _cmd_grow(args, cap: _Capture) -> int:
    initial = None
    if args.initial != "empty":
        initial = parse_set_spec(args.initial, half_width=args.width // 2 + 1)
    st = simulate_sqrt_process(
        args.width, args.t_end, args.seed,
        initial=initial, policy=args.policy, max_events=args.max_events,
    )
    heights = st.column_heights()
    print(f"simulated to t={st.t:g}: {len(st.events)} events, "
          f"max column height {max(heights.values())}, policy {st.policy}")
    cap.write("events.csv", st.events_csv())
    from .lattice import format_set_text
    cap.write("final_set.txt", format_set_text(
        st.occupied, header=f"width={st.width} t={st.t!r} policy={st.policy}"))
    cap.write("plot_cluster.py", _CLUSTER_PLOT)
    return 0


def _cmd_dla_step(args, cap: _Capture) -> int:
    W = args.w if args.w is not None else default_halfwidth(args.N)
    B = parse_set_spec(args.set, half_width=W)
    step = harmonic_growth_step(
        B, args.N, window=_box(args.window) if args.window else None,
        w=args.w, rng=args.seed,
    )
    if step.frozen:
        print(f"frozen state: total intensity {step.total!r} over "
              f"{len(step.table)} boundary sites (window {step.window})")
    else:
        print(f"next site ({step.site.x1},{step.site.x2}); total intensity "
              f"{step.total!r} over {len(step.table)} boundary sites")
    cap.write("intensity.csv", step.table_csv())
    from .lattice import format_set_text
    cap.write("next_set.txt", format_set_text(
        step.next_set(), header=f"after one step at N={step.N}"))
    return 0


def _cmd_probe(args, cap: _Capture) -> int:
    box = _box(args.box) if args.box else None
    rows = []
    if args.set is not None:
        W = args.w if args.w is not None else default_halfwidth(args.N)
        B = parse_set_spec(args.set, half_width=W)
        st = GrowthState.from_set(B)
        reports = [positivity_probe(st, args.N, w=args.w, box=box)]
    else:
        times = [float(t) for t in args.times.split(",")]
        st = simulate_sqrt_process(args.width, max(max(times), args.t_end),
                                   args.seed, policy=args.policy)
        reports = [positivity_probe(st, args.N, w=args.w, t=t, box=box)
                   for t in times]
    for r in reports:
        print(str(r))
        rows.append({
            "t": r.t, "N": r.N, "W": r.W, "best": r.best,
            "arg_x1": "" if r.argmax is None else r.argmax.x1,
            "arg_x2": "" if r.argmax is None else r.argmax.x2,
            "n_checked": r.n_checked,
        })
    cap.write("probe.csv", _rows_csv(rows))
    return 0


def _cmd_height_bound(args, cap: _Capture) -> int:
    W = default_halfwidth(args.N, args.w_factor)
    B = parse_set_spec(args.set, half_width=2 * W)
    rep = height_bound_check(B, args.N, w_factor=args.w_factor,
                             stability_tol=args.stability_tol)
    print(str(rep))
    cap.write(
        "height_bound.csv",
        "N,N2,C,C2,rel_change,arg_x1,arg_x2,n_checked,empty\n"
        f"{rep.N},{rep.N2},"
        f"{'' if rep.C is None else repr(rep.C)},"
        f"{'' if rep.C2 is None else repr(rep.C2)},"
        f"{'' if rep.rel_change is None else repr(rep.rel_change)},"
        f"{'' if rep.argmax is None else rep.argmax.x1},"
        f"{'' if rep.argmax is None else rep.argmax.x2},"
        f"{rep.n_checked},{int(rep.empty)}\n",
    )
    return 0


# -- parser --------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, seed=True, threads=True) -> None:
    p.add_argument("--out", metavar="DIR",
                   help="capture run.json and output files into this directory")
    if seed:
        p.add_argument("--seed", type=int, default=0,
                       help="RNG seed for stochastic parts (default 0)")
    if threads:
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads for MC batches (default 1; "
                            "results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hm",
        description="Stationary harmonic measure toolkit: exact solves, "
                    "Monte Carlo checks, obstacle generators, statement "
                    "verifiers, and growth simulation.",
    )
    parser.add_argument("--version", action="version", version=f"hm {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="subcommand")
    sub.required = True

    p = sub.add_parser(
        "measure",
        help="measure of one site, directed edge, or outer site",
        description="Point measure (--x), directed absorption-edge measure "
                    "(--edge tail:head), or outer measure (--hat) of the set "
                    "from --set, at source height N. CSV columns: kind, x1, "
                    "x2, to_x1, to_x2, method, N, W, boundary, value, stderr, "
                    "chains. Units: expected absorbed walkers per unit source "
                    "density.")
    p.add_argument("--set", default="empty", help="obstacle specifier (default empty)")
    p.add_argument("--x", help="absorbing site x1,x2 for the point measure")
    p.add_argument("--edge", help="directed edge x1,x2:y1,y2 (tail absorbs)")
    p.add_argument("--hat", help="vacant boundary site x1,x2 for the outer measure")
    p.add_argument("--N", type=int, required=True, help="source line height")
    p.add_argument("--w", type=int, help="window half-width (default 8N exact, 16N+64 mc)")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--chains", type=int, default=100_000, help="MC chains (default 1e5)")
    p.add_argument("--boundary", choices=("exact", "absorb"), default="exact",
                   help="window closure for the exact solver")
    _add_common(p)
    p.set_defaults(func=_cmd_measure)

    p = sub.add_parser(
        "converge",
        help="point measure along a doubling schedule of source heights",
        description="Runs the height-doubling study of one site's measure. "
                    "CSV columns: N, W, value, rel_diff, converged.")
    p.add_argument("--set", required=True)
    p.add_argument("--x", required=True, help="absorbing site x1,x2")
    p.add_argument("--schedule", help="comma list of N values (default 8..256)")
    p.add_argument("--w-factor", type=int, default=8)
    p.add_argument("--eps-rel", type=float, default=1e-3)
    p.add_argument("--boundary", choices=("exact", "absorb"), default="exact")
    _add_common(p, seed=False, threads=False)
    p.set_defaults(func=_cmd_converge)

    p = sub.add_parser(
        "escape",
        help="probability of reaching a high line before a low one or the set",
        description="Two-target first-passage from --start: success is the "
                    "line x2=top, failure is x2<=bottom or touching the set. "
                    "CSV columns: start_x1, start_x2, top, bottom, halfwidth, "
                    "method, value, stderr, chains.")
    p.add_argument("--start", required=True, help="start site x1,x2")
    p.add_argument("--top", type=int, required=True)
    p.add_argument("--bottom", type=int, default=0)
    p.add_argument("--set", default="empty")
    p.add_argument("--halfwidth", type=int,
                   help="exact-box half-width around the start (default 4*(top-bottom))")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--chains", type=int, default=100_000)
    _add_common(p)
    p.set_defaults(func=_cmd_escape)

    p = sub.add_parser(
        "visits",
        help="expected visits to the source line before the floor",
        description="The line-visit identity (value 4N in vacuum). CSV "
                    "columns: N, method, value, stderr, identity.")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--set", default="empty", help="obstacle for the mc variant")
    p.add_argument("--chains", type=int, default=100_000)
    _add_common(p)
    p.set_defaults(func=_cmd_visits)

    p = sub.add_parser(
        "gen-set",
        help="materialize an obstacle family to a set text file",
        description="Writes the set named by --spec to a text file "
                    "(columns of heights plus sparse extras).")
    p.add_argument("--spec", required=True,
                   help="empty | file:PATH | cex:nmax=K | wedge:c=RAT[,m=M] | "
                        "env:alpha=RAT[,extras=x:y;x:y]")
    p.add_argument("--half-width", type=int,
                   help="materialization half-width (needed by wedge/env)")
    p.add_argument("--file", default="set.txt", help="output file name (default set.txt)")
    _add_common(p, seed=False, threads=False)
    p.set_defaults(func=_cmd_gen_set)

    p = sub.add_parser(
        "classify",
        help="growth classification of a set over a window",
        description="Reports sublinear / superlinear / indeterminate with "
                    "the fitted parameters. CSV columns: kind, c, M, alpha, "
                    "n_exceptional, exceptional, window, note.")
    p.add_argument("--set", required=True)
    p.add_argument("--window", required=True, help="box x1lo,x1hi,x2lo,x2hi")
    _add_common(p, seed=False, threads=False)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser(
        "verify-thm1",
        help="zero-measure decay engine for super-linear sets",
        description="Per-level escape bounds plus the geometric decay of the "
                    "segment measure. Exit 2 when a check fails. decay.csv "
                    "columns mirror the report rows.")
    p.add_argument("--c", required=True, help="slope (rational, e.g. 1/2)")
    p.add_argument("--n1", type=int, default=4)
    p.add_argument("--kmax", type=int, default=5)
    p.add_argument("--family", choices=("wedge", "cex"), default="wedge")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--chains", type=int, default=50_000)
    p.add_argument("--w-factor", type=int, default=8)
    _add_common(p)
    p.set_defaults(func=_cmd_verify_thm1)

    p = sub.add_parser(
        "verify-thm2",
        help="measure persistence for power-envelope sets",
        description="Base-set measure along an N schedule plus the two "
                    "scaling ingredients. Exit 2 when a check fails. "
                    "persistence.csv columns mirror the report rows.")
    p.add_argument("--alpha", required=True, help="envelope exponent (rational)")
    p.add_argument("--extras", help="exceptional sites x:y;x:y")
    p.add_argument("--schedule", help="comma list of N values (default 16,32,64,128)")
    p.add_argument("--scaling-ks", default="4,5,6")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--chains", type=int, default=50_000)
    p.add_argument("--w-factor", type=int, default=8)
    _add_common(p)
    p.set_defaults(func=_cmd_verify_thm2)

    p = sub.add_parser(
        "rect-lemma",
        help="stacked-rectangle escape table",
        description="Worst-start vertical-exit probabilities for boxes of "
                    "aspect n, with the monotonicity and stacking checks. "
                    "Exit 2 when a check fails. rect.csv columns: k, n, "
                    "p_worst, p_center.")
    p.add_argument("--ks", default="2,4,8")
    p.add_argument("--ns", default="1,2,3,4")
    p.add_argument("--method", choices=("exact", "mc"), default="exact")
    p.add_argument("--chains", type=int, default=20_000)
    _add_common(p)
    p.set_defaults(func=_cmd_rect)

    p = sub.add_parser(
        "grow",
        help="run the sqrt-height birth process",
        description="Exact event-driven simulation on a strip. events.csv "
                    "columns: t, x1, x2; the final configuration lands in "
                    "final_set.txt.")
    p.add_argument("--width", type=int, default=64, help="strip width in columns")
    p.add_argument("--t-end", type=float, default=5.0)
    p.add_argument("--policy", choices=("periodic", "frozen"), default="periodic")
    p.add_argument("--initial", default="empty",
                   help="starting set specifier (default: the strip floor)")
    p.add_argument("--max-events", type=int, default=1_000_000)
    _add_common(p, threads=False)
    p.set_defaults(func=_cmd_grow)

    p = sub.add_parser(
        "dla-step",
        help="one outer-measure growth step",
        description="Computes the intensity table over the set's outer "
                    "boundary (inside --window if given) and samples the "
                    "next growth site. intensity.csv columns: x1, x2, "
                    "intensity; the updated set lands in next_set.txt.")
    p.add_argument("--set", required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--w", type=int)
    p.add_argument("--window", help="growth box x1lo,x1hi,x2lo,x2hi")
    _add_common(p, threads=False)
    p.set_defaults(func=_cmd_dla_step)

    p = sub.add_parser(
        "probe",
        help="max point measure over an occupied configuration",
        description="Static form (--set) probes one configuration; dynamic "
                    "form simulates the sqrt process and probes it at "
                    "--times. probe.csv columns: t, N, W, best, arg_x1, "
                    "arg_x2, n_checked.")
    p.add_argument("--set", help="static configuration specifier")
    p.add_argument("--width", type=int, default=64, help="strip width (dynamic form)")
    p.add_argument("--t-end", type=float, default=5.0)
    p.add_argument("--times", default="0,1,5", help="probe times (dynamic form)")
    p.add_argument("--policy", choices=("periodic", "frozen"), default="periodic")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--w", type=int)
    p.add_argument("--box", help="restrict probed sites to x1lo,x1hi,x2lo,x2hi")
    _add_common(p, threads=False)
    p.set_defaults(func=_cmd_probe)

    p = sub.add_parser(
        "height-bound",
        help="fit C in measure <= C*sqrt(height) over a set",
        description="Fits the constant at N and 2N and reports stability. "
                    "height_bound.csv columns: N, N2, C, C2, rel_change, "
                    "arg_x1, arg_x2, n_checked, empty.")
    p.add_argument("--set", required=True)
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--w-factor", type=int, default=8)
    p.add_argument("--stability-tol", type=float, default=0.5)
    _add_common(p, seed=False, threads=False)
    p.set_defaults(func=_cmd_height_bound)

    return parser


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        code = e.code if isinstance(e.code, int) else 1
        return 0 if code == 0 else 64
    cap = _Capture(args, argv)
    try:
        cap.start(args.subcommand)
        return args.func(args, cap)
    except _Usage as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 64
    except Exception as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
