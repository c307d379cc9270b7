"""Command-line entry point.

    layersphere validate SCENARIO
    layersphere run SCENARIO --engine both --out DIR
    layersphere sweep SCENARIO --out DIR [--layer 3 --porosities 0.1697,0.1,0.05]
    layersphere example desk-internal --out scenario.json

Exit codes: 0 success, 1 engine failure, 2 input error.  The default worker
thread count comes from LAYERSPHERE_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import traceback
from dataclasses import replace
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__, harness
from .medium import ValidationError
from .pbs import default_workers
from .scenario import AnalyticGrid, Scenario, ScenarioError, SweepSpec, load_scenario, save_scenario

EXIT_OK, EXIT_ENGINE, EXIT_INPUT = 0, 1, 2
CSV_SCHEMA_VERSION = 1

EXAMPLES = {
    "desk-internal": harness.desk_scenario,
    "desk-sweep": harness.desk_sweep_scenario,
    "desk-external": harness.desk_external_scenario,
    "full-internal": harness.full_scale_scenario,
    "homogeneous": harness.homogeneous_scenario,
}


class InputError(Exception):
    pass


def _err(msg: str) -> None:
    print(f"layersphere: {msg}", file=sys.stderr)


def _load(path: str) -> Scenario:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"scenario file not found: {path}")
    return load_scenario(p)


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if sc.pbs is not None:
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.dt is not None:
            changes["dt"] = args.dt
        if args.particles is not None:
            changes["n_particles"] = args.particles
        if args.duration is not None:
            changes["duration"] = args.duration
        if changes:
            sc = sc.with_pbs(**changes)
    elif any(v is not None for v in (args.seed, args.dt, args.particles, args.duration)):
        raise InputError("particle overrides given but the scenario has no 'pbs' section")
    an = sc.analytic
    if args.window is not None or args.n_time is not None:
        sc = replace(sc, analytic=AnalyticGrid(
            args.window if args.window is not None else an.window,
            args.n_time if args.n_time is not None else an.n_time,
            an.damping,
        ))
    return sc


def _manifest(sc: Scenario, path: str, engine: str, extra=None) -> dict:
    m = {
        "schema_version": CSV_SCHEMA_VERSION,
        "scenario_file": str(path),
        "scenario": sc.to_dict(),
        "scenario_digest": sc.digest(),
        "engine": engine,
        "seed": sc.pbs.seed if sc.pbs else None,
        "versions": {
            "layersphere": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "numba": numba.__version__,
        },
        "note": "worker count is omitted: results do not depend on it",
    }
    if "pbs" in m["scenario"]:
        m["scenario"]["pbs"].pop("workers", None)
    if extra:
        m.update(extra)
    return m


def _write_json(path: Path, data) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


GNUPLOT_STUB = """# gnuplot script for long.csv (columns: scenario,engine,receiver,t,value)
set datafile separator ','
set key outside
set xlabel 't [s]'
set ylabel 'concentration [1/um^3]'
# example: plot one receiver from both engines
rx = '{rx}'
plot 'long.csv' using ((strcol(2) eq 'analytic' && strcol(3) eq rx) ? $4 : 1/0):5 with lines title 'analytic', \\
     'long.csv' using ((strcol(2) eq 'pbs' && strcol(3) eq rx) ? $4 : 1/0):5 with points pt 7 ps 0.3 title 'pbs'
"""


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name) or "rx"


def execute(sc: Scenario, engine: str, out: Path, workers: int) -> dict:
    """Run one scenario and write every artifact into ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    cirs = pbs = None
    summary: dict = {}
    if engine in ("analytic", "both"):
        cirs = harness.analytic_cirs(sc)
        (out / "analytic").mkdir(exist_ok=True)
        for c, r in zip(cirs, sc.receivers):
            c.to_csv(out / "analytic" / f"{_safe(r.name)}.csv")
        summary["analytic_tail_flags"] = {r.name: c.tail_flag for c, r in zip(cirs, sc.receivers)}
    if engine in ("pbs", "both"):
        pbs = harness.run_pbs(sc, workers)
        d = out / "pbs"
        d.mkdir(exist_ok=True)
        for i, r in enumerate(sc.receivers):
            with (d / f"{_safe(r.name)}.csv").open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["t_s", "concentration_per_um3", "count"])
                for t, c, n in zip(pbs.t, pbs.concentration(i), pbs.counts[i]):
                    w.writerow([repr(float(t)), repr(float(c)), int(n)])
        with (d / "summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "inside", "outside", "dead"])
            for row in zip(pbs.t, pbs.inside, pbs.outside, pbs.dead):
                w.writerow([repr(float(row[0]))] + [int(x) for x in row[1:]])
    if engine == "both" and sc.receivers:
        metrics = [
            harness.compare_series(c, pbs, i, r.name)
            for i, (c, r) in enumerate(zip(cirs, sc.receivers))
        ]
        rep = harness.ComparisonReport(sc.name, sc.digest(), sc.pbs.seed, sc.pbs.n_particles, metrics)
        harness.write_report(rep, out)
        summary["comparison_pass"] = rep.passes()
    harness.write_long_csv(out / "long.csv", harness.long_rows(sc.name, cirs, sc.receivers, pbs))
    if sc.receivers:
        (out / "plot.gp").write_text(GNUPLOT_STUB.format(rx=sc.receivers[0].name))
    return summary


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    print(f"{args.scenario}: valid ({len(sc.stack.layers) - 1} layers, {len(sc.receivers)} receivers, digest {sc.digest()})")
    return EXIT_OK


def cmd_run(args) -> int:
    sc = _apply_overrides(_load(args.scenario), args)
    if args.engine in ("pbs", "both") and sc.pbs is None:
        raise InputError("engine needs particle settings but the scenario has no 'pbs' section")
    out = Path(args.out)
    summary = execute(sc, args.engine, out, args.workers)
    _write_json(out / "manifest.json", _manifest(sc, args.scenario, args.engine, {"summary": summary}))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sc = _apply_overrides(_load(args.scenario), args)
    if args.porosities is not None:
        try:
            vals = [float(v) for v in args.porosities.split(",") if v.strip()]
        except ValueError as exc:
            raise InputError(f"--porosities: {exc}") from exc
        layer = (args.layer if args.layer is not None else (sc.sweep.layer + 1 if sc.sweep else 0)) - 1
        if layer < 0:
            raise InputError("--layer is required when the scenario has no sweep section")
        sc = replace(sc, sweep=SweepSpec(layer, tuple(vals)))
    elif args.layer is not None and sc.sweep is not None:
        sc = replace(sc, sweep=SweepSpec(args.layer - 1, sc.sweep.porosities))
    if sc.sweep is None:
        raise InputError("no sweep specification (add a 'sweep' section or --porosities)")
    if not sc.sweep.porosities:
        raise InputError("sweep.porosities: empty list")
    if not (0 <= sc.sweep.layer < len(sc.stack.layers)):
        raise InputError(f"sweep layer {sc.sweep.layer + 1} does not exist")
    for v in sc.sweep.porosities:
        if not (0 < v <= 1):
            raise InputError(f"sweep porosity {v} outside (0, 1]")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    points = []
    for v in sc.sweep.porosities:
        point = sc.with_porosity(sc.sweep.layer, v)
        d = out / f"eps_{v:g}"
        summary = execute(point, args.engine, d, args.workers)
        _write_json(d / "manifest.json", _manifest(point, args.scenario, args.engine, {"summary": summary}))
        rows += harness.long_rows(f"{sc.name}:eps={v:g}",
                                  *_reload_series(point, d, args.engine))
        points.append(v)
    harness.write_long_csv(out / "long.csv", rows)
    ordering = _ordering_report(sc, out, args.engine)
    _write_json(out / "ordering.json", ordering)
    _write_json(out / "manifest.json", _manifest(sc, args.scenario, args.engine, {"sweep_points": points}))
    print(f"wrote {out}")
    return EXIT_OK


def _reload_series(sc: Scenario, d: Path, engine: str):
    """Read back the per-point series so the combined table matches the files exactly."""
    from .timedomain import TemporalCIR

    cirs = None
    if engine in ("analytic", "both"):
        cirs = []
        for r in sc.receivers:
            data = np.loadtxt(d / "analytic" / f"{_safe(r.name)}.csv", delimiter=",", skiprows=1, ndmin=2)
            cirs.append(TemporalCIR(data[:, 0], data[:, 1]))
    pbs = None
    if engine in ("pbs", "both"):
        pbs = _PbsView(sc, d)
    return cirs, sc.receivers, pbs


class _PbsView:
    def __init__(self, sc, d):
        self.receivers = [r.to_pbs() for r in sc.receivers]
        self._data = [
            np.loadtxt(d / "pbs" / f"{_safe(r.name)}.csv", delimiter=",", skiprows=1, ndmin=2)
            for r in sc.receivers
        ]
        self.t = self._data[0][:, 0] if self._data else np.zeros(0)

    def concentration(self, i):
        return self._data[i][:, 1]


def _ordering_report(sc: Scenario, out: Path, engine: str) -> dict:
    from .harness import estimate_peak_or_nan

    rep = {"schema_version": CSV_SCHEMA_VERSION, "sweep_layer": sc.sweep.layer + 1, "receivers": {}}
    order = sorted(sc.sweep.porosities, reverse=True)
    rep["porosities_decreasing"] = order
    for r in sc.receivers:
        entry = {}
        for eng in ("analytic", "pbs"):
            if engine not in (eng, "both"):
                continue
            peaks = []
            for v in order:
                data = np.loadtxt(out / f"eps_{v:g}" / eng / f"{_safe(r.name)}.csv",
                                  delimiter=",", skiprows=1, ndmin=2)
                peaks.append(estimate_peak_or_nan(data[:, 0], data[:, 1]) if eng == "pbs"
                             else (float(data[:, 1].max()), float(data[np.argmax(data[:, 1]), 0])))
            entry[eng] = {
                "peak_value": [p[0] for p in peaks],
                "peak_time": [p[1] for p in peaks],
                "peak_time_increasing": all(b[1] > a[1] for a, b in zip(peaks, peaks[1:])),
                "peak_value_decreasing": all(b[0] < a[0] for a, b in zip(peaks, peaks[1:])),
            }
        rep["receivers"][r.name] = entry
    return rep


def cmd_example(args) -> int:
    sc = EXAMPLES[args.name]()
    if args.out:
        save_scenario(sc, args.out)
        print(f"wrote {args.out}")
    else:
        print(json.dumps(sc.to_dict(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layersphere", description="Diffusion through a layered sphere.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)

    def common(sp):
        sp.add_argument("scenario")
        sp.add_argument("--engine", choices=["analytic", "pbs", "both"], default="analytic")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--dt", type=float, help="particle time step [s]")
        sp.add_argument("--particles", type=int, help="number of molecules")
        sp.add_argument("--duration", type=float, help="particle run length [s]")
        sp.add_argument("--window", type=float, help="transform window T [s]")
        sp.add_argument("--n-time", type=int, dest="n_time", help="transform length N_t")
        sp.add_argument("--workers", type=int, default=default_workers(),
                        help="particle worker threads (default: $LAYERSPHERE_THREADS or 1)")

    r = sub.add_parser("run", help="run one scenario")
    common(r)
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="porosity sweep")
    common(s)
    s.add_argument("--layer", type=int, help="1-based layer whose porosity varies")
    s.add_argument("--porosities", help="comma-separated porosity values")
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("example", help="write a stock scenario file")
    e.add_argument("name", choices=sorted(EXAMPLES))
    e.add_argument("--out")
    e.set_defaults(func=cmd_example)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ScenarioError as exc:
        for prob in exc.problems:
            _err(prob)
        return EXIT_INPUT
    except (InputError, ValidationError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except Exception as exc:  # engine failure
        _err(f"engine failure: {type(exc).__name__}: {exc}")
        traceback.print_exc(file=sys.stderr)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
