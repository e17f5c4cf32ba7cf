"""Seeded Monte-Carlo sweeps over surface sizes, thresholds and realizations,
and deterministic emission of result tables."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import bcd_optimize, compare_traces, default_fixed_profile, grid_sweep
from .channel import draw_channel
from .config import ExperimentConfig, ElementLayout
from .optimizer import InfeasibleError, SolverError, optimize

log = logging.getLogger(__name__)

COLUMNS = (
    "experiment_id", "N", "eps_c", "eps_s", "seed", "status", "a_c", "m",
    "eps_cc", "eps_ss", "delta_sc", "T_ms", "outer_iters", "inner_iters_total", "wall_ms",
)
TIMING_COLUMNS = ("wall_ms",)
THREADS_ENV = "FBL_STAR_NOMA_THREADS"

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_ALL_INFEASIBLE = 0, 1, 2, 3


def _sci(x: float) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.9e}"


def _fixed(x: float, digits: int = 12) -> str:
    return "nan" if x is None or not math.isfinite(x) else f"{x:.{digits}g}"


@dataclass(frozen=True)
class Cell:
    index: int
    layout: ElementLayout
    eps_c: float
    eps_s: float
    realization: int


@dataclass
class ResultRow:
    experiment_id: str
    N: int
    eps_c: float
    eps_s: float
    seed: int
    status: str
    a_c: float = math.nan
    m: float = math.nan
    eps_cc: float = math.nan
    eps_ss: float = math.nan
    delta_sc: float = math.nan
    T_ms: float = math.nan
    outer_iters: int = 0
    inner_iters_total: int = 0
    wall_ms: float = 0.0
    sort_key: tuple = ()

    def formatted(self) -> list[str]:
        return [
            self.experiment_id,
            str(self.N),
            _sci(self.eps_c),
            _sci(self.eps_s),
            str(self.seed),
            self.status,
            _fixed(self.a_c),
            _fixed(self.m),
            _sci(self.eps_cc),
            _sci(self.eps_ss),
            _sci(self.delta_sc),
            _fixed(self.T_ms),
            str(self.outer_iters),
            str(self.inner_iters_total),
            f"{self.wall_ms:.3f}",
        ]

    def record(self) -> dict:
        """JSON record holding exactly the values printed in the CSV."""
        out = {}
        for col, text in zip(COLUMNS, self.formatted()):
            if col in ("experiment_id", "status"):
                out[col] = text
            elif col in ("N", "seed", "outer_iters", "inner_iters_total"):
                out[col] = int(text)
            else:
                v = float(text)
                out[col] = None if math.isnan(v) else v
        return out


def cell_seed_sequence(base_seed: int, layout: ElementLayout, realization: int, stream: int = 0) -> np.random.SeedSequence:
    """Independent stream per (surface layout, realization); thresholds share channels."""
    return np.random.SeedSequence(entropy=base_seed, spawn_key=(layout.N_v, layout.N_h, realization, stream))


def cell_seed(base_seed: int, layout: ElementLayout, realization: int) -> int:
    return int(cell_seed_sequence(base_seed, layout, realization).generate_state(1, dtype=np.uint64)[0])


def build_cells(cfg: ExperimentConfig) -> list[Cell]:
    cells = []
    for layout in cfg.elements:
        for eps_c, eps_s in cfg.thresholds:
            for r in range(cfg.realizations):
                cells.append(Cell(len(cells), layout, eps_c, eps_s, r))
    return cells


def _cell_inputs(cfg: ExperimentConfig, cell: Cell):
    geo = replace(cfg.geometry, N_v=cell.layout.N_v, N_h=cell.layout.N_h)
    qos = replace(cfg.qos, eps_c=cell.eps_c, eps_s=cell.eps_s)
    chan = draw_channel(geo, cfg.channel, np.random.default_rng(cell_seed_sequence(cfg.seed, cell.layout, cell.realization)))
    return geo, qos, chan


def _row_from_solution(cfg, cell, seed, sol, exp_id, wall_ms) -> ResultRow:
    perf = sol.performance
    return ResultRow(
        experiment_id=exp_id,
        N=cell.layout.N,
        eps_c=cell.eps_c,
        eps_s=cell.eps_s,
        seed=seed,
        status=sol.status,
        a_c=sol.point.alloc.a_c,
        m=sol.point.alloc.m,
        eps_cc=perf.eps_cc,
        eps_ss=perf.eps_ss,
        delta_sc=perf.delta_sc,
        T_ms=perf.t_s * 1e3,
        outer_iters=sol.outer_iters,
        inner_iters_total=sol.inner_iters_total,
        wall_ms=wall_ms,
    )


def _trace_records(cfg, cell, seed, method, sol) -> list[dict]:
    return [
        {"experiment_id": cfg.experiment_id, "method": method, "N": cell.layout.N, "eps_c": cell.eps_c,
         "eps_s": cell.eps_s, "realization": cell.realization, "seed": seed, **r.as_dict()}
        for r in sol.trace
    ]


def _failure_row(cfg, cell, seed, exp_id, status, wall_ms) -> ResultRow:
    return ResultRow(cfg.experiment_id if exp_id is None else exp_id, cell.layout.N, cell.eps_c, cell.eps_s, seed, status, wall_ms=wall_ms)


def _run_solver(fn, cfg, cell, seed, qos, chan, exp_id, method):
    t0 = time.perf_counter()
    rng = np.random.default_rng(cell_seed_sequence(cfg.seed, cell.layout, cell.realization, stream=1))
    try:
        sol = fn(chan, qos, cfg.channel, cfg.solver, rng)
    except InfeasibleError as exc:
        log.info("cell %d (%s): infeasible: %s", cell.index, method, exc)
        return _failure_row(cfg, cell, seed, exp_id, "infeasible", 1e3 * (time.perf_counter() - t0)), [], None
    except (SolverError, np.linalg.LinAlgError) as exc:
        log.warning("cell %d (%s): solver error: %s", cell.index, method, exc)
        return _failure_row(cfg, cell, seed, exp_id, "solver-error", 1e3 * (time.perf_counter() - t0)), [], None
    row = _row_from_solution(cfg, cell, seed, sol, exp_id, 1e3 * (time.perf_counter() - t0))
    return row, _trace_records(cfg, cell, seed, method, sol), sol


def run_cell(cfg: ExperimentConfig, cell: Cell) -> dict:
    """Evaluate one sweep cell; returns rows plus optional trace and grid records."""
    seed = cell_seed(cfg.seed, cell.layout, cell.realization)
    geo, qos, chan = _cell_inputs(cfg, cell)
    out = {"rows": [], "traces": [], "grid": [], "comparisons": []}
    if cfg.kind == "tradeoff-grid":
        t0 = time.perf_counter()
        profile = default_fixed_profile(geo.N, np.random.default_rng(cell_seed_sequence(cfg.seed, cell.layout, cell.realization, stream=2)))
        m_hi = qos.m_upper(cfg.channel.bandwidth_hz)
        m_values = np.unique(np.round(np.linspace(qos.m_floor, m_hi, cfg.grid["m_points"])))
        a_values = np.linspace(cfg.grid["a_c_min"], cfg.grid["a_c_max"], cfg.grid["a_c_points"])
        res = grid_sweep(chan, profile, m_values, a_values, qos, cfg.channel)
        for i, m in enumerate(res.m_values):
            for j, a in enumerate(res.a_c_values):
                out["grid"].append([cfg.experiment_id, cell.layout.N, cell.eps_c, cell.eps_s, seed, a, m,
                                    res.eps_cc[i, j], res.eps_ss[i, j], res.delta_sc[i, j], res.t_s[i, j] * 1e3])
        # summary row: lowest-leakage node meeting reliability and delay
        reliable = res.feasible_mask(qos)
        concurrent = res.feasible_mask(qos, cfg.grid["delta_max"])
        wall = 1e3 * (time.perf_counter() - t0)
        if np.any(reliable):
            i, j = np.unravel_index(np.argmin(np.where(reliable, res.delta_sc, np.inf)), res.shape)
            status = "concurrent" if np.any(concurrent) else "high-leakage"
            t = res.tuples[i, j]
            out["rows"].append(ResultRow(cfg.experiment_id, cell.layout.N, cell.eps_c, cell.eps_s, seed, status,
                                         float(res.a_c_values[j]), float(res.m_values[i]), t.eps_cc, t.eps_ss,
                                         t.delta_sc, t.t_s * 1e3, 0, 0, wall))
        else:
            out["rows"].append(_failure_row(cfg, cell, seed, None, "infeasible", wall))
    elif cfg.kind == "optimize-sweep":
        row, tr, _ = _run_solver(optimize, cfg, cell, seed, qos, chan, cfg.experiment_id, "ao-mm")
        out["rows"].append(row)
        out["traces"].extend(tr)
    else:
        row_a, tr_a, sol_a = _run_solver(optimize, cfg, cell, seed, qos, chan, f"{cfg.experiment_id}/ao-mm", "ao-mm")
        row_b, tr_b, sol_b = _run_solver(bcd_optimize, cfg, cell, seed, qos, chan, f"{cfg.experiment_id}/bcd", "bcd")
        out["rows"].extend([row_a, row_b])
        out["traces"].extend(tr_a + tr_b)
        if sol_a is not None and sol_b is not None:
            cmp = compare_traces(sol_a, sol_b, tol=cfg.solver.zeta1)
            cmp.meta = {"N": cell.layout.N, "eps_c": cell.eps_c, "eps_s": cell.eps_s, "realization": cell.realization, "seed": seed}
            out["comparisons"].append(json.loads(cmp.to_json()))
    for row in out["rows"]:
        row.sort_key = (cell.index,)
    return out


def worker_count(n_tasks: int) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            log.warning("%s=%r is not an integer; ignoring", THREADS_ENV, env)
    return max(1, min(cap, n_tasks))


def _run_cell_args(args):
    return run_cell(*args)


def run_cells(cfg: ExperimentConfig, cells: list[Cell] | None = None) -> list[dict]:
    """Evaluate cells on a bounded pool; output order follows cell index."""
    cells = build_cells(cfg) if cells is None else cells
    workers = worker_count(len(cells))
    if workers == 1:
        results = [run_cell(cfg, c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell_args, [(cfg, c) for c in cells]))
    return results


def rows_from_results(results: list[dict]) -> list[ResultRow]:
    rows = [row for res in results for row in res["rows"]]
    rows.sort(key=lambda r: r.sort_key)
    return rows


def manifest(cfg: ExperimentConfig, cells: list[Cell]) -> dict:
    return {
        "experiment_id": cfg.experiment_id,
        "kind": cfg.kind,
        "config_hash": cfg.config_hash(),
        "base_seed": cfg.seed,
        "package_version": __version__,
        "cells": [
            {"index": c.index, "N": c.layout.N, "N_v": c.layout.N_v, "N_h": c.layout.N_h, "eps_c": c.eps_c,
             "eps_s": c.eps_s, "realization": c.realization, "seed": cell_seed(cfg.seed, c.layout, c.realization)}
            for c in cells
        ],
        "config": cfg.raw,
    }


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(r.formatted())
    return buf.getvalue()


def emit_results(rows: list[ResultRow], fmt: str, out_dir: str | Path, manifest_data: dict | None = None) -> Path:
    """Write the results table as ``results.csv`` or ``results.json``.

    Raises:
        ValueError: empty rows or unknown format.
        OSError: the output directory is not writable.
    """
    if not rows:
        raise ValueError("no result rows to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        path = out / "results.csv"
        path.write_text(rows_to_csv(rows))
    elif fmt == "json":
        path = out / "results.json"
        doc = {"columns": list(COLUMNS), "rows": [r.record() for r in rows], "manifest": manifest_data or {}}
        path.write_text(json.dumps(doc, indent=1, sort_keys=False) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return path


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run every cell, write artifacts under ``cfg.output_dir`` and return an exit status."""
    cells = build_cells(cfg)
    out = Path(cfg.output_dir)
    try:
        # fail before the sweep rather than after it
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        log.error("output directory %s is not writable: %s", out, exc)
        return EXIT_IO
    results = run_cells(cfg, cells)
    rows = rows_from_results(results)
    man = manifest(cfg, cells)
    try:
        emit_results(rows, cfg.output_format, out, man)
        (out / "manifest.json").write_text(json.dumps(man, indent=1) + "\n")
        traces = [t for res in results for t in res["traces"]]
        if traces:
            with open(out / "traces.jsonl", "w") as fh:
                for rec in traces:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
        grid = [g for res in results for g in res["grid"]]
        if grid:
            with open(out / "grid.csv", "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["experiment_id", "N", "eps_c", "eps_s", "seed", "a_c", "m", "eps_cc", "eps_ss", "delta_sc", "T_ms"])
                for g in grid:
                    w.writerow([g[0], g[1], _sci(g[2]), _sci(g[3]), g[4], _fixed(g[5]), _fixed(g[6])]
                               + [_sci(v) for v in g[7:10]] + [_fixed(g[10])])
        comps = [c for res in results for c in res["comparisons"]]
        if comps:
            (out / "comparisons.json").write_text(json.dumps(comps, indent=1, sort_keys=True) + "\n")
    except OSError as exc:
        log.error("cannot write results to %s: %s", out, exc)
        return EXIT_IO
    ok = [r for r in rows if r.status not in ("infeasible", "solver-error")]
    log.info("%d/%d rows feasible; results in %s", len(ok), len(rows), out)
    return EXIT_OK if ok else EXIT_ALL_INFEASIBLE


def summarize(rows: list[ResultRow]) -> dict:
    """Mean leakage and delay per (N, eps_c, eps_s) over feasible rows."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.N, r.eps_c, r.eps_s), []).append(r)
    out = {}
    for key, rs in sorted(groups.items()):
        good = [r for r in rs if r.status not in ("infeasible", "solver-error")]
        out[key] = {
            "feasible": len(good),
            "total": len(rs),
            "mean_delta_sc": float(np.mean([r.delta_sc for r in good])) if good else math.nan,
            "mean_T_ms": float(np.mean([r.T_ms for r in good])) if good else math.nan,
        }
    return out


__all__ = [
    "COLUMNS",
    "Cell",
    "ResultRow",
    "build_cells",
    "cell_seed",
    "emit_results",
    "manifest",
    "run_cell",
    "run_cells",
    "rows_from_results",
    "run_experiment",
    "summarize",
]

