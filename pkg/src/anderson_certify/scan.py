"""Parameter sweeps over (lambda, E, s, L) with checkpointed, reproducible cells.

Configs are plain-text ``key = value`` files (``#`` comments); values are
Python literals with bare strings allowed.  Every grid cell derives its
seed from the master seed and the cell's parameter *values*, so refining
a grid never reshuffles the randomness of existing cells.  Completed
cells stream to a JSONL checkpoint; re-running resumes and produces
output files identical to an uninterrupted run.
"""

from __future__ import annotations

import ast
import concurrent.futures
import csv
import dataclasses
import itertools
import json
import os
import time

from . import __version__
from .criteria import (
    CriterionConstants,
    SubsetStrategy,
    single_site_test,
    theorem1_lhs,
    theorem2_lhs,
)
from .disorder import DisorderModel, derive_seed
from .hamiltonian import LaplacianConvention
from .lattice import Region
from .resolvent import SpectralPoint

PARALLELISM_ENV = "ANDERSON_CERTIFY_PARALLELISM"

CSV_COLUMNS = ("lambda", "E", "s", "L", "theorem", "lhs", "ci_low", "ci_high",
               "verdict", "rigor", "seed")


class ConfigError(ValueError):
    """Configuration file failed schema validation."""


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines into a flat dict of dotted keys."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        try:
            out[key] = ast.literal_eval(value)
        except (ValueError, SyntaxError):
            out[key] = value  # bare string
    return out


def parse_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def _as_tuple(value):
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def model_from_config(cfg: dict, coupling: float | None = None) -> DisorderModel:
    kind = cfg.get("disorder.kind", "uniform")
    lam = float(coupling if coupling is not None else cfg.get("disorder.lambda", 1.0))
    if kind == "uniform":
        support = cfg.get("disorder.support", (-0.5, 0.5))
        return DisorderModel.uniform(float(support[0]), float(support[1]), lam)
    if kind == "tabulated":
        try:
            knots = cfg["disorder.knots"]
            dens = cfg["disorder.density"]
        except KeyError as missing:
            raise ConfigError(f"tabulated disorder needs key {missing}") from None
        return DisorderModel.tabulated(knots, dens, lam,
                                       normalize=bool(cfg.get("disorder.normalize", False)))
    raise ConfigError(f"unknown disorder.kind {kind!r}")


def region_from_config(cfg: dict, key: str = "region") -> Region:
    """Region literal: {'box': {'d': d, 'L': L}} or an explicit site list."""
    spec = cfg.get(key)
    if spec is None:
        d = int(cfg.get("dimension", 1))
        L = int(cfg.get("L", 0))
        return Region.box(d, L)
    if isinstance(spec, dict) and "box" in spec:
        box = spec["box"]
        return Region.box(int(box["d"]), int(box["L"]))
    if isinstance(spec, (list, tuple)):
        sites = [(s,) if isinstance(s, int) else tuple(s) for s in spec]
        return Region(sites)
    raise ConfigError(f"cannot parse region literal {spec!r}")


def constants_from_config(cfg: dict, s: float | None = None) -> CriterionConstants:
    return CriterionConstants(
        C_s=float(cfg.get("constants.Cs", 1.0)),
        C_tilde_s=float(cfg.get("constants.Cs_tilde", 1.0)),
        s=float(s if s is not None else cfg.get("s", 1.0 / 3.0)),
        source=cfg.get("constants.source"),
    )


def strategy_from_config(cfg: dict) -> SubsetStrategy:
    return SubsetStrategy(
        kind=cfg.get("subsets.kind", "exhaustive"),
        max_exhaustive_sites=int(cfg.get("subsets.max_exhaustive_sites", 16)),
    )


@dataclasses.dataclass(frozen=True)
class ScanConfig:
    """Validated scan parameters; ``to_dict`` echoes into reports."""

    lambdas: tuple
    energies: tuple
    s_values: tuple
    L_values: tuple
    dimension: int = 1
    theorem: str = "1"
    disorder_kind: str = "uniform"
    disorder_support: tuple = (-0.5, 0.5)
    disorder_knots: tuple = ()
    disorder_density: tuple = ()
    C_s: float = 1.0
    C_tilde_s: float = 1.0
    constants_source: str | None = None
    n_samples: int = 200
    n_blocks: int = 20
    master_seed: int = 0
    convention: str = "hopping_only"
    direct_max_sites: int | None = None
    subsets_kind: str = "exhaustive"
    max_exhaustive_sites: int = 16
    output_dir: str = "scan-out"
    parallelism: int = 1

    def __post_init__(self):
        # Empty grids are allowed: they produce a zero-cell scan.
        if any(not 0 < s < 1 for s in self.s_values):
            raise ConfigError("every s must lie in (0, 1)")
        if any(L < 0 for L in self.L_values):
            raise ConfigError("every L must be >= 0")
        if any(lam <= 0 for lam in self.lambdas):
            raise ConfigError("every lambda must be positive")
        if self.theorem not in ("1", "2", "single-site"):
            raise ConfigError(f"theorem must be 1, 2 or single-site, got {self.theorem!r}")
        if self.n_samples < 100:
            raise ConfigError("n_samples must be >= 100")
        if self.n_blocks < 10 or self.n_samples % self.n_blocks:
            raise ConfigError("n_samples must split into >= 10 equal blocks")
        LaplacianConvention.parse(self.convention)

    @classmethod
    def from_dict(cls, cfg: dict) -> "ScanConfig":
        dms = cfg.get("resolvent.direct_max_sites")
        return cls(
            lambdas=tuple(float(v) for v in _as_tuple(cfg.get("lambda", ()))),
            energies=tuple(float(v) for v in _as_tuple(cfg.get("energy", ()))),
            s_values=tuple(float(v) for v in _as_tuple(cfg.get("s", ()))),
            L_values=tuple(int(v) for v in _as_tuple(cfg.get("L", ()))),
            dimension=int(cfg.get("dimension", 1)),
            theorem=str(cfg.get("theorem", "1")),
            disorder_kind=cfg.get("disorder.kind", "uniform"),
            disorder_support=tuple(cfg.get("disorder.support", (-0.5, 0.5))),
            disorder_knots=tuple(cfg.get("disorder.knots", ())),
            disorder_density=tuple(cfg.get("disorder.density", ())),
            C_s=float(cfg.get("constants.Cs", 1.0)),
            C_tilde_s=float(cfg.get("constants.Cs_tilde", 1.0)),
            constants_source=cfg.get("constants.source"),
            n_samples=int(cfg.get("n_samples", 200)),
            n_blocks=int(cfg.get("n_blocks", 20)),
            master_seed=int(cfg.get("master_seed", 0)),
            convention=str(cfg.get("operator.convention", "hopping_only")),
            direct_max_sites=None if dms is None else int(dms),
            subsets_kind=cfg.get("subsets.kind", "exhaustive"),
            max_exhaustive_sites=int(cfg.get("subsets.max_exhaustive_sites", 16)),
            output_dir=str(cfg.get("output.dir", "scan-out")),
            parallelism=int(cfg.get("parallelism", 1)),
        )

    @classmethod
    def from_file(cls, path) -> "ScanConfig":
        return cls.from_dict(parse_config(path))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def grid(self):
        """Cells in canonical order: lambda-major, then E, s, L."""
        return itertools.product(self.lambdas, self.energies,
                                 self.s_values, self.L_values)

    def model(self, lam: float) -> DisorderModel:
        if self.disorder_kind == "uniform":
            a, b = self.disorder_support
            return DisorderModel.uniform(a, b, lam)
        return DisorderModel.tabulated(self.disorder_knots,
                                       self.disorder_density, lam)

    def cell_seed(self, lam, E, s, L) -> int:
        return derive_seed(self.master_seed, lam, E, s, L, self.theorem)


def cell_key(lam, E, s, L, theorem) -> str:
    return f"lambda={float(lam)!r},E={float(E)!r},s={float(s)!r},L={int(L)},thm={theorem}"


@dataclasses.dataclass
class ScanCell:
    lam: float
    E: float
    s: float
    L: int
    theorem: str
    seed: int
    status: str = "pending"            # pending / done / failed
    report: dict | None = None
    error: str | None = None
    wall_time: float = 0.0

    @property
    def key(self) -> str:
        return cell_key(self.lam, self.E, self.s, self.L, self.theorem)

    def to_record(self) -> dict:
        return {"key": self.key, "lambda": self.lam, "E": self.E, "s": self.s,
                "L": self.L, "theorem": self.theorem, "seed": self.seed,
                "status": self.status, "report": self.report,
                "error": self.error, "wall_time": self.wall_time}


def evaluate_criterion_cell(config: ScanConfig, lam: float, E: float,
                            s: float, L: int) -> dict:
    """Evaluate one cell; returns the canonical report JSON dict."""
    model = config.model(lam)
    constants = CriterionConstants(C_s=config.C_s, C_tilde_s=config.C_tilde_s,
                                   s=s, source=config.constants_source)
    seed = config.cell_seed(lam, E, s, L)
    if config.theorem == "single-site":
        report = single_site_test(model, E, constants, config.dimension)
        return report.to_json_dict()
    region = Region.box(config.dimension, L)
    point = SpectralPoint(E, 0.0)
    if config.theorem == "1":
        report = theorem1_lhs(model, region, point, constants,
                              config.n_samples, seed,
                              n_blocks=config.n_blocks,
                              convention=config.convention,
                              direct_max_sites=config.direct_max_sites)
    else:
        strategy = SubsetStrategy(kind=config.subsets_kind,
                                  max_exhaustive_sites=config.max_exhaustive_sites)
        report = theorem2_lhs(model, region, point, constants, strategy,
                              config.n_samples, seed,
                              n_blocks=config.n_blocks,
                              convention=config.convention,
                              direct_max_sites=config.direct_max_sites)
    return report.to_json_dict()


def _evaluate_worker(config_dict: dict, lam: float, E: float, s: float, L: int):
    config = ScanConfig(**{k: tuple(v) if isinstance(v, list) else v
                           for k, v in config_dict.items()})
    start = time.perf_counter()
    try:
        report = evaluate_criterion_cell(config, lam, E, s, L)
        return lam, E, s, L, "done", report, None, time.perf_counter() - start
    except Exception as exc:   # cell failures must not kill the scan
        return lam, E, s, L, "failed", None, f"{type(exc).__name__}: {exc}", \
            time.perf_counter() - start


def _load_checkpoint(path) -> dict:
    done = {}
    if not os.path.exists(path):
        return done
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                continue   # partial last line from an interrupted run
            if record.get("status") in ("done", "failed"):
                done[record["key"]] = record
    return done


def run_scan(config: ScanConfig, max_cells: int | None = None,
             progress: bool = False) -> list:
    """Evaluate the grid, resuming from the checkpoint in the output dir.

    ``max_cells`` limits how many *new* cells are evaluated (partial runs
    are first-class; re-running completes them).  Returns all cells in
    grid order, evaluated or not.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    ckpt_path = os.path.join(config.output_dir, "results.jsonl")
    known = _load_checkpoint(ckpt_path)

    cells = []
    pending = []
    for lam, E, s, L in config.grid():
        cell = ScanCell(lam, E, s, L, config.theorem,
                        config.cell_seed(lam, E, s, L))
        record = known.get(cell.key)
        if record is not None:
            cell.status = record["status"]
            cell.report = record.get("report")
            cell.error = record.get("error")
            cell.wall_time = record.get("wall_time", 0.0)
        else:
            pending.append(cell)
        cells.append(cell)

    if max_cells is not None:
        pending = pending[:max_cells]
    if not pending:
        return cells

    parallelism = int(os.environ.get(PARALLELISM_ENV, config.parallelism))
    config_dict = config.to_dict()
    by_key = {c.key: c for c in cells}

    with open(ckpt_path, "a", encoding="utf-8") as ckpt:
        def commit(result):
            lam, E, s, L, status, report, error, wall = result
            cell = by_key[cell_key(lam, E, s, L, config.theorem)]
            cell.status, cell.report, cell.error, cell.wall_time = \
                status, report, error, wall
            ckpt.write(json.dumps(cell.to_record(), sort_keys=True) + "\n")
            ckpt.flush()
            if progress:
                print(f"[{status}] {cell.key}")

        if parallelism <= 1:
            for cell in pending:
                commit(_evaluate_worker(config_dict, cell.lam, cell.E,
                                        cell.s, cell.L))
        else:
            with concurrent.futures.ProcessPoolExecutor(parallelism) as pool:
                futures = [pool.submit(_evaluate_worker, config_dict, c.lam,
                                       c.E, c.s, c.L) for c in pending]
                for fut in concurrent.futures.as_completed(futures):
                    commit(fut.result())
    return cells


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_phase_table(cells, csv_path, json_path=None, config: ScanConfig | None = None):
    """Write the phase table CSV (grid order) and a JSON summary.

    Failed and pending cells appear with empty numeric fields; only
    deterministic fields enter the CSV so repeated runs are bit-identical.
    """
    rows = []
    counts = {"certified": 0, "not_certified": 0, "inconclusive": 0,
              "failed": 0, "pending": 0}
    for cell in cells:
        if cell.status == "done" and cell.report is not None:
            rep = cell.report
            verdict = rep["verdict"]
            row = [cell.lam, cell.E, cell.s, cell.L, cell.theorem,
                   rep["lhs"], rep["ci_low"], rep["ci_high"],
                   verdict, rep["rigor"], cell.seed]
        else:
            verdict = cell.status
            row = [cell.lam, cell.E, cell.s, cell.L, cell.theorem,
                   None, None, None, verdict, None, cell.seed]
        counts[verdict] = counts.get(verdict, 0) + 1
        rows.append(row)

    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    summary = {"version": __version__, "n_cells": len(cells), "counts": counts}
    if config is not None:
        summary["config"] = config.to_dict()
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(summary, fh, sort_keys=True, indent=2)
            fh.write("\n")
    return summary


def read_phase_table(csv_path) -> list:
    """Parse an emitted CSV back into dict rows (floats where applicable)."""
    out = []
    with open(csv_path, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = dict(row)
            for key in ("lambda", "E", "s", "lhs", "ci_low", "ci_high"):
                parsed[key] = float(parsed[key]) if parsed[key] else None
            for key in ("L", "seed"):
                parsed[key] = int(parsed[key])
            out.append(parsed)
    return out
