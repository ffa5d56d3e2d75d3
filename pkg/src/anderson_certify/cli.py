"""Command-line interface.

Subcommands: estimate-moment, check-criterion, scan, spectra, fit-decay,
test-powerlaw, scan-eta.  All read a plain-text ``key = value`` config
(see README for the schema); check-criterion accepts flag overrides.

check-criterion exit codes: 0 certified, 2 not certified, 3 inconclusive.
A "certified" verdict is only printed when a constants source string was
supplied (``constants.source`` or --constants-source); without one the
printed verdict is downgraded to inconclusive, because the default
constants are exploratory placeholders.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .analysis import DecaySeries, fit_exponential, off_axis_scan, power_law_test
from .criteria import (
    VERDICT_CERTIFIED,
    VERDICT_NOT_CERTIFIED,
    single_site_test,
    theorem1_lhs,
    theorem2_lhs,
)
from .disorder import sample_realization
from .hamiltonian import assemble
from .moments import MomentQuery, estimate_moment
from .observables import gap_ratios, spectrum
from .resolvent import SpectralPoint
from .scan import (
    ConfigError,
    ScanConfig,
    constants_from_config,
    emit_phase_table,
    model_from_config,
    parse_config,
    parse_config_text,
    region_from_config,
    run_scan,
    strategy_from_config,
)

EXIT_CERTIFIED = 0
EXIT_ERROR = 1
EXIT_NOT_CERTIFIED = 2
EXIT_INCONCLUSIVE = 3


def _load_config(args) -> dict:
    cfg = parse_config(args.config) if getattr(args, "config", None) else {}
    return cfg


def _seed_from(cfg: dict, default: int = 0) -> int:
    for key in ("seed", "disorder.seed", "master_seed"):
        if key in cfg:
            return int(cfg[key])
    return default


def _site(value, d: int) -> tuple:
    if value is None:
        return (0,) * d
    if isinstance(value, int):
        return (value,)
    return tuple(int(c) for c in value)


def _emit(payload: dict, output=None):
    text = json.dumps(payload, sort_keys=True, indent=2)
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _cmd_estimate_moment(args) -> int:
    cfg = _load_config(args)
    region = region_from_config(cfg)
    model = model_from_config(cfg)
    d = region.dimension
    query = MomentQuery(
        region=region,
        x=_site(cfg.get("x"), d),
        y=_site(cfg.get("y"), d),
        z=SpectralPoint(float(cfg.get("energy", 0.0)), float(cfg.get("eta", 0.0))),
        s=float(cfg.get("s", 1.0 / 3.0)),
    )
    seed = _seed_from(cfg)
    est = estimate_moment(
        model, query, int(cfg.get("n_samples", 2000)), seed,
        n_blocks=int(cfg.get("n_blocks", 20)),
        convention=cfg.get("operator.convention", "hopping_only"),
        direct_max_sites=cfg.get("resolvent.direct_max_sites"))
    _emit({
        "estimate": est.to_dict(),
        "provenance": {
            "model": model.describe(), "x": list(query.x), "y": list(query.y),
            "E": query.z.E, "eta": query.z.eta, "s": query.s, "seed": seed,
            "convention": str(cfg.get("operator.convention", "hopping_only")),
            "region_sites": len(region),
        },
    }, args.output)
    return 0


def _cmd_check_criterion(args) -> int:
    cfg = _load_config(args)
    if args.theorem:
        cfg["theorem"] = args.theorem
    if args.lam is not None:
        cfg["disorder.lambda"] = args.lam
    if args.energy is not None:
        cfg["energy"] = args.energy
    if args.s is not None:
        cfg["s"] = args.s
    if args.Cs is not None:
        cfg["constants.Cs"] = args.Cs
    if args.Cs_tilde is not None:
        cfg["constants.Cs_tilde"] = args.Cs_tilde
    if args.region is not None:
        cfg["region"] = parse_config_text(f"region = {args.region}")["region"]
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.n_samples is not None:
        cfg["n_samples"] = args.n_samples
    if args.constants_source is not None:
        cfg["constants.source"] = args.constants_source

    theorem = str(cfg.get("theorem", "1"))
    model = model_from_config(cfg)
    constants = constants_from_config(cfg)
    energy = float(cfg.get("energy", 0.0))
    seed = _seed_from(cfg)
    n_samples = int(cfg.get("n_samples", 2000))
    n_blocks = int(cfg.get("n_blocks", 20))
    convention = cfg.get("operator.convention", "hopping_only")

    if theorem == "single-site":
        report = single_site_test(model, energy, constants,
                                  int(cfg.get("dimension", 1)))
    else:
        region = region_from_config(cfg)
        point = SpectralPoint(energy, float(cfg.get("eta", 0.0)))
        if theorem == "1":
            report = theorem1_lhs(model, region, point, constants, n_samples,
                                  seed, n_blocks=n_blocks, convention=convention,
                                  direct_max_sites=cfg.get("resolvent.direct_max_sites"))
        elif theorem == "2":
            report = theorem2_lhs(model, region, point, constants,
                                  strategy_from_config(cfg), n_samples, seed,
                                  n_blocks=n_blocks, convention=convention,
                                  direct_max_sites=cfg.get("resolvent.direct_max_sites"))
        else:
            raise ConfigError(f"theorem must be 1, 2 or single-site, got {theorem!r}")

    _emit(report.to_json_dict(), args.output)

    verdict = report.verdict
    if verdict == VERDICT_CERTIFIED and not constants.source:
        print("verdict: inconclusive (constants unsourced; criterion value "
              "is below threshold, but pass --constants-source to claim "
              "certification)", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    print(f"verdict: {verdict}", file=sys.stderr)
    if verdict == VERDICT_CERTIFIED:
        return EXIT_CERTIFIED
    if verdict == VERDICT_NOT_CERTIFIED:
        return EXIT_NOT_CERTIFIED
    return EXIT_INCONCLUSIVE


def _cmd_scan(args) -> int:
    config = ScanConfig.from_file(args.config)
    cells = run_scan(config, max_cells=args.max_cells, progress=args.progress)
    csv_path = os.path.join(config.output_dir, "phase.csv")
    json_path = os.path.join(config.output_dir, "phase.json")
    summary = emit_phase_table(cells, csv_path, json_path, config)
    print(json.dumps(summary["counts"], sort_keys=True))
    print(f"phase table: {csv_path}")
    return 0


def _cmd_spectra(args) -> int:
    cfg = _load_config(args)
    region = region_from_config(cfg)
    model = model_from_config(cfg)
    seed = _seed_from(cfg)
    n_real = int(cfg.get("n_samples", 10))
    out_dir = str(cfg.get("output.dir", "spectra-out"))
    fmt = str(cfg.get("spectra.format", "csv"))
    convention = cfg.get("operator.convention", "hopping_only")
    os.makedirs(out_dir, exist_ok=True)

    ratios = []
    for r in range(n_real):
        sample = assemble(region, sample_realization(model, region, seed, index=r),
                          convention)
        evals = spectrum(sample)
        if fmt == "npy":
            np.save(os.path.join(out_dir, f"eigenvalues_r{r:04d}.npy"), evals)
        else:
            path = os.path.join(out_dir, f"eigenvalues_r{r:04d}.csv")
            with open(path, "w", encoding="utf-8") as fh:
                fh.write("\n".join(repr(float(e)) for e in evals) + "\n")
        window = cfg.get("window")
        if window is None:
            n = len(evals)
            window = (evals[n // 4] - 1e-12, evals[(3 * n) // 4] + 1e-12)
        try:
            ratios.extend(gap_ratios(evals, window))
        except ValueError:
            pass

    aggregate = {
        "n_realizations": n_real,
        "region_sites": len(region),
        "model": model.describe(),
        "seed": seed,
        "mean_gap_ratio": float(np.mean(ratios)) if ratios else None,
        "n_gap_ratios": len(ratios),
        "poisson_reference": 2.0 * np.log(2.0) - 1.0,
    }
    with open(os.path.join(out_dir, "spectra.json"), "w", encoding="utf-8") as fh:
        json.dump(aggregate, fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(json.dumps(aggregate, sort_keys=True))
    return 0


def _cmd_fit_decay(args) -> int:
    from .moments import MomentEstimate
    points = []
    with open(args.input, "r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            est = MomentEstimate(
                value=float(row["moment"]),
                ci_low=float(row.get("ci_low") or row["moment"]),
                ci_high=float(row.get("ci_high") or row["moment"]),
                n_samples=0, n_blocks=0)
            points.append((float(row["distance"]), est))
    series = DecaySeries(tuple(sorted(points)))
    fit = fit_exponential(series)
    _emit(fit.to_dict(), args.output)
    return 0


def _cmd_test_powerlaw(args) -> int:
    cfg = _load_config(args)
    model = model_from_config(cfg)
    report = power_law_test(
        model,
        E=float(cfg.get("energy", 0.0)),
        L=int(cfg.get("L", 4)),
        s=float(cfg.get("s", 1.0 / 3.0)),
        variant=str(cfg.get("variant", "finite_volume")),
        B=float(cfg.get("B", 1.0)),
        n_samples=int(cfg.get("n_samples", 2000)),
        seed=_seed_from(cfg),
        d=int(cfg.get("dimension", 1)),
        eta=float(cfg.get("eta", 0.0)),
        L_min=int(cfg.get("L_min", 4)),
        n_blocks=int(cfg.get("n_blocks", 20)),
        convention=cfg.get("operator.convention", "hopping_only"))
    _emit(report.to_dict(), args.output)
    return 0


def _cmd_scan_eta(args) -> int:
    cfg = _load_config(args)
    region = region_from_config(cfg)
    model = model_from_config(cfg)
    d = region.dimension
    result = off_axis_scan(
        model, region,
        x=_site(cfg.get("x"), d),
        y=_site(cfg.get("y"), d),
        E=float(cfg.get("energy", 0.0)),
        eta_grid=cfg.get("eta_grid", (0.0,)),
        s=float(cfg.get("s", 1.0 / 3.0)),
        n_samples=int(cfg.get("n_samples", 2000)),
        seed=_seed_from(cfg),
        n_blocks=int(cfg.get("n_blocks", 20)),
        convention=cfg.get("operator.convention", "hopping_only"))
    _emit(result.to_dict(), args.output)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="anderson-certify",
        description="Finite-volume fractional-moment localization criteria "
                    "and diagnostics for disordered lattice Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_config=True):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=(name == "scan"),
                           help="plain-text key = value config file")
        p.add_argument("--output", help="write the JSON result here as well")
        p.set_defaults(fn=fn)
        return p

    add("estimate-moment", _cmd_estimate_moment)

    p = add("check-criterion", _cmd_check_criterion)
    p.add_argument("--theorem", choices=("1", "2", "single-site"))
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--energy", type=float)
    p.add_argument("--s", type=float)
    p.add_argument("--Cs", type=float)
    p.add_argument("--Cs-tilde", dest="Cs_tilde", type=float)
    p.add_argument("--region", help="region literal, e.g. \"{'box': {'d': 1, 'L': 2}}\"")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--constants-source", dest="constants_source",
                   help="provenance of the constants; required to print 'certified'")

    p = add("scan", _cmd_scan)
    p.add_argument("--max-cells", dest="max_cells", type=int,
                   help="evaluate at most this many new cells (resume later)")
    p.add_argument("--progress", action="store_true")

    add("spectra", _cmd_spectra)

    p = add("fit-decay", _cmd_fit_decay, needs_config=False)
    p.add_argument("--input", required=True,
                   help="CSV with columns distance, moment, ci_low, ci_high")

    add("test-powerlaw", _cmd_test_powerlaw)
    add("scan-eta", _cmd_scan_eta)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
