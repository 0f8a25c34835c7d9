"""Command-line interface: ``crnsearch {simulate,smooth,infer,select,report}``.

Exit codes: 0 success, 2 configuration or data error, 3 numerical failure
(smoothing or integration).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .cases import consistency_problems, make_case_study
from .exceptions import ConfigError, IntegrationFailure, SmoothingFailure
from .io import (
    load_dataset,
    network_from_json,
    plot_trajectories,
    read_json,
    write_dataset,
    write_json,
    write_trajectories,
)
from .pipeline import (
    RunConfig,
    check_dataset,
    dataset_digest,
    infer,
    provenance,
    reselect,
    resolve_conservation,
    smooth_dataset,
)
from .simulate import add_noise, integrate, noise_streams, simulate_at
from .smoothing import write_smoothing_report

OUTPUT_ROOT_ENV = "CRNSEARCH_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("crnsearch")


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "crnsearch-output"))


# -- commands -----------------------------------------------------------------


def cmd_simulate(case_id: int, seed: int, out_dir: Optional[Path] = None, noise: Optional[float] = None) -> Path:
    """Noisy and noise-free data for a case study; returns the manifest path."""
    try:
        case = make_case_study(case_id)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    problems = consistency_problems(case)
    if problems:
        raise ConfigError(f"case study {case_id} failed its consistency gate: " + "; ".join(problems))
    fraction = case.noise_fraction if noise is None else noise
    if fraction < 0:
        raise ConfigError("noise fraction must be nonnegative")
    out = Path(out_dir) if out_dir is not None else output_root() / f"case{case_id}_seed{seed}"
    S = case.species_count
    experiments = [
        add_noise(integrate(case.truth_network, spec), fraction, noise_streams(seed, m, S))
        for m, spec in enumerate(case.experiments)
    ]
    path = write_dataset(out, f"case{case_id}", experiments, seed=seed, noise_fraction=fraction,
                         conservation=case.conservation, case_id=case_id, truth_network=case.truth_network)
    log.info("wrote %d experiments to %s", len(experiments), out)
    return path


def cmd_smooth(config: RunConfig, out_dir: Path) -> list[Path]:
    dataset = load_dataset(_need_manifest(config))
    smoothed = smooth_dataset(dataset, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    fits = []
    for m, (series, sm) in enumerate(zip(dataset.experiments, smoothed), start=1):
        path = out_dir / f"smoothing_expt{m}.csv"
        write_smoothing_report(path, series, sm)
        paths.append(path)
        fits.append([{"species": f"x{i + 1}", "p": f.p, "fit_sse": f.fit_sse} for i, f in enumerate(sm.fits)])
    write_json(out_dir / "smoothing.json", {"config": provenance(config), "experiments": fits})
    return paths


def cmd_infer(config: RunConfig, resume: bool = False):
    # absolute, so later select/report calls work from any directory
    config = config.replace(manifest=str(Path(_need_manifest(config)).resolve()))
    dataset = load_dataset(config.manifest)
    # fail before anything is written
    check_dataset(dataset, config)
    resolve_conservation(dataset, config)
    out = Path(config.out_dir) if config.out_dir else output_root() / "infer"
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", provenance(config))
    summary = infer(config, dataset, out, resume=resume)
    doc = summary.to_json()
    print(f"{doc['runs']} run(s) written to {out}")
    if "topology_match_count" in doc:
        print(f"rank-1 topology matches truth in {doc['topology_match_count']}/{doc['runs']} runs")
    for topo, count in doc["rank1_topologies"].items():
        print(f"  {count} x {topo}")
    return summary


def cmd_select(run_dir: Path, top_k: Optional[int] = None) -> Path:
    cfg_doc = read_json(run_dir / "config.json")
    cfg_doc = {k: v for k, v in cfg_doc.items() if k not in ("run_index", "run_seed")}
    config = RunConfig.from_json(cfg_doc)
    if top_k is not None:
        config = config.replace(top_k=top_k)
    dataset = load_dataset(_need_manifest(config))
    selection = reselect(run_dir, config, dataset)
    path = run_dir / "selection.json"
    write_json(path, {
        "config": provenance(config),
        "dataset_sha256": dataset_digest(dataset),
        "distinct_networks": selection.distinct_networks,
        "no_solution": selection.no_solution,
        "candidates": [c.to_dict() for c in selection.candidates],
    })
    return path


def cmd_report(run_dir: Path, rank: int = 1) -> list[Path]:
    """Trajectory CSV and SVG per experiment for one ranked candidate."""
    doc_path = run_dir / "candidates.json"
    if not doc_path.exists():
        raise ConfigError(f"no candidates.json in {run_dir}")
    doc = read_json(doc_path)
    config = RunConfig.from_json(doc["config"])
    dataset = load_dataset(_need_manifest(config))
    report_dir = run_dir / "report"
    report_dir.mkdir(exist_ok=True)
    candidates = doc["candidates"]
    if not candidates or rank > len(candidates):
        note = "no solution: the run produced no integrable candidate\n" if not candidates else \
            f"no candidate of rank {rank} ({len(candidates)} available)\n"
        path = report_dir / "report.txt"
        path.write_text(note)
        return [path]
    cand = candidates[rank - 1]
    network = network_from_json(cand["network"])
    written = []
    lines = [f"rank {rank} candidate, SIC_C {cand['sic_c']}, SIC_D {cand['sic_d']}"]
    lines += [f"  {r}" for r in network.reactions]
    for m, series in enumerate(dataset.experiments, start=1):
        predicted = simulate_at(network, series.measured[0], series.times, config.rel_tol, config.abs_tol)
        csv_path = report_dir / f"trajectory_expt{m}.csv"
        svg_path = report_dir / f"trajectory_expt{m}.svg"
        write_trajectories(csv_path, series.times, series.measured, predicted)
        plot_trajectories(svg_path, series.times, series.measured, predicted,
                          title=f"experiment {m}: measured (dots), rank-{rank} prediction (lines)")
        sse = float(np.sum((series.measured - predicted) ** 2))
        lines.append(f"experiment {m}: SSE_C {sse:.6g}")
        written += [csv_path, svg_path]
    (report_dir / "report.txt").write_text("\n".join(lines) + "\n")
    return written


def _need_manifest(config: RunConfig) -> str:
    if not config.manifest:
        raise ConfigError("a dataset manifest is required (--manifest)")
    return config.manifest


# -- argument handling --------------------------------------------------------

_FLAG_HELP = {
    "manifest": "dataset manifest.json (or its directory)",
    "species_count": "expected number of species S",
    "q_max": "maximum reactions per trial network",
    "population_size": "DE population size P",
    "generations": "maximum generations G",
    "stagnation_limit": "stop after this many generations without change",
    "tau1": "probability of resampling F",
    "tau2": "probability of resampling CR",
    "f_lower": "F_l of the F resampling rule",
    "f_upper": "F_u of the F resampling rule",
    "trim": "samples dropped at each end after smoothing",
    "restarts": "Levenberg-Marquardt starts per signal",
    "smoothing_seed": "seed of the smoother's restart perturbations",
    "rel_tol": "integrator relative tolerance",
    "abs_tol": "integrator absolute tolerance",
    "seed": "master seed; run i uses seed + i",
    "runs": "number of independent DE runs",
    "top_k": "candidates kept per run",
    "checkpoint_every": "checkpoint interval in generations",
    "out_dir": "output directory",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file of RunConfig values (flags override it)")
    for f in dataclasses.fields(RunConfig):
        if f.name in _FLAG_HELP:
            kind = {int: int, float: float}.get(type(f.default), None)
            if f.name in ("manifest", "out_dir"):
                kind = str
            elif f.name == "species_count":
                kind = int
            p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=kind, default=None,
                           help=f"{_FLAG_HELP[f.name]} (default {f.default})")
    p.add_argument("--conservation", dest="conservation", default=None,
                   help="conservation matrix as JSON, e.g. '[[1,3,4]]' (overrides the manifest)")
    p.add_argument("--no-conservation", dest="use_conservation", action="store_false", default=None,
                   help="ignore any conservation matrix and use the nullspace check")
    p.add_argument("--no-forced-crossover", dest="forced_crossover", action="store_false", default=None,
                   help="binomial crossover without the guaranteed donor component")
    p.add_argument("--single-pass-pruning", dest="refit", action="store_false", default=None,
                   help="delete non-positive rates once without refitting")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(read_json(args.config))
    for f in dataclasses.fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if isinstance(values.get("conservation"), str):
        try:
            values["conservation"] = json.loads(values["conservation"])
        except json.JSONDecodeError as exc:
            raise ConfigError(f"--conservation is not valid JSON: {exc}") from exc
    try:
        return RunConfig.from_json(values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crnsearch", description="Infer reaction networks from time-series data.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a case-study dataset")
    p.add_argument("case_id", type=int, choices=(1, 2, 3))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=None, help="noise sd as a fraction of signal range")
    p.add_argument("--out-dir", type=Path, default=None)

    p = sub.add_parser("smooth", help="fit rational polynomials and write smoothing reports")
    _add_config_flags(p)

    p = sub.add_parser("infer", help="smoothing, seeded DE runs and model selection")
    _add_config_flags(p)
    p.add_argument("--resume", action="store_true", help="continue runs from their checkpoints")

    p = sub.add_parser("select", help="redo model selection from a run's final checkpoint")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--top-k", type=int, default=None)

    p = sub.add_parser("report", help="trajectory tables and SVG plots for a run")
    p.add_argument("run_dir", type=Path)
    p.add_argument("--rank", type=int, default=1)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        if args.command == "simulate":
            print(cmd_simulate(args.case_id, args.seed, args.out_dir, args.noise))
        elif args.command == "smooth":
            config = config_from_args(args)
            out = Path(config.out_dir) if config.out_dir else output_root() / "smooth"
            for path in cmd_smooth(config, out):
                print(path)
        elif args.command == "infer":
            cmd_infer(config_from_args(args), resume=args.resume)
        elif args.command == "select":
            print(cmd_select(args.run_dir, args.top_k))
        elif args.command == "report":
            for path in cmd_report(args.run_dir, args.rank):
                print(path)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SmoothingFailure, IntegrationFailure) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
