"""Files on disk: datasets, manifests, run logs, checkpoints and reports.

Tabular data is CSV, structured data JSON (sorted keys, so reruns are
byte-identical), plots SVG.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .exceptions import ConfigError
from .network import ConservationMatrix, Reaction, ReactionNetwork
from .simulate import ExperimentSeries

MANIFEST_NAME = "manifest.json"


def _finite_or_tag(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return _finite_or_tag(float(obj))
    return _finite_or_tag(obj)


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


# -- networks -----------------------------------------------------------------


def reaction_to_json(r: Reaction) -> dict:
    return {
        "reactants": [list(p) for p in r.reactants],
        "products": [list(p) for p in r.products],
        "k": r.rate_coefficient,
    }


def reaction_from_json(d: dict) -> Reaction:
    return Reaction(
        tuple(tuple(p) for p in d["reactants"]),
        tuple(tuple(p) for p in d["products"]),
        d.get("k"),
    )


def network_to_json(network: ReactionNetwork) -> dict:
    return {
        "species_count": network.species_count,
        "reactions": [reaction_to_json(r) for r in network.reactions],
    }


def network_from_json(d: dict) -> ReactionNetwork:
    return ReactionNetwork(int(d["species_count"]), tuple(reaction_from_json(r) for r in d["reactions"]))


# -- experiment data ----------------------------------------------------------


def write_experiment_csv(path: str | Path, times: np.ndarray, values: np.ndarray) -> None:
    values = np.atleast_2d(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time"] + [f"x{i + 1}" for i in range(values.shape[1])])
        for t, row in zip(times, values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_experiment_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise ConfigError(f"missing data file {path}") from exc
    if not rows or rows[0][0].strip() != "time":
        raise ConfigError(f"{path}: header must start with 'time'")
    header = [h.strip() for h in rows[0]]
    expected = ["time"] + [f"x{i}" for i in range(1, len(header))]
    if header != expected:
        raise ConfigError(f"{path}: header must be {','.join(expected)}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:] if row], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2 or data.shape[0] == 0:
        raise ConfigError(f"{path}: no data rows")
    return data[:, 0], data[:, 1:]


@dataclass
class Manifest:
    files: list[str]
    species_count: int
    seed: Optional[int] = None
    noise_fraction: Optional[float] = None
    conservation: Optional[list[list[float]]] = None
    truth_files: list[str] = field(default_factory=list)
    case_id: Optional[int] = None
    truth_network: Optional[dict] = None

    def to_json(self) -> dict:
        d = {"files": self.files, "S": self.species_count, "seed": self.seed, "noise_fraction": self.noise_fraction}
        if self.conservation is not None:
            d["conservation"] = self.conservation
        if self.truth_files:
            d["truth_files"] = self.truth_files
        if self.case_id is not None:
            d["case_id"] = self.case_id
        if self.truth_network is not None:
            d["truth_network"] = self.truth_network
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Manifest":
        if "files" not in d or "S" not in d:
            raise ConfigError("manifest needs 'files' and 'S'")
        return cls(
            files=list(d["files"]),
            species_count=int(d["S"]),
            seed=d.get("seed"),
            noise_fraction=d.get("noise_fraction"),
            conservation=d.get("conservation"),
            truth_files=list(d.get("truth_files", [])),
            case_id=d.get("case_id"),
            truth_network=d.get("truth_network"),
        )


@dataclass
class Dataset:
    manifest: Manifest
    experiments: list[ExperimentSeries]
    root: Path

    @property
    def species_count(self) -> int:
        return self.manifest.species_count

    @property
    def conservation(self) -> Optional[ConservationMatrix]:
        c = self.manifest.conservation
        return None if c is None else ConservationMatrix(np.array(c, dtype=float))

    @property
    def truth_network(self) -> Optional[ReactionNetwork]:
        t = self.manifest.truth_network
        return None if t is None else network_from_json(t)


def write_dataset(
    out_dir: str | Path,
    name: str,
    experiments: Sequence[ExperimentSeries],
    seed: Optional[int] = None,
    noise_fraction: Optional[float] = None,
    conservation=None,
    case_id: Optional[int] = None,
    truth_network: Optional[ReactionNetwork] = None,
) -> Path:
    """Write ``<name>_expt<m>.csv`` (measured), truth companions and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files, truth_files = [], []
    for m, series in enumerate(experiments, start=1):
        fname = f"{name}_expt{m}.csv"
        write_experiment_csv(out / fname, series.times, series.measured)
        files.append(fname)
        if series.truth is not None:
            (out / "truth").mkdir(exist_ok=True)
            tname = f"truth/{name}_expt{m}.csv"
            write_experiment_csv(out / tname, series.times, series.truth)
            truth_files.append(tname)
    cons = None
    if conservation is not None:
        values = conservation.values if isinstance(conservation, ConservationMatrix) else np.asarray(conservation)
        values = np.atleast_2d(values)
        cons = values.astype(int).tolist() if np.all(values == np.round(values)) else values.tolist()
    manifest = Manifest(
        files=files,
        species_count=experiments[0].species_count,
        seed=seed,
        noise_fraction=noise_fraction,
        conservation=cons,
        truth_files=truth_files,
        case_id=case_id,
        truth_network=None if truth_network is None else network_to_json(truth_network),
    )
    path = out / MANIFEST_NAME
    write_json(path, manifest.to_json())
    return path


def load_dataset(manifest_path: str | Path) -> Dataset:
    """Read a manifest and its experiment files, checking shapes against S."""
    path = Path(manifest_path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    manifest = Manifest.from_json(read_json(path))
    root = path.parent
    if not manifest.files:
        raise ConfigError("manifest lists no experiment files")
    if manifest.truth_files and len(manifest.truth_files) != len(manifest.files):
        raise ConfigError("truth_files must match files one to one")
    experiments = []
    for m, fname in enumerate(manifest.files):
        t, x = read_experiment_csv(root / fname)
        if x.shape[1] != manifest.species_count:
            raise ConfigError(f"{fname}: {x.shape[1]} species columns, manifest says S={manifest.species_count}")
        truth = None
        if manifest.truth_files:
            tt, truth = read_experiment_csv(root / manifest.truth_files[m])
            if tt.shape != t.shape or np.any(tt != t) or truth.shape != x.shape:
                raise ConfigError(f"{manifest.truth_files[m]} does not match {fname}")
        try:
            experiments.append(ExperimentSeries(t, x, truth))
        except ValueError as exc:
            raise ConfigError(f"{fname}: {exc}") from exc
    if manifest.conservation is not None:
        a = np.atleast_2d(np.array(manifest.conservation, dtype=float))
        if a.shape[1] != manifest.species_count:
            raise ConfigError(f"conservation matrix has {a.shape[1]} columns, expected S={manifest.species_count}")
        try:
            ConservationMatrix(a)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return Dataset(manifest, experiments, root)


# -- run artifacts ------------------------------------------------------------

RUN_LOG_HEADER = ["generation", "best_sic_d", "best_q", "valid_fraction", "mean_F", "mean_CR"]


class RunLog:
    """Append-only CSV of per-generation statistics."""

    def __init__(self, path: str | Path, append: bool = False):
        self.path = Path(path)
        exists = append and self.path.exists()
        self._fh = open(self.path, "a" if exists else "w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        if not exists:
            self._writer.writerow(RUN_LOG_HEADER)

    def write(self, stats) -> None:
        self._writer.writerow([
            stats.generation,
            repr(float(stats.best_sic_d)),
            stats.best_q,
            repr(float(stats.valid_fraction)),
            repr(float(stats.mean_F)),
            repr(float(stats.mean_CR)),
        ])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_run_log(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class Checkpoint:
    genomes: np.ndarray
    F: np.ndarray
    CR: np.ndarray
    generation: int
    rng_state: dict
    unchanged: int = 0


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    """Genomes and controls in ``.npz``; RNG and stagnation state alongside as JSON."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, genomes=ckpt.genomes, F=ckpt.F, CR=ckpt.CR)
    tmp.replace(path)
    write_json(path.with_suffix(".json"), {
        "generation": ckpt.generation,
        "rng_state": ckpt.rng_state,
        "unchanged": ckpt.unchanged,
    })


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"missing checkpoint {path}")
    with np.load(path) as z:
        genomes, F, CR = z["genomes"], z["F"], z["CR"]
    meta = read_json(path.with_suffix(".json"))
    return Checkpoint(genomes, F, CR, int(meta["generation"]), meta["rng_state"], int(meta["unchanged"]))


def write_trajectories(path: str | Path, times: np.ndarray, measured: np.ndarray, predicted: np.ndarray) -> None:
    """Long-format CSV ``time,species,measured,predicted``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "species", "measured", "predicted"])
        for i in range(measured.shape[1]):
            for n, t in enumerate(times):
                w.writerow([repr(float(t)), f"x{i + 1}", repr(float(measured[n, i])), repr(float(predicted[n, i]))])


def plot_trajectories(path: str | Path, times, measured, predicted, title: str = "") -> None:
    """Measured samples as dots, model predictions as lines, one colour per species."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for i in range(measured.shape[1]):
        (line,) = ax.plot(times, predicted[:, i], lw=1.2, label=f"x{i + 1}")
        ax.plot(times, measured[:, i], "o", ms=2.5, color=line.get_color())
    ax.set_xlabel("time")
    ax.set_ylabel("concentration")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    matplotlib.rcParams["svg.hashsalt"] = "crnsearch"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
