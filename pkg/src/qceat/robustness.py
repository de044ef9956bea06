"""Imperfection- and training-robustness sweeps over coherent or dephasing noise levels."""
from __future__ import annotations

import csv
import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .evolution import EvolutionConfig, run_qceat
from .genome import Genome
from .hamiltonians import GroundTruth, PauliHamiltonian
from .optimizer import TrainConfig, train_hea
from .simulator import NoiseModel, evaluate

HARTREE_KCAL = 627.51  # kcal/mol per Hartree, display only
AXES = ("coherent", "incoherent")
DELTA_GRID = tuple(round(0.025 * k, 4) for k in range(9))
P_GRID = tuple(round(0.02 * k, 4) for k in range(6))
CSV_COLUMNS = (
    "label", "axis", "train_point", "eval_point", "energy_mean", "energy_stderr",
    "fidelity_mean", "fidelity_stderr", "n_rot", "n_cx",
)


class SweepError(ValueError):
    """Raised for malformed sweeps: bad grids, missing circuits, absent baselines."""


def default_grid(axis: str) -> tuple[float, ...]:
    if axis not in AXES:
        raise SweepError(f"unknown axis {axis!r}")
    return DELTA_GRID if axis == "coherent" else P_GRID


def _check_grid(name: str, grid: Sequence[float], axis: str) -> tuple[float, ...]:
    grid = tuple(float(x) for x in grid)
    if any(not math.isfinite(x) or x < 0 for x in grid):
        raise SweepError(f"{name} must hold finite non-negative values")
    if list(grid) != sorted(grid):
        raise SweepError(f"{name} must be sorted ascending")
    if len(set(grid)) != len(grid):
        raise SweepError(f"{name} has repeated values")
    if axis == "incoherent" and any(x > 1 for x in grid):
        raise SweepError(f"{name}: dephasing rates must lie in [0, 1]")
    return grid


@dataclass(frozen=True)
class SweepCircuit:
    """One circuit family: a trained genome per training noise level.

    ``train_points`` restricts the family to its own levels; None means the sweep's.
    """

    label: str
    trained: dict[float, Genome]
    train_points: tuple[float, ...] | None = None

    def points(self, default: Sequence[float]) -> tuple[float, ...]:
        return tuple(default) if self.train_points is None else tuple(self.train_points)

    def at(self, train_point: float) -> Genome:
        for k, g in self.trained.items():
            if math.isclose(k, train_point, rel_tol=0, abs_tol=1e-12):
                return g
        raise SweepError(f"circuit {self.label!r} has no genome trained at {train_point}")


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    train_points: tuple[float, ...]
    circuits: tuple[SweepCircuit, ...]
    eval_grid: tuple[float, ...] | None = None  # None -> default grid for the axis
    n_eval_samples: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise SweepError(f"unknown axis {self.axis!r}")
        object.__setattr__(self, "train_points", _check_grid("train_points", self.train_points, self.axis))
        grid = default_grid(self.axis) if self.eval_grid is None else self.eval_grid
        object.__setattr__(self, "eval_grid", _check_grid("eval_grid", grid, self.axis))
        object.__setattr__(self, "circuits", tuple(self.circuits))
        for c in self.circuits:
            if c.train_points is not None:
                _check_grid(f"train_points of {c.label!r}", c.train_points, self.axis)
        if not self.train_points:
            raise SweepError("train_points is empty")
        if self.n_eval_samples < 1:
            raise SweepError("n_eval_samples must be positive")
        labels = [c.label for c in self.circuits]
        if len(set(labels)) != len(labels):
            raise SweepError("circuit labels must be unique")


@dataclass(frozen=True)
class SweepRecord:
    label: str
    axis: str
    train_point: float
    eval_point: float
    energy_mean: float
    energy_stderr: float
    fidelity_mean: float
    fidelity_stderr: float
    n_rot: int
    n_cx: int

    def row(self) -> list[str]:
        return [self.label, self.axis] + [repr(float(getattr(self, c))) for c in CSV_COLUMNS[2:8]] + [
            str(self.n_rot), str(self.n_cx)]


def noise_at(axis: str, level: float, n_samples: int = 10_000) -> NoiseModel:
    if axis == "coherent":
        return NoiseModel(delta=level, n_eval_samples=n_samples)
    if axis == "incoherent":
        return NoiseModel(p=level, n_eval_samples=n_samples)
    raise SweepError(f"unknown axis {axis!r}")


def hea_family(h: PauliHamiltonian, label: str, n_layers: int, axis: str, train_points: Sequence[float],
               train_cfg: TrainConfig | None = None, restarts: int = 8) -> SweepCircuit:
    """HEA trained separately at each training noise level."""
    base = train_cfg or TrainConfig()
    trained = {}
    for tp in train_points:
        cfg = replace(base, noise=noise_at(axis, tp))
        trained[float(tp)] = train_hea(h, n_layers, cfg, restarts=restarts)[0]
    return SweepCircuit(label, trained, tuple(float(t) for t in train_points))


def qceat_family(h: PauliHamiltonian, label: str, axis: str, train_points: Sequence[float],
                 cfg: EvolutionConfig | None = None) -> SweepCircuit:
    """One QCEAT run per training noise level; the family holds each run's best circuit."""
    base = cfg or EvolutionConfig()
    trained = {}
    for tp in train_points:
        run_cfg = replace(base, train_cfg=replace(base.train_cfg, noise=noise_at(axis, tp)))
        trained[float(tp)] = run_qceat(h, run_cfg).best.genome
    return SweepCircuit(label, trained, tuple(float(t) for t in train_points))


def point_seed(seed: int, label: str, train_point: float, eval_point: float) -> int:
    text = f"{seed}|{label}|{train_point!r}|{eval_point!r}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")


def evaluate_point(g: Genome, h: PauliHamiltonian, gs: GroundTruth, spec: SweepSpec, label: str,
                   train_point: float, eval_point: float) -> SweepRecord:
    """Energy and fidelity of a frozen circuit at one noise level of the sweep's axis."""
    rng = np.random.default_rng(point_seed(spec.seed, label, train_point, eval_point))
    out = evaluate(g, h, gs, noise_at(spec.axis, eval_point, spec.n_eval_samples), rng)
    (e, se), (f, sf) = out["energy"], out["fidelity"]
    f = min(max(f, 0.0), 1.0)
    return SweepRecord(label, spec.axis, train_point, eval_point, e, se, f, sf, g.n_rotations, g.n_cx)


def _run(jobs: list[tuple], h, gs, spec, threads: int) -> list[SweepRecord]:
    def one(job):
        c, tp, ep = job
        return evaluate_point(c.at(tp), h, gs, spec, c.label, tp, ep)

    for c, tp, _ in jobs:
        c.at(tp)  # fail before any work if a circuit is missing
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def imperfection_sweep(spec: SweepSpec, h: PauliHamiltonian, gs: GroundTruth,
                       threads: int = 1) -> list[SweepRecord]:
    """Each circuit evaluated at the noise level it was trained under."""
    jobs = [(c, tp, tp) for c in spec.circuits for tp in c.points(spec.train_points)]
    return _run(jobs, h, gs, spec, threads)


def training_sweep(spec: SweepSpec, h: PauliHamiltonian, gs: GroundTruth,
                   threads: int = 1) -> list[SweepRecord]:
    """Angles frozen at their training level, evaluated over the whole grid."""
    if not spec.eval_grid:
        raise SweepError("eval_grid is empty")
    jobs = [(c, tp, ep) for c in spec.circuits for tp in c.points(spec.train_points) for ep in spec.eval_grid]
    return _run(jobs, h, gs, spec, threads)


# -- persistence -------------------------------------------------------------------------
def write_csv(records: Iterable[SweepRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_csv(path: str | Path) -> list[SweepRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and tuple(rows[0].keys()) != CSV_COLUMNS:
        raise SweepError(f"{path}: unexpected columns {list(rows[0].keys())}")
    out = []
    for r in rows:
        out.append(SweepRecord(
            r["label"], r["axis"], float(r["train_point"]), float(r["eval_point"]),
            float(r["energy_mean"]), float(r["energy_stderr"]),
            float(r["fidelity_mean"]), float(r["fidelity_stderr"]),
            int(r["n_rot"]), int(r["n_cx"]),
        ))
    return out


# -- comparison ------------------------------------------------------------------------------
@dataclass(frozen=True)
class ComparisonRow:
    label: str
    axis: str
    train_point: float
    eval_point: float
    baseline_train_point: float
    energy_gap: float  # energy - baseline energy, Hartree
    fidelity_gap: float  # fidelity - baseline fidelity

    @property
    def energy_gap_kcal(self) -> float:
        return self.energy_gap * HARTREE_KCAL


@dataclass
class ComparisonReport:
    baseline: str
    rows: list[ComparisonRow]
    gate_counts: list[tuple[str, str, float, int, int]]  # label, axis, train_point, #R, #CX
    records: list[SweepRecord] = field(default_factory=list)

    def gate_table(self) -> str:
        lines = ["| circuit | axis | train point | #R | #CX |", "|---|---|---|---|---|"]
        for label, axis, tp, nr, ncx in self.gate_counts:
            lines.append(f"| {label} | {axis} | {tp:g} | {nr} | {ncx} |")
        return "\n".join(lines)

    def gap_table(self) -> str:
        lines = [
            f"| circuit | train point | eval point | dE vs {self.baseline} | dE (kcal/mol, if Hartree) "
            f"| dF vs {self.baseline} |",
            "|---|---|---|---|---|---|",
        ]
        for r in self.rows:
            lines.append(
                f"| {r.label} | {r.train_point:g} | {r.eval_point:g} | {r.energy_gap:+.6f} "
                f"| {r.energy_gap_kcal:+.4f} | {r.fidelity_gap:+.5f} |"
            )
        return "\n".join(lines)

    def to_text(self) -> str:
        return f"## Gate counts\n\n{self.gate_table()}\n\n## Gaps vs {self.baseline}\n\n{self.gap_table()}\n"

    def write(self, out_dir: str | Path, model: str) -> list[Path]:
        """Write the comparison CSVs, a markdown summary and SVG plots; returns the paths."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "comparison.csv", out / "gate_counts.csv", out / "report.md"]
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "axis", "train_point", "eval_point", "baseline_train_point",
                        "energy_gap", "energy_gap_kcal", "fidelity_gap"])
            for r in self.rows:
                w.writerow([r.label, r.axis, repr(r.train_point), repr(r.eval_point),
                            repr(r.baseline_train_point), repr(r.energy_gap),
                            repr(r.energy_gap_kcal), repr(r.fidelity_gap)])
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "axis", "train_point", "n_rot", "n_cx"])
            for label, axis, tp, nr, ncx in self.gate_counts:
                w.writerow([label, axis, repr(tp), nr, ncx])
        paths[2].write_text(self.to_text())
        paths += write_svg_plots(self.records, out, model)
        return paths


def compare_report(records: Sequence[SweepRecord], baseline_label: str) -> ComparisonReport:
    """Energy and fidelity gaps of every record against the baseline at the same eval point.

    The baseline record with the same training point is used when present,
    otherwise the baseline's lowest training point on that axis.
    """
    records = list(records)
    if not records:
        raise SweepError("no records to compare (empty eval grid?)")
    base = [r for r in records if r.label == baseline_label]
    if not base:
        raise SweepError(f"baseline {baseline_label!r} not among records")
    by_key = {(r.axis, r.train_point, r.eval_point): r for r in base}
    rows = []
    for r in records:
        b = by_key.get((r.axis, r.train_point, r.eval_point))
        if b is None:
            cands = sorted((x for x in base if x.axis == r.axis and x.eval_point == r.eval_point),
                           key=lambda x: x.train_point)
            if not cands:
                raise SweepError(f"baseline has no record at {r.axis} eval point {r.eval_point}")
            b = cands[0]
        rows.append(ComparisonRow(r.label, r.axis, r.train_point, r.eval_point, b.train_point,
                                  r.energy_mean - b.energy_mean, r.fidelity_mean - b.fidelity_mean))
    counts = sorted({(r.label, r.axis, r.train_point, r.n_rot, r.n_cx) for r in records},
                    key=lambda t: (t[0], t[1], t[2]))
    return ComparisonReport(baseline_label, rows, counts, records)


# -- SVG -------------------------------------------------------------------------------------
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


def svg_line_plot(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
                  width: int = 640, height: int = 420) -> str:
    """A minimal polyline chart with axes, five ticks per axis and a legend."""
    pts = [p for s in series.values() for p in s]
    if not pts:
        raise SweepError("nothing to plot")
    xs, ys = [p[0] for p in pts], [p[1] for p in pts]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    pad = 0.05 * (y1 - y0) if y1 > y0 else max(abs(y0) * 0.05, 1e-3)
    y0, y1 = y0 - pad, y1 + pad
    left, right, top, bottom = 80, 170, 40, 60
    pw, ph = width - left - right, height - top - bottom

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-size="14">{_esc(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for k in range(5):
        xv = x0 + (x1 - x0) * k / 4
        yv = y0 + (y1 - y0) * k / 4
        out.append(f'<line x1="{sx(xv):.1f}" y1="{top + ph}" x2="{sx(xv):.1f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{sx(xv):.1f}" y="{top + ph + 18}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<line x1="{left - 5}" y1="{sy(yv):.1f}" x2="{left}" y2="{sy(yv):.1f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{sy(yv) + 4:.1f}" text-anchor="end">{yv:.5g}</text>')
    out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 15}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (name, s) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        s = sorted(s)
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in s)
        out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in s:
            out.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>')
        ly = top + 10 + 18 * i
        out.append(f'<line x1="{left + pw + 15}" y1="{ly}" x2="{left + pw + 35}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 40}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_svg_plots(records: Sequence[SweepRecord], out_dir: str | Path, model: str) -> list[Path]:
    """One SVG per (axis, metric); one series per (label, train point)."""
    out = Path(out_dir)
    paths = []
    for axis in sorted({r.axis for r in records}):
        sym = "Delta" if axis == "coherent" else "p"
        for metric in ("energy", "fidelity"):
            series: dict[str, list[tuple[float, float]]] = {}
            for r in records:
                if r.axis != axis:
                    continue
                name = f"{r.label} ({sym}_t={r.train_point:g})"
                series.setdefault(name, []).append((r.eval_point, getattr(r, f"{metric}_mean")))
            ylabel = "energy (Hartree)" if metric == "energy" else "fidelity"
            svg = svg_line_plot(series, f"{model}: {metric} vs {sym}", sym, ylabel)
            path = out / f"{model}_{axis}_{metric}.svg"
            path.write_text(svg)
            paths.append(path)
    return paths


def record_dicts(records: Iterable[SweepRecord]) -> list[dict]:
    return [asdict(r) for r in records]
