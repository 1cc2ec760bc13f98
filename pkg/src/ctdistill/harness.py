"""Cohort experiments: degrade -> enhance -> evaluate, leave-one-out grids, histograms.

A run is described by a JSON config (see :func:`load_config`) and produces
CSV/JSON reports whose bytes depend only on the config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import Geometry, InvariantError, RngStream, Volume
from .degrade import DegradeSpec, clean_sinograms, degrade, measured_sinograms
from .enhance import EnhancerSpec, enhance
from .fileio import read_volume, write_volume
from .metrics import case_metrics, threshold_segment
from .phantom import AIRWAY, LUNG, PhantomSpec, make_phantom
from .projector import FbpFilter

CSV_COLUMNS = [
    "enhancer",
    "degradation",
    "case_id",
    "ssim",
    "psnr_db",
    "l_pp_mean",
    "l_pp_sum",
    "l_hu",
    "dice_lung",
    "dice_airway",
    "label_agreement",
]
METRIC_COLUMNS = CSV_COLUMNS[3:]
DEFAULT_TUNING = {"nlm": {"h": [10.0, 20.0, 40.0, 80.0]}, "tv": {"lam": [5.0, 10.0, 20.0, 40.0]}}
SOFT_TOLERANCE_DB = 0.5


class ConfigError(ValueError):
    pass


# -- configuration ---------------------------------------------------------------


def _build(cls, d, where, **extra):
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object, got {type(d).__name__}")
    allowed = {f.name for f in fields(cls)} - set(extra)
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    try:
        return cls(**d, **extra)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class Condition:
    """A named degradation column."""

    name: str
    spec: DegradeSpec


@dataclass(frozen=True)
class GeometryOverrides:
    n_angles: int = 720
    n_bins: int | None = None
    bin_spacing: float | None = None
    mu_water: float = 0.019


@dataclass(frozen=True)
class PipelineConfig:
    degradations: tuple
    enhancers: tuple
    phantom: PhantomSpec | None = None
    cases: int = 10
    input_dir: str | None = None
    seed: int = 0
    output_dir: str | None = None
    geometry: GeometryOverrides = GeometryOverrides()
    filter: FbpFilter = FbpFilter()
    save_volumes: bool = False
    workers: int = 1
    tuning: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.degradations:
            raise ConfigError("config needs at least one degradation")
        if not self.enhancers:
            raise ConfigError("config needs at least one enhancer")
        names = [c.name for c in self.degradations]
        if len(set(names)) != len(names):
            raise ConfigError(f"degradation names must be unique, got {names}")
        labels = [e.label for e in self.enhancers]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"enhancer names must be unique, got {labels}")
        if (self.phantom is None) == (self.input_dir is None):
            raise ConfigError("source must give exactly one of 'phantom' or 'input_dir'")
        if self.cases < 1:
            raise ConfigError("cases must be >= 1")
        for name, grid in self.tuning.items():
            if name not in labels:
                raise ConfigError(f"tuning refers to unknown enhancer {name!r}")
            for param, values in grid.items():
                if param not in {f.name for f in fields(EnhancerSpec)} or not values:
                    raise ConfigError(f"tuning for {name!r}: bad parameter {param!r} or empty grid")

    def canonical(self) -> dict:
        return _plain(self)

    def digest(self) -> str:
        """Hash of everything that can change results; output location and worker count cannot."""
        d = self.canonical()
        for key in ("output_dir", "workers"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _condition(d, i) -> Condition:
    where = f"degradations[{i}]"
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    d = dict(d)
    name = d.pop("name", None) or d.get("kind")
    if "mixed" in d:
        d["mixed"] = tuple(_build(DegradeSpec, m, f"{where}.mixed[{j}]") for j, m in enumerate(d["mixed"]))
    return Condition(str(name), _build(DegradeSpec, d, where))


def parse_config(raw: dict) -> PipelineConfig:
    """Validate a config mapping; every unknown key is an error."""
    top = {"source", "degradations", "enhancers", "seed", "output_dir", "geometry", "filter",
           "save_volumes", "workers", "tuning"}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(raw) - top)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    source = raw.get("source")
    if not isinstance(source, dict):
        raise ConfigError("config needs a 'source' object")
    unknown = sorted(set(source) - {"phantom", "cases", "input_dir"})
    if unknown:
        raise ConfigError(f"source: unknown key(s) {unknown}")
    phantom = None
    if "phantom" in source:
        ph = dict(source["phantom"])
        if "seed" in ph:
            raise ConfigError("source.phantom: per-case seeds derive from the top-level 'seed'")
        phantom = _build(PhantomSpec, ph, "source.phantom")
    degr = raw.get("degradations") or []
    enh = raw.get("enhancers") or []
    try:
        return PipelineConfig(
            degradations=tuple(_condition(d, i) for i, d in enumerate(degr)),
            enhancers=tuple(_build(EnhancerSpec, e, f"enhancers[{i}]") for i, e in enumerate(enh)),
            phantom=phantom,
            cases=int(source.get("cases", 10)),
            input_dir=source.get("input_dir"),
            seed=int(raw.get("seed", 0)),
            output_dir=raw.get("output_dir"),
            geometry=_build(GeometryOverrides, raw.get("geometry", {}), "geometry"),
            filter=_build(FbpFilter, raw.get("filter", {}), "filter"),
            save_volumes=bool(raw.get("save_volumes", False)),
            workers=int(raw.get("workers", 1)),
            tuning=dict(raw.get("tuning", {})),
        )
    except InvariantError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> PipelineConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw)


# -- cases -----------------------------------------------------------------------


@dataclass
class Case:
    case_id: str
    volume: Volume | None
    labels: object = None
    error: str | None = None


def _load_cases(config: PipelineConfig) -> list[Case]:
    if config.phantom is not None:
        cases = []
        for i in range(config.cases):
            seed = RngStream(config.seed).derive("phantom", i).stream_id
            spec = dataclasses.replace(config.phantom, seed=seed)
            try:
                vol, lab = make_phantom(spec)
                cases.append(Case(f"case{i:03d}", vol, lab))
            except Exception as exc:  # isolate per-case failures
                cases.append(Case(f"case{i:03d}", None, error=f"phantom: {exc}"))
        return cases
    root = Path(config.input_dir)
    if not root.is_dir():
        raise ConfigError(f"input_dir {root} is not a directory")
    cases = []
    for path in sorted(p for p in root.glob("*.ctk") if not p.name.endswith(".labels.ctk")):
        lab_path = path.with_name(path.stem + ".labels.ctk")
        try:
            vol = read_volume(path)
            if not isinstance(vol, Volume):
                raise ValueError("expected an HU volume, found a label map")
            lab = read_volume(lab_path) if lab_path.exists() else None
            cases.append(Case(path.stem, vol, lab))
        except Exception as exc:
            cases.append(Case(path.stem, None, error=f"read: {exc}"))
    if not cases:
        raise ConfigError(f"no .ctk volumes in {root}")
    return cases


# -- reports ---------------------------------------------------------------------


@dataclass
class CaseRow:
    enhancer: str
    degradation: str
    case_id: str
    values: dict | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _row_values(m) -> dict:
    return {
        "ssim": m.ssim,
        "psnr_db": m.psnr,
        "l_pp_mean": m.l_pp,
        "l_pp_sum": m.l_pp_sum,
        "l_hu": m.l_hu,
        "dice_lung": m.dice[LUNG],
        "dice_airway": m.dice[AIRWAY],
        "label_agreement": m.label_agreement,
    }


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


@dataclass
class EvalReport:
    """Per-case rows plus per-(enhancer, degradation) aggregates."""

    rows: list
    enhancers: list
    degradations: list
    metadata: dict = field(default_factory=dict)

    def cell(self, enhancer, degradation):
        return [r for r in self.rows if r.enhancer == enhancer and r.degradation == degradation]

    def aggregates(self) -> list[dict]:
        out = []
        for e in self.enhancers:
            for d in self.degradations:
                rows = self.cell(e, d)
                good = [r.values for r in rows if r.ok]
                agg = {"enhancer": e, "degradation": d, "n_cases": len(good), "n_failed": len(rows) - len(good)}
                for col in METRIC_COLUMNS:
                    vals = np.array([g[col] for g in good], dtype=np.float64)
                    agg[col + "_mean"] = float(vals.mean()) if vals.size else None
                    agg[col + "_std"] = float(vals.std()) if vals.size else None
                out.append(agg)
        return out

    def mean(self, enhancer, degradation, metric) -> float:
        vals = [r.values[metric] for r in self.cell(enhancer, degradation) if r.ok]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def failures(self) -> list:
        return [r for r in self.rows if not r.ok]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            vals = r.values or {}
            w.writerow([r.enhancer, r.degradation, r.case_id] + [_fmt(vals.get(c)) for c in METRIC_COLUMNS])
        for a in self.aggregates():
            w.writerow([a["enhancer"], a["degradation"], "mean"] + [_fmt(a[c + "_mean"]) for c in METRIC_COLUMNS])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "metadata": self.metadata,
            "enhancers": self.enhancers,
            "degradations": self.degradations,
            "rows": [
                {"enhancer": r.enhancer, "degradation": r.degradation, "case_id": r.case_id,
                 "values": r.values, "error": r.error}
                for r in self.rows
            ],
            "aggregates": self.aggregates(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d) -> "EvalReport":
        rows = [CaseRow(r["enhancer"], r["degradation"], r["case_id"], r["values"], r["error"]) for r in d["rows"]]
        return cls(rows, list(d["enhancers"]), list(d["degradations"]), dict(d.get("metadata", {})))

    @classmethod
    def from_json(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def table(self) -> str:
        """Methods as rows, degradations as SSIM (x100) / PSNR column pairs."""
        return render_table(
            [(e, [(self.mean(e, d, "ssim"), self.mean(e, d, "psnr_db")) for d in self.degradations])
             for e in self.enhancers],
            self.degradations,
        )

    def write(self, out_dir, stem="report") -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.csv").write_text(self.to_csv())
        (out / f"{stem}.json").write_text(self.to_json())
        (out / f"{stem}_table.txt").write_text(self.table())


def render_table(rows, conditions) -> str:
    width = max([len("method")] + [len(r[0]) for r in rows]) + 2
    head1 = "method".ljust(width) + "".join(c.replace("_", " ").center(14) for c in conditions)
    head2 = " " * width + "".join("SSIM".rjust(7) + "PSNR".rjust(7) for _ in conditions)
    lines = [head1.rstrip(), head2.rstrip()]
    for label, cells in rows:
        parts = []
        for s, p in cells:
            parts.append(("  n/a" if math.isnan(s) else f"{100 * s:.1f}").rjust(7))
            parts.append(("  n/a" if math.isnan(p) else f"{p:.1f}").rjust(7))
        lines.append(label.ljust(width) + "".join(parts))
    return "\n".join(lines) + "\n"


# -- pipeline --------------------------------------------------------------------


def _evaluate(config: PipelineConfig, variants) -> tuple[list, list]:
    """Rows for every case x degradation x (key, EnhancerSpec) variant."""
    cases = _load_cases(config)
    out_dir = Path(config.output_dir) if config.output_dir else None
    need_sino = any(c.spec.kind != "conventional" for c in config.degradations) or any(
        v.kind == "sirt" for _, v in variants
    )

    def run_case(idx):
        case = cases[idx]
        rows = []
        if case.volume is None:
            for cond in config.degradations:
                rows += [CaseRow(k, cond.name, case.case_id, error=case.error) for k, _ in variants]
            return rows
        x = case.volume
        try:
            geom = Geometry.for_volume(x, **dataclasses.asdict(config.geometry))
            sinos = clean_sinograms(x, geom) if need_sino else None
            labels = case.labels if case.labels is not None else threshold_segment(x)
        except Exception as exc:
            for cond in config.degradations:
                rows += [CaseRow(k, cond.name, case.case_id, error=f"setup: {exc}") for k, _ in variants]
            return rows
        for cond in config.degradations:
            rng = RngStream(config.seed).derive("degrade", cond.name, case.case_id)
            try:
                xd = degrade(x, cond.spec, geom, config.filter, rng, sinos)
            except Exception as exc:
                rows += [CaseRow(k, cond.name, case.case_id, error=f"degrade: {exc}") for k, _ in variants]
                continue
            if out_dir and config.save_volumes:
                vdir = out_dir / "volumes" / case.case_id
                vdir.mkdir(parents=True, exist_ok=True)
                write_volume(x, vdir / "truth.ctk")
                write_volume(xd, vdir / f"{cond.name}.ctk")
            measured = None
            for key, spec in variants:
                try:
                    if spec.kind == "sirt" and measured is None:
                        measured = measured_sinograms(x, cond.spec, geom, rng, sinos) or False
                    case_dir = None
                    if spec.kind == "external":
                        base = Path(spec.workdir) if spec.workdir else (out_dir or Path(".")) / "exchange"
                        case_dir = base / key / cond.name / case.case_id
                    xe = enhance(xd, spec, geom, measured or None, case_dir)
                    m = case_metrics(xe, x, labels)
                    rows.append(CaseRow(key, cond.name, case.case_id, _row_values(m)))
                    if out_dir and config.save_volumes:
                        write_volume(xe, out_dir / "volumes" / case.case_id / f"{cond.name}__{key}.ctk")
                except Exception as exc:
                    rows.append(CaseRow(key, cond.name, case.case_id, error=f"enhance: {exc}"))
        return rows

    idxs = range(len(cases))
    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as ex:
            per_case = list(ex.map(run_case, idxs))
    else:
        per_case = [run_case(i) for i in idxs]
    rows = [r for rs in per_case for r in rs]
    order = {k: i for i, (k, _) in enumerate(variants)}
    dorder = {c.name: i for i, c in enumerate(config.degradations)}
    corder = {c.case_id: i for i, c in enumerate(cases)}
    rows.sort(key=lambda r: (order[r.enhancer], dorder[r.degradation], corder[r.case_id]))
    return rows, cases


def _metadata(config: PipelineConfig, **extra) -> dict:
    md = {
        "config_hash": config.digest(),
        "seed": config.seed,
        "toolkit_version": __version__,
        "ssim_convention": "slice-mean SSIM; tables show x100",
        "enhancers": {e.label: _plain(e) for e in config.enhancers},
        "degradations": {c.name: _plain(c.spec) for c in config.degradations},
    }
    md.update(extra)
    return md


def run_pipeline(config: PipelineConfig) -> EvalReport:
    """Evaluate every enhancer on every degradation of every case."""
    variants = [(e.label, e) for e in config.enhancers]
    rows, _ = _evaluate(config, variants)
    report = EvalReport(rows, [e.label for e in config.enhancers], [c.name for c in config.degradations],
                        _metadata(config))
    if config.output_dir:
        report.write(config.output_dir)
    return report


# -- leave-one-out ablation ------------------------------------------------------


def _grid(config: PipelineConfig, spec: EnhancerSpec) -> list[dict]:
    grid = config.tuning.get(spec.label) or DEFAULT_TUNING.get(spec.kind) or {}
    if not grid:
        return [{}]
    keys = sorted(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _variant_key(label, params) -> str:
    if not params:
        return label
    return label + "[" + ",".join(f"{k}={params[k]!r}" for k in sorted(params)) + "]"


@dataclass
class AblationRow:
    label: str
    excluded: str | None
    chosen: dict
    report: EvalReport


@dataclass
class AblationResult:
    rows: list
    degradations: list
    enhancers: list
    flags: list
    metadata: dict

    def row(self, label) -> AblationRow:
        return next(r for r in self.rows if r.label == label)

    def table(self, enhancer) -> str:
        cells = []
        for r in self.rows:
            cells.append((r.label, [(r.report.mean(enhancer, d, "ssim"), r.report.mean(enhancer, d, "psnr_db"))
                                    for d in self.degradations]))
        return f"[{enhancer}]\n" + render_table(cells, self.degradations)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["enhancer", "row", "params"]
        for d in self.degradations:
            cols += [f"{d}_ssim", f"{d}_psnr_db"]
        w.writerow(cols)
        for e in self.enhancers:
            for r in self.rows:
                line = [e, r.label, json.dumps(r.chosen[e], sort_keys=True)]
                for d in self.degradations:
                    line += [_fmt(r.report.mean(e, d, "ssim")), _fmt(r.report.mean(e, d, "psnr_db"))]
                w.writerow(line)
        return buf.getvalue()

    def to_json(self) -> str:
        d = {
            "metadata": self.metadata,
            "degradations": self.degradations,
            "enhancers": self.enhancers,
            "flags": self.flags,
            "rows": [{"label": r.label, "excluded": r.excluded, "chosen": r.chosen, "report": r.report.to_dict()}
                     for r in self.rows],
        }
        return json.dumps(d, indent=2, sort_keys=True) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.csv").write_text(self.to_csv())
        (out / "ablation.json").write_text(self.to_json())
        (out / "ablation_table.txt").write_text("\n".join(self.table(e) for e in self.enhancers))


def ablate(config: PipelineConfig) -> AblationResult:
    """Leave-one-out grid over the training (non-mixed) degradations.

    Tunable enhancers pick the grid point with the best mean SSIM on the
    retained degradations, then are scored on every degradation.
    """
    if len(config.degradations) < 2:
        raise ConfigError("ablate needs at least two degradations")
    variants, grid_of = [], {}
    for e in config.enhancers:
        grid_of[e.label] = []
        for params in _grid(config, e):
            key = _variant_key(e.label, params)
            variants.append((key, dataclasses.replace(e, **params)))
            grid_of[e.label].append((key, params))
    rows, _ = _evaluate(config, variants)
    names = [c.name for c in config.degradations]
    training = [c.name for c in config.degradations if c.spec.kind != "mixed"] or names

    by_key = {}
    for r in rows:
        by_key.setdefault(r.enhancer, []).append(r)

    def _score(key, train):
        rs = [r for r in by_key.get(key, []) if r.degradation in train]
        if not rs or any(not r.ok for r in rs):
            return -math.inf
        return float(np.mean([r.values["ssim"] for r in rs]))

    plan = [(f"w/o. {d.replace('_', ' ')}", d, [t for t in training if t != d]) for d in training]
    plan.append(("all degrades", None, training))
    out_rows = []
    for label, excluded, train in plan:
        chosen, picked = {}, []
        for e in config.enhancers:
            best_key, best_params, best = None, None, -math.inf
            for key, params in grid_of[e.label]:
                s = _score(key, train)
                if best_key is None or s > best:
                    best_key, best_params, best = key, params, s
            chosen[e.label] = best_params
            picked.append((e.label, best_key))
        sub = []
        for e_label, key in picked:
            sub += [dataclasses.replace(r, enhancer=e_label) for r in by_key.get(key, [])]
        report = EvalReport(sub, [e.label for e in config.enhancers], names,
                            _metadata(config, row=label, chosen=chosen))
        out_rows.append(AblationRow(label, excluded, chosen, report))

    flags = []
    all_row = out_rows[-1]
    for r in out_rows[:-1]:
        for e in config.enhancers:
            mine = r.report.mean(e.label, r.excluded, "psnr_db")
            ref = all_row.report.mean(e.label, r.excluded, "psnr_db")
            if mine > ref:
                status = "flagged" if mine - ref <= SOFT_TOLERANCE_DB else "violated"
                flags.append({"row": r.label, "enhancer": e.label, "condition": r.excluded,
                              "psnr_without": mine, "psnr_all": ref, "status": status})
    result = AblationResult(out_rows, names, [e.label for e in config.enhancers], flags,
                            _metadata(config, training=training))
    if config.output_dir:
        result.write(config.output_dir)
    return result


# -- score distributions ---------------------------------------------------------


@dataclass
class Histogram:
    metric: str
    edges: list
    counts: dict  # (enhancer, degradation) -> list[int]

    def mean_bin(self, enhancer, degradation) -> float:
        c = np.asarray(self.counts[(enhancer, degradation)], dtype=np.float64)
        return float((np.arange(c.size) * c).sum() / c.sum()) if c.sum() else math.nan

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["enhancer", "degradation", "bin", "lo", "hi", "count"])
        for (e, d), cs in self.counts.items():
            for i, c in enumerate(cs):
                w.writerow([e, d, i, _fmt(self.edges[i]), _fmt(self.edges[i + 1]), c])
        return buf.getvalue()

    def to_svg(self) -> str:
        groups = list(self.counts.items())
        nb = len(self.edges) - 1
        panel_w, panel_h, pad = 360, 90, 20
        peak = max([max(cs) for _, cs in groups] + [1])
        h = pad + len(groups) * (panel_h + pad)
        out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{panel_w + 2 * pad}" height="{h}" '
               f'font-family="sans-serif" font-size="10">']
        for gi, ((e, d), cs) in enumerate(groups):
            top = pad + gi * (panel_h + pad)
            out.append(f'<text x="{pad}" y="{top - 4}">{e} / {d} ({self.metric})</text>')
            out.append(f'<line x1="{pad}" y1="{top + panel_h}" x2="{pad + panel_w}" y2="{top + panel_h}" '
                       'stroke="black"/>')
            bw = panel_w / nb
            for i, c in enumerate(cs):
                bh = panel_h * c / peak
                out.append(f'<rect x="{pad + i * bw:.2f}" y="{top + panel_h - bh:.2f}" width="{bw * 0.9:.2f}" '
                           f'height="{bh:.2f}" fill="#4a7ab5"/>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def write(self, out_dir, stem=None) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = stem or f"hist_{self.metric}"
        (out / f"{stem}.csv").write_text(self.to_csv())
        (out / f"{stem}.svg").write_text(self.to_svg())


def score_histogram(report: EvalReport, metric: str = "ssim", bins: int = 20, out_dir=None) -> Histogram:
    """Counts of ``metric`` per (enhancer, degradation) on shared bin edges."""
    if metric not in METRIC_COLUMNS:
        raise ValueError(f"unknown metric {metric!r}; choose from {METRIC_COLUMNS}")
    good = [r for r in report.rows if r.ok]
    if not good:
        raise ValueError("report has no successful cases")
    vals = np.array([r.values[metric] for r in good], dtype=np.float64)
    edges = np.histogram_bin_edges(vals, bins=bins)
    counts = {}
    for e in report.enhancers:
        for d in report.degradations:
            v = [r.values[metric] for r in good if r.enhancer == e and r.degradation == d]
            counts[(e, d)] = [int(c) for c in np.histogram(v, bins=edges)[0]]
    hist = Histogram(metric, [float(x) for x in edges], counts)
    if out_dir:
        hist.write(out_dir)
    return hist
