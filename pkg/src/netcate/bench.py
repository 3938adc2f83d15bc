"""Config-driven experiment harness.

Reads the flat two-level YAML experiment format, runs (seed x estimator)
grids with optional process parallelism, and writes machine-readable
artifacts: a per-seed results CSV, a summary JSON, a monospace table plus
a small SVG chart, per-cell timings, and a manifest listing every written
file with its content hash.

Determinism contract: the numeric outputs are a pure function of the
config and the seed list.  Each seed derives its own labelled random
streams, workers communicate nothing but finished results, and rows are
written in a fixed order, so results.csv is byte-identical at any
parallelism level.  Wall-clock timings are inherently nondeterministic
and therefore live in their own file, never in results.csv.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dgp import CATE_KINDS, DgpConfig, generate_dataset
from .errors import ParseError, ValidationError
from .estimators import (ALL_KINDS, KIND_BY_NAME, EstimatorKind, TrainConfig,
                         estimate)
from .graphs import GraphSpec
from .stats import (EstimatorScores, ExperimentSummary, SeedResult,
                    hub_periphery_errors, summarize)

GRAPH_TYPES = ("ba", "er", "sbm")
DEFAULT_ESTIMATORS = tuple(kind.value for kind in ALL_KINDS)

# maximum tolerated fraction of failed seeds before the run reports failure
FAILURE_BUDGET = 0.10


@dataclass
class ExperimentConfig:
    """In-memory mirror of one experiment YAML file."""

    name: str
    num_seeds: int
    # data_params
    n: int | None
    d: int | None
    graph_type: str | None
    cate_type: str
    real_data_name: str | None
    noise_level: float
    # model_params
    num_layers: int
    hidden_dim: int
    # training_params
    nuisance_epochs: int
    cate_epochs: int
    lr: float
    # not part of the file format: estimator subset for this run
    estimators: tuple[str, ...] = DEFAULT_ESTIMATORS

    def __post_init__(self):
        if self.num_seeds < 1:
            raise ValidationError("num_seeds must be at least 1")
        if self.cate_type not in CATE_KINDS:
            raise ValidationError(f"unknown cate_type {self.cate_type!r}")
        if self.real_data_name is not None:
            if not (self.n is None and self.d is None and self.graph_type is None):
                raise ValidationError(
                    "real-data configs must set n, d and graph_type to null"
                )
        else:
            if self.graph_type not in GRAPH_TYPES:
                raise ValidationError(
                    f"graph_type must be one of {GRAPH_TYPES}, got {self.graph_type!r}"
                )
            if self.n is None or self.d is None:
                raise ValidationError("synthetic configs need n and d")
        if self.noise_level < 0:
            raise ValidationError("noise_level must be non-negative")
        if not self.estimators:
            raise ValidationError("estimator subset must be non-empty")
        for name in self.estimators:
            if name not in KIND_BY_NAME:
                raise ValidationError(f"unknown estimator {name!r}")

    def train_config(self) -> TrainConfig:
        return TrainConfig(num_layers=self.num_layers, hidden_dim=self.hidden_dim,
                           nuisance_epochs=self.nuisance_epochs,
                           cate_epochs=self.cate_epochs, lr=self.lr)

    def dgp_config(self) -> DgpConfig:
        return DgpConfig(d=self.d, cate_kind=self.cate_type,
                         noise_level=self.noise_level)

    def graph_spec(self, data_dir="data") -> GraphSpec:
        if self.real_data_name is not None:
            base = Path(data_dir) / self.real_data_name
            return GraphSpec(kind="file", edge_path=str(base) + ".edges",
                             feature_path=str(base) + ".features")
        return GraphSpec(kind=self.graph_type, n=self.n)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "num_seeds": self.num_seeds,
            "data_params": {
                "n": self.n,
                "d": self.d,
                "graph_type": self.graph_type,
                "cate_type": self.cate_type,
                "real_data_name": self.real_data_name,
                "noise_level": self.noise_level,
            },
            "model_params": {
                "num_layers": self.num_layers,
                "hidden_dim": self.hidden_dim,
            },
            "training_params": {
                "nuisance_epochs": self.nuisance_epochs,
                "cate_epochs": self.cate_epochs,
                "lr": self.lr,
            },
        }


# ---------------------------------------------------------------------------
# strict YAML parsing with line numbers
# ---------------------------------------------------------------------------

_SCHEMA = {
    "name": str,
    "num_seeds": int,
    "data_params": {
        "n": (int, type(None)),
        "d": (int, type(None)),
        "graph_type": (str, type(None)),
        "cate_type": str,
        "real_data_name": (str, type(None)),
        "noise_level": (float, int),
    },
    "model_params": {
        "num_layers": int,
        "hidden_dim": int,
    },
    "training_params": {
        "nuisance_epochs": int,
        "cate_epochs": int,
        "lr": (float, int),
    },
}


def _scalar_value(node, path):
    tag = node.tag.rsplit(":", 1)[-1]
    if tag == "null":
        return None
    if tag == "int":
        return int(node.value)
    if tag == "float":
        return float(node.value)
    if tag == "str":
        return node.value
    raise ParseError(f"unsupported value type {tag!r}", path=path,
                     line=node.start_mark.line + 1)


def _mapping_items(node, path, context):
    if not isinstance(node, yaml.MappingNode):
        raise ParseError(f"{context} must be a mapping", path=path,
                         line=node.start_mark.line + 1)
    items = []
    seen = set()
    for key_node, value_node in node.value:
        key = key_node.value
        if key in seen:
            raise ParseError(f"duplicate key {key!r}", path=path,
                             line=key_node.start_mark.line + 1)
        seen.add(key)
        items.append((key, key_node, value_node))
    return items


def parse_config(path) -> ExperimentConfig:
    """Parse one experiment YAML file under a strict schema.

    Unknown keys, missing keys, and type mismatches are rejected with the
    file path and the offending line number.
    """
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise ParseError(f"invalid YAML: {exc}", path=path, line=line) from None
    if root is None:
        raise ParseError("config file is empty", path=path)

    flat: dict[str, object] = {}
    for key, key_node, value_node in _mapping_items(root, path, "config root"):
        if key not in _SCHEMA:
            raise ParseError(f"unknown key {key!r}", path=path,
                             line=key_node.start_mark.line + 1)
        expected = _SCHEMA[key]
        if isinstance(expected, dict):
            section: dict[str, object] = {}
            for sub, sub_key_node, sub_value_node in _mapping_items(value_node, path, key):
                if sub not in expected:
                    raise ParseError(f"unknown key {key}.{sub!r}", path=path,
                                     line=sub_key_node.start_mark.line + 1)
                value = _scalar_value(sub_value_node, path)
                allowed = expected[sub]
                allowed = allowed if isinstance(allowed, tuple) else (allowed,)
                if not isinstance(value, allowed) or isinstance(value, bool):
                    raise ParseError(
                        f"{key}.{sub} has the wrong type ({type(value).__name__})",
                        path=path, line=sub_value_node.start_mark.line + 1)
                section[sub] = value
            missing = set(expected) - set(section)
            if missing:
                raise ParseError(f"missing keys in {key}: {sorted(missing)}",
                                 path=path, line=key_node.start_mark.line + 1)
            flat[key] = section
        else:
            value = _scalar_value(value_node, path)
            if not isinstance(value, expected) or isinstance(value, bool):
                raise ParseError(f"{key} has the wrong type ({type(value).__name__})",
                                 path=path, line=value_node.start_mark.line + 1)
            flat[key] = value
    missing = set(_SCHEMA) - set(flat)
    if missing:
        raise ParseError(f"missing keys: {sorted(missing)}", path=path)

    dp, mp, tp = flat["data_params"], flat["model_params"], flat["training_params"]
    try:
        return ExperimentConfig(
            name=flat["name"], num_seeds=flat["num_seeds"],
            n=dp["n"], d=dp["d"], graph_type=dp["graph_type"],
            cate_type=dp["cate_type"], real_data_name=dp["real_data_name"],
            noise_level=float(dp["noise_level"]),
            num_layers=mp["num_layers"], hidden_dim=mp["hidden_dim"],
            nuisance_epochs=tp["nuisance_epochs"], cate_epochs=tp["cate_epochs"],
            lr=float(tp["lr"]),
        )
    except ValidationError as exc:
        raise ParseError(str(exc), path=path) from None


def _emit_scalar(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, str):
        return f"'{v}'"
    return repr(v)


def emit_config(cfg: ExperimentConfig) -> str:
    """Serialize a config in the same flat two-level layout parse_config reads."""
    data = cfg.to_dict()
    lines = [f"name: {_emit_scalar(data['name'])}",
             f"num_seeds: {data['num_seeds']}", ""]
    for section in ("data_params", "model_params", "training_params"):
        lines.append(f"{section}:")
        for key, value in data[section].items():
            lines.append(f"  {key}: {_emit_scalar(value)}")
        lines.append("")
    return "\n".join(lines)


_OVERRIDE_TYPES = {
    "num_seeds": int,
    "data_params.n": int,
    "data_params.d": int,
    "data_params.graph_type": str,
    "data_params.cate_type": str,
    "data_params.real_data_name": str,
    "data_params.noise_level": float,
    "model_params.num_layers": int,
    "model_params.hidden_dim": int,
    "training_params.nuisance_epochs": int,
    "training_params.cate_epochs": int,
    "training_params.lr": float,
}

_OVERRIDE_FIELDS = {
    "num_seeds": "num_seeds",
    "data_params.n": "n",
    "data_params.d": "d",
    "data_params.graph_type": "graph_type",
    "data_params.cate_type": "cate_type",
    "data_params.real_data_name": "real_data_name",
    "data_params.noise_level": "noise_level",
    "model_params.num_layers": "num_layers",
    "model_params.hidden_dim": "hidden_dim",
    "training_params.nuisance_epochs": "nuisance_epochs",
    "training_params.cate_epochs": "cate_epochs",
    "training_params.lr": "lr",
}


def apply_override(cfg: ExperimentConfig, assignment: str) -> ExperimentConfig:
    """Apply one 'section.key=value' override; returns a new config."""
    if "=" not in assignment:
        raise ValidationError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    if key not in _OVERRIDE_FIELDS:
        raise ValidationError(f"unknown override path {key!r}")
    caster = _OVERRIDE_TYPES[key]
    raw = raw.strip()
    value = None if raw in ("null", "None") else caster(raw)
    return replace(cfg, **{_OVERRIDE_FIELDS[key]: value})


# ---------------------------------------------------------------------------
# running experiments
# ---------------------------------------------------------------------------

@dataclass
class RunArtifacts:
    """Where a run wrote its outputs, plus the in-memory summary."""

    out_dir: Path
    results_csv: Path
    summary_json: Path
    manifest_json: Path
    summary: ExperimentSummary | None
    failed_seeds: dict[int, str] = field(default_factory=dict)
    embeddings_csv: Path | None = None

    @property
    def ok(self) -> bool:
        total = (self.summary.num_seeds if self.summary else 0) + len(self.failed_seeds)
        if total == 0 or self.summary is None:
            return False
        return len(self.failed_seeds) <= FAILURE_BUDGET * total


def _run_seed(cfg: ExperimentConfig, seed: int, data_dir: str):
    """Worker: one seed, every requested estimator.  Returns score dicts."""
    spec = cfg.graph_spec(data_dir)
    g, ds = generate_dataset(spec, cfg.dgp_config(), seed)
    tcfg = cfg.train_config()
    scores = {}
    for name in cfg.estimators:
        start = time.perf_counter()
        est = estimate(KIND_BY_NAME[name], ds, g, tcfg, seed)
        elapsed = time.perf_counter() - start
        mse = float(np.mean((est.tau_hat - ds.tau) ** 2))
        hub_mse, peri_mse = hub_periphery_errors(est.tau_hat, ds.tau, g)
        scores[name] = {"mse": mse, "hub_mse": hub_mse, "periphery_mse": peri_mse,
                        "wall_time_s": elapsed}
    return scores


def _run_seed_guarded(args):
    cfg, seed, data_dir = args
    try:
        return seed, _run_seed(cfg, seed, data_dir), None
    except Exception as exc:  # noqa: BLE001 -- seed isolation by contract
        return seed, None, f"{type(exc).__name__}: {exc}"


def resolve_parallelism(requested=None) -> int:
    """CLI flag wins, then BENCH_THREADS, then the machine's core count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("BENCH_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _fmt(v: float) -> str:
    return repr(float(v))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run_experiment(cfg: ExperimentConfig, parallelism=None, out_dir=None,
                   data_dir="data") -> RunArtifacts:
    """Run the full (seed x estimator) grid and write every artifact.

    A failing seed is recorded in the manifest and excluded from the
    summary; the run is only marked failed when more than 10% of seeds
    fail (RunArtifacts.ok).  Results are independent of parallelism.
    """
    workers = resolve_parallelism(parallelism)
    out_dir = Path(out_dir) if out_dir is not None else Path("runs") / cfg.name
    out_dir.mkdir(parents=True, exist_ok=True)

    started = time.perf_counter()
    jobs = [(cfg, seed, data_dir) for seed in range(cfg.num_seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_seed_guarded, jobs))
    else:
        outcomes = [_run_seed_guarded(job) for job in jobs]
    outcomes.sort(key=lambda item: item[0])

    results: list[SeedResult] = []
    failed: dict[int, str] = {}
    for seed, scores, err in outcomes:
        if err is not None:
            failed[seed] = err
            continue
        results.append(SeedResult(seed=seed, scores={
            name: EstimatorScores(mse=s["mse"], hub_mse=s["hub_mse"],
                                  periphery_mse=s["periphery_mse"],
                                  wall_time_s=s["wall_time_s"])
            for name, s in scores.items()
        }))

    results_csv = out_dir / "results.csv"
    with open(results_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("seed,estimator,mse,hub_mse,periphery_mse\n")
        for r in results:
            for name in cfg.estimators:
                s = r.scores[name]
                fh.write(f"{r.seed},{name},{_fmt(s.mse)},{_fmt(s.hub_mse)},"
                         f"{_fmt(s.periphery_mse)}\n")

    timings_csv = out_dir / "timings.csv"
    with open(timings_csv, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("seed,estimator,wall_time_s\n")
        for r in results:
            for name in cfg.estimators:
                fh.write(f"{r.seed},{name},{r.scores[name].wall_time_s:.3f}\n")

    summary = summarize(results) if len(results) >= 2 else None
    summary_json = out_dir / "summary.json"
    summary_json.write_text(json.dumps(_summary_payload(summary, failed), indent=2)
                            + "\n", encoding="utf-8")

    table_txt = out_dir / "summary.txt"
    chart_svg = out_dir / "chart.svg"
    if summary is not None:
        text, svg = render_summary(summary)
        table_txt.write_text(text, encoding="utf-8")
        chart_svg.write_text(svg, encoding="utf-8")

    manifest_json = out_dir / "manifest.json"
    files = [p for p in (results_csv, timings_csv, summary_json, table_txt, chart_svg)
             if p.exists()]
    manifest = {
        "config": cfg.to_dict(),
        "estimators": list(cfg.estimators),
        "seeds": list(range(cfg.num_seeds)),
        "failed_seeds": {str(k): v for k, v in sorted(failed.items())},
        "parallelism": workers,
        "code_version": __version__,
        "total_wall_time_s": round(time.perf_counter() - started, 3),
        "files": {p.name: _sha256(p) for p in files},
    }
    manifest_json.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    return RunArtifacts(out_dir=out_dir, results_csv=results_csv,
                        summary_json=summary_json, manifest_json=manifest_json,
                        summary=summary, failed_seeds=failed)


def _summary_payload(summary: ExperimentSummary | None, failed) -> dict:
    if summary is None:
        return {"error": "fewer than two seeds finished",
                "failed_seeds": {str(k): v for k, v in sorted(failed.items())}}
    return {
        "estimators": summary.estimators,
        "num_seeds": summary.num_seeds,
        "mean_mse": summary.mean_mse,
        "std_mse": summary.std_mse,
        "mean_hub_mse": summary.mean_hub_mse,
        "mean_periphery_mse": summary.mean_periphery_mse,
        "comparisons": [
            {"a": a, "b": b, "mean_diff": c.mean_diff, "t": c.t, "p": c.p,
             "degenerate": c.degenerate}
            for (a, b), c in summary.comparisons.items()
        ],
        "two_model_test": summary.verdict,
        "failed_seeds": {str(k): v for k, v in sorted(failed.items())},
    }


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def sweep(cfg: ExperimentConfig, param_path: str, values, parallelism=None,
          out_dir=None, data_dir="data") -> list[RunArtifacts]:
    """Run the experiment once per value of one numeric config field.

    Emits each run under its own subdirectory plus a combined long-format
    sweep.csv (param, value, seed, estimator, mse, ...) for plotting.
    """
    if param_path not in _OVERRIDE_FIELDS:
        raise ValidationError(f"unknown sweep parameter {param_path!r}")
    if not values:
        raise ValidationError("sweep needs at least one value")
    out_dir = Path(out_dir) if out_dir is not None else Path("runs") / f"{cfg.name}_sweep"
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    rows = []
    for value in values:
        sub_cfg = apply_override(cfg, f"{param_path}={value}")
        slug = str(value).replace(".", "p")
        art = run_experiment(sub_cfg, parallelism=parallelism,
                             out_dir=out_dir / f"{param_path.split('.')[-1]}_{slug}",
                             data_dir=data_dir)
        artifacts.append(art)
        with open(art.results_csv, "r", encoding="utf-8") as fh:
            next(fh)
            for line in fh:
                rows.append(f"{param_path},{value},{line.rstrip()}")
    combined = out_dir / "sweep.csv"
    with open(combined, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("param,value,seed,estimator,mse,hub_mse,periphery_mse\n")
        for row in rows:
            fh.write(row + "\n")
    return artifacts


# ---------------------------------------------------------------------------
# embedding export
# ---------------------------------------------------------------------------

def export_embeddings(cfg: ExperimentConfig, seed: int, out_path=None,
                      data_dir="data") -> Path:
    """Write the graph-aware learner's final-layer embeddings for one seed.

    CSV columns: node_id, true_tau, e1..e_hidden.  Intended for external
    projection (t-SNE and friends); this library does not plot.
    """
    if EstimatorKind.GRAPH_RLEARNER.value not in cfg.estimators:
        raise ValidationError("embedding export needs GraphRLearner in the estimator set")
    spec = cfg.graph_spec(data_dir)
    g, ds = generate_dataset(spec, cfg.dgp_config(), seed)
    est = estimate(EstimatorKind.GRAPH_RLEARNER, ds, g, cfg.train_config(), seed)
    emb = est.embeddings
    out_path = Path(out_path) if out_path is not None else (
        Path("runs") / cfg.name / f"embeddings_seed{seed}.csv")
    out_path.parent.mkdir(parents=True, exist_ok=True)
    hidden = emb.shape[1]
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node_id,true_tau," + ",".join(f"e{k+1}" for k in range(hidden)) + "\n")
        for i in range(g.n):
            cells = [str(i), _fmt(ds.tau[i])] + [_fmt(v) for v in emb[i]]
            fh.write(",".join(cells) + "\n")
    return out_path


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def render_summary(summary: ExperimentSummary):
    """(monospace table, SVG bar chart) for one experiment summary."""
    ref = EstimatorKind.GRAPH_RLEARNER.value
    lines = [f"{'estimator':<16} {'mean mse':>10} {'std':>8} {'p vs ' + ref:>16}"]
    for name in summary.estimators:
        if name == ref or ref not in summary.mean_mse:
            p_text = "-"
        else:
            pair = (name, ref) if (name, ref) in summary.comparisons else (ref, name)
            comp = summary.comparisons[pair]
            p_text = "degenerate" if comp.degenerate else f"{comp.p:.3g}"
        lines.append(f"{name:<16} {summary.mean_mse[name]:>10.4f} "
                     f"{summary.std_mse[name]:>8.4f} {p_text:>16}")
    if summary.verdict is not None:
        lines.append("")
        lines.append(f"two-model test: {summary.verdict}")
    text = "\n".join(lines) + "\n"
    return text, _bar_chart_svg(summary)


def _bar_chart_svg(summary: ExperimentSummary) -> str:
    names = summary.estimators
    means = [summary.mean_mse[n] for n in names]
    stds = [summary.std_mse[n] for n in names]
    top = max(m + s for m, s in zip(means, stds)) or 1.0
    width, height, margin = 640, 360, 50
    plot_h = height - 2 * margin
    bar_w = (width - 2 * margin) / max(len(names), 1)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{margin}" y="{margin - 20}" font-size="14">mean CATE error '
        f'(whiskers: one std over {summary.num_seeds} seeds)</text>',
    ]
    for i, (name, m, s) in enumerate(zip(names, means, stds)):
        x = margin + i * bar_w + 0.15 * bar_w
        w = 0.7 * bar_w
        h = plot_h * m / top
        y = height - margin - h
        cx = x + w / 2
        y_lo = height - margin - plot_h * max(m - s, 0.0) / top
        y_hi = height - margin - plot_h * (m + s) / top
        parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{w:.1f}" height="{h:.1f}" '
                     f'fill="steelblue"/>')
        parts.append(f'<line x1="{cx:.1f}" y1="{y_lo:.1f}" x2="{cx:.1f}" '
                     f'y2="{y_hi:.1f}" stroke="black"/>')
        parts.append(f'<text x="{cx:.1f}" y="{height - margin + 16}" font-size="11" '
                     f'text-anchor="middle">{name}</text>')
        parts.append(f'<text x="{cx:.1f}" y="{y - 4:.1f}" font-size="11" '
                     f'text-anchor="middle">{m:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
