"""``gen-pde``: train, evaluate, compare, inspect bases and run reference oracles.

Every artifact is written atomically (temp file + rename).  CSVs are
RFC 4180 with a header row and 17 significant digits; anything time-dependent
goes to ``run.log`` so that the CSV/JSON outputs of a rerun are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .autodiff import ParamVector, TapeStructureError
from .basis import BasisFamily, BasisSet, LAYOUTS, basis_values, check_counts
from .errors import CheckpointError, ConfigurationError, NumericalError
from .model import ExactModel, GenModel, flatten, make_gen, make_pinn, unflatten
from .pde import Box, PROBLEMS, fd_reference, get_problem, uniform_axes
from .training import (DESK_ITERATIONS, TrainConfig, TrainingAborted, evaluate, extrapolation_report, train)

log = logging.getLogger("genpde")

CHECKPOINT_FORMAT = "genpde-checkpoint"
CHECKPOINT_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_CHECKPOINT = 0, 2, 3, 4

PRESETS = ("heat-sine", "heat-gauss", "heat-pinn", "wave-sine", "wave-gauss", "wave-pinn",
           "burgers-25", "burgers-100", "heat-exact")

ANALYTIC = {"heat": "closed-form", "wave": "dalembert", "burgers": "cole-hopf"}


# --- experiment config -------------------------------------------------------------

_TRAIN_FIELDS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}


@dataclass
class ExperimentConfig:
    name: str
    problem: str
    model: str  # gen | pinn | exact
    family: str | None = None
    count_m: int = 0
    count_n: int = 0
    combine: str = "product"
    hidden: list[int] = field(default_factory=lambda: [20, 20, 20, 20])
    seed: int = 0
    train: dict = field(default_factory=dict)
    grid: list[int] = field(default_factory=lambda: [101, 101])
    extrapolation: list[float] | None = None
    out: str | None = None

    def __post_init__(self):
        if self.problem not in PROBLEMS:
            raise ConfigurationError(f"field 'problem': unknown problem {self.problem!r}; expected one of "
                                     f"{sorted(PROBLEMS)}")
        if self.model not in ("gen", "pinn", "exact"):
            raise ConfigurationError(f"field 'model': expected 'gen', 'pinn' or 'exact', got {self.model!r}")
        if self.model == "gen":
            if self.family is None:
                raise ConfigurationError("field 'family': a gen model needs a basis family")
            try:
                fam = BasisFamily.parse(self.family)
            except ConfigurationError as exc:
                raise ConfigurationError(f"field 'family': {exc}") from None
            self.family = fam.value
            check_counts(fam, self.count_m, self.count_n)
            if self.combine not in ("product", "factors"):
                raise ConfigurationError(f"field 'combine': expected 'product' or 'factors', got {self.combine!r}")
        if self.model == "exact" and get_problem(self.problem).reference_jet is None:
            raise ConfigurationError(f"field 'model': no closed-form jet solution for {self.problem!r}")
        if not (isinstance(self.hidden, list) and self.hidden and all(isinstance(h, int) and h > 0
                                                                       for h in self.hidden)):
            raise ConfigurationError("field 'hidden': expected a non-empty list of positive integers")
        unknown = set(self.train) - _TRAIN_FIELDS
        if unknown:
            hint = " (the seed lives at the top level)" if "seed" in unknown else ""
            raise ConfigurationError(f"field 'train': unknown keys {sorted(unknown)}{hint}")
        self.grid = list(parse_grid(self.grid))
        if self.extrapolation is not None:
            if len(self.extrapolation) != 4:
                raise ConfigurationError("field 'extrapolation': expected [x_lo, x_hi, t_lo, t_hi]")
            Box(*map(float, self.extrapolation))
        self.train_config()  # validates the training block

    def train_config(self) -> TrainConfig:
        opts = {"iterations": DESK_ITERATIONS, **self.train, "seed": self.seed}
        try:
            return TrainConfig(**opts)
        except TypeError as exc:
            raise ConfigurationError(f"field 'train': {exc}") from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict, source: str = "<config>") -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{source}: top level must be a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigurationError(f"{source}: unknown field {unknown[0]!r}")
        for req in ("name", "problem", "model"):
            if req not in doc:
                raise ConfigurationError(f"{source}: missing field {req!r}")
        try:
            return cls(**doc)
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None


def parse_grid(spec) -> tuple[int, int]:
    if isinstance(spec, str):
        parts = spec.split(",")
    else:
        parts = list(spec)
    try:
        nx, nt = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise ConfigurationError(f"grid must be NX,NT, got {spec!r}") from None
    if nx < 2 or nt < 2:
        raise ConfigurationError(f"grid needs at least 2 points per axis, got {nx},{nt}")
    return nx, nt


def preset_path(name: str):
    return resources.files("genpde") / "presets" / f"{name}.json"


def load_config(ref: str) -> ExperimentConfig:
    """Load a config from a path, or from a shipped preset by name."""
    path = Path(ref)
    if path.is_file():
        text, source = path.read_text(), str(path)
    elif ref in PRESETS:
        text, source = preset_path(ref).read_text(), f"preset {ref}"
    else:
        raise ConfigurationError(f"no config file or preset named {ref!r}; presets: {', '.join(PRESETS)}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return ExperimentConfig.from_dict(doc, source)


# --- models and checkpoints ---------------------------------------------------------

def build_model(cfg: ExperimentConfig):
    problem = get_problem(cfg.problem)
    if cfg.model == "gen":
        return make_gen(cfg.family, cfg.count_m, cfg.count_n, problem.domain.as_tuple(), seed=cfg.seed,
                        combine=cfg.combine)
    if cfg.model == "pinn":
        return make_pinn(tuple(cfg.hidden), seed=cfg.seed)
    return ExactModel(problem.name, problem.reference_jet)


def checkpoint_doc(cfg: ExperimentConfig, model, iteration: int, rng_state: dict | None) -> dict:
    pv = flatten(model)
    index = [[name, sl.start, sl.stop, list(shape)] for name, (sl, shape) in pv.index.items()]
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "iteration": iteration,
        "rng_state": rng_state,
        "params": {"index": index, "values": pv.values.tolist()},
    }


def load_checkpoint(path) -> tuple[ExperimentConfig, object, dict]:
    """Read a checkpoint; the format tag and version are checked before anything else."""
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"checkpoint {path} not found") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: not a checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: missing format tag {CHECKPOINT_FORMAT!r}")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {doc.get('version')!r}, this build reads "
                              f"{CHECKPOINT_VERSION}")
    try:
        cfg = ExperimentConfig.from_dict(doc["config"], f"{path} config")
        values = np.asarray(doc["params"]["values"], dtype=float)
        arrays = [(name, values[lo:hi].reshape(shape)) for name, lo, hi, shape in doc["params"]["index"]]
        skeleton = build_model(cfg)
        model = unflatten(ParamVector.from_arrays(arrays), skeleton)
    except (KeyError, TypeError, ValueError, TapeStructureError) as exc:
        if isinstance(exc, ConfigurationError):
            raise CheckpointError(f"{path}: {exc}") from None
        raise CheckpointError(f"{path}: parameter layout does not match its config ({exc})") from None
    return cfg, model, doc


# --- artifact writers -----------------------------------------------------------------

def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else format(v, ".17g")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, columns):
    """Columns (equal-length sequences) become rows."""
    write_atomic(path, csv_text(header, zip(*columns)))


def write_json(path, doc):
    write_atomic(path, json.dumps(doc, indent=1, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def append_log(out: Path, message: str):
    out.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(out / "run.log", "a") as fh:
        fh.write(f"{stamp} {message}\n")


# --- SVG heatmaps ---------------------------------------------------------------------

# fixed diverging map (blue - white - red), value in [-1, 1]
_DIVERGING = np.array([
    [5, 48, 97], [33, 102, 172], [67, 147, 195], [146, 197, 222], [209, 229, 240], [247, 247, 247],
    [253, 219, 199], [244, 165, 130], [214, 96, 77], [178, 24, 43], [103, 0, 31]], dtype=float)


def _color(v: float) -> str:
    if not np.isfinite(v):
        return "#808080"
    s = (np.clip(v, -1.0, 1.0) + 1.0) / 2.0 * (len(_DIVERGING) - 1)
    i = min(int(s), len(_DIVERGING) - 2)
    c = _DIVERGING[i] + (s - i) * (_DIVERGING[i + 1] - _DIVERGING[i])
    return "#%02x%02x%02x" % tuple(int(round(ch)) for ch in c)


def heatmap_svg(x, t, panels: list[tuple[str, np.ndarray, float]], cell: float = 3.0, max_cells: int = 100) -> str:
    """Panels of (title, values (nx, nt), limit); colour = value / limit on the diverging map."""
    sx = max(1, int(np.ceil(len(x) / max_cells)))
    st = max(1, int(np.ceil(len(t) / max_cells)))
    xi, ti = np.arange(0, len(x), sx), np.arange(0, len(t), st)
    w, h = len(xi) * cell, len(ti) * cell
    pad, top = 20.0, 30.0
    width = len(panels) * (w + pad) + pad
    height = h + top + 35.0
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
           f'font-family="sans-serif" font-size="11">']
    for k, (title, vals, limit) in enumerate(panels):
        ox = pad + k * (w + pad)
        out.append(f'<text x="{ox:.1f}" y="18">{title} (limit {limit:.3g})</text>')
        lim = limit if limit > 0 else 1.0
        for a, i in enumerate(xi):
            for b, j in enumerate(ti):
                # t increases upwards
                y = top + h - (b + 1) * cell
                out.append(f'<rect x="{ox + a * cell:.1f}" y="{y:.1f}" width="{cell:.1f}" height="{cell:.1f}" '
                           f'fill="{_color(vals[i, j] / lim)}"/>')
        out.append(f'<text x="{ox:.1f}" y="{top + h + 14:.1f}">x {x[0]:g} to {x[-1]:g}, '
                   f't {t[0]:g} to {t[-1]:g}</text>')
    out.append("</svg>\n")
    return "\n".join(out)


# --- commands ---------------------------------------------------------------------------

def _out_dir(args, cfg: ExperimentConfig | None, default: str) -> Path:
    if args.out:
        return Path(args.out)
    if cfg is not None and cfg.out:
        return Path(cfg.out)
    return Path(default)


def cmd_train(args) -> int:
    if not args.config:
        raise ConfigurationError("train needs --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.iters is not None:
        cfg.train = {**cfg.train, "iterations": args.iters}
    cfg = ExperimentConfig.from_dict(cfg.to_dict(), "command line")
    out = _out_dir(args, cfg, f"runs/{cfg.name}")
    problem = get_problem(cfg.problem)
    model = build_model(cfg)
    tc = cfg.train_config()
    if cfg.model == "exact":
        tc = dataclasses.replace(tc, iterations=0)
    log.info("training %s (%s, %d parameters) for %d iterations", cfg.name, cfg.model, len(flatten(model)),
             tc.iterations)
    try:
        model, report = train(model, problem, tc)
    except TrainingAborted as exc:
        write_json(out / "report.json", _report_doc(exc.report))
        append_log(out, f"train {cfg.name} aborted: {exc} ({exc.diagnostics})")
        raise
    write_json(out / "checkpoint.json", checkpoint_doc(cfg, model, report.completed, report.rng_state))
    write_json(out / "report.json", _report_doc(report))
    n = report.completed
    write_csv(out / "history.csv", ["iteration", "loss", "mse_pde", "mse_bc", "mse_ic"],
              [np.arange(n), report.loss[:n], report.mse_pde[:n], report.mse_bc[:n], report.mse_ic[:n]])
    append_log(out, f"train {cfg.name} seed={cfg.seed} iterations={n} wall_clock={report.wall_clock:.2f}s")
    final = report.summary()["final_loss"]
    print(f"{cfg.name}: {n} iterations, final loss {final if final is None else format(final, '.4e')}")
    print(f"checkpoint: {out / 'checkpoint.json'}")
    return EXIT_OK


def _report_doc(report) -> dict:
    doc = report.summary()
    doc.pop("wall_clock")  # lives in run.log
    return doc


def cmd_eval(args) -> int:
    cfg, model, _ = load_checkpoint(_one_checkpoint(args))
    problem = get_problem(cfg.problem)
    nx, nt = parse_grid(args.grid) if args.grid else tuple(cfg.grid)
    grid, metrics = evaluate(model, problem, problem.domain, nx, nt)
    out = _out_dir(args, cfg, f"runs/{cfg.name}")
    X, T = grid.mesh()
    err = np.abs(grid.u - grid.reference)
    write_csv(out / "solution.csv", ["x", "t", "u_model", "u_ref", "abs_err"],
              [X.ravel(), T.ravel(), grid.u.ravel(), grid.reference.ravel(), err.ravel()])
    doc = {"name": cfg.name, "problem": cfg.problem, "model": cfg.model, "grid": [nx, nt],
           "box": list(problem.domain.as_tuple()), **metrics}
    write_json(out / "metrics.json", doc)
    if args.svg:
        lim = float(np.nanmax(np.abs(grid.reference)))
        diff = grid.u - grid.reference
        panels = [("reference", grid.reference, lim), (cfg.name, grid.u, lim),
                  ("model - reference", diff, float(np.nanmax(np.abs(diff))))]
        write_atomic(out / "heatmap.svg", heatmap_svg(grid.x, grid.t, panels))
    print(f"{'name':<16}{'grid':>10}{'rel_l2':>14}{'max_abs':>14}")
    print(f"{cfg.name:<16}{f'{nx}x{nt}':>10}{metrics['rel_l2']:>14.4e}{metrics['max_abs']:>14.4e}")
    return EXIT_OK


def _one_checkpoint(args) -> str:
    if not args.checkpoint or len(args.checkpoint) != 1:
        raise ConfigurationError(f"{args.command} needs exactly one --checkpoint")
    return args.checkpoint[0]


def _labels(names: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for n in names:
        seen[n] = seen.get(n, 0) + 1
        out.append(n if seen[n] == 1 else f"{n}#{seen[n]}")
    return out


def cmd_compare(args) -> int:
    if not args.checkpoint or len(args.checkpoint) != 2:
        raise ConfigurationError("compare needs two --checkpoint arguments (gen, then pinn)")
    loaded = [load_checkpoint(p) for p in args.checkpoint]
    cfgs = [c for c, _, _ in loaded]
    if cfgs[0].problem != cfgs[1].problem:
        raise ConfigurationError(f"checkpoints solve different problems: {cfgs[0].problem} vs {cfgs[1].problem}")
    problem = get_problem(cfgs[0].problem)
    if cfgs[0].extrapolation is not None:
        problem = dataclasses.replace(problem, extrapolation_domain=Box(*map(float, cfgs[0].extrapolation)))
    labels = _labels([c.name for c in cfgs])
    models = dict(zip(labels, (m for _, m, _ in loaded)))
    nx, nt = parse_grid(args.grid) if args.grid else tuple(cfgs[0].grid)
    rep = extrapolation_report(models, problem, nx, nt)
    out = _out_dir(args, None, f"runs/compare-{labels[0]}-{labels[1]}")

    fit, ext = problem.domain, problem.extrapolation_domain
    # edges of the fit box that lie inside the extrapolation box
    boundary = {}
    xs = [v for v in (fit.x_lo, fit.x_hi) if ext.x_lo < v < ext.x_hi]
    ts = [v for v in (fit.t_lo, fit.t_hi) if ext.t_lo < v < ext.t_hi]
    if xs:
        boundary["x"] = xs
    if ts:
        boundary["t"] = ts
    profiles = []
    for pr in rep["profiles"]:
        axis_var = "t" if pr["axis"] == "x" else "x"
        fname = f"profile_{pr['axis']}{pr['locus']:g}.csv"
        region = np.where(pr["in_fit"], "fit", "extrapolation")
        write_csv(out / fname, [axis_var, "region", "reference", *labels],
                  [pr["s"], region, pr["reference"], *(pr["curves"][k] for k in labels)])
        profiles.append({"file": fname, "axis": pr["axis"], "locus": pr["locus"], "metrics": pr["metrics"]})
    doc = {"problem": problem.name, "models": labels, "fit_box": list(fit.as_tuple()),
           "extrapolation_box": list(ext.as_tuple()), "region_boundary": boundary, "grid": [nx, nt],
           "regions": rep["regions"], "profiles": profiles}
    write_json(out / "compare.json", doc)

    print(f"fit region x in [{fit.x_lo:g}, {fit.x_hi:g}], t in [{fit.t_lo:g}, {fit.t_hi:g}]; "
          f"extrapolation box x in [{ext.x_lo:g}, {ext.x_hi:g}], t in [{ext.t_lo:g}, {ext.t_hi:g}]")
    edges = ", ".join(f"{k} = {float(v)!r}" for k, vs in boundary.items() for v in vs)
    print(f"region boundary: {edges or 'none'}")
    print(f"{'model':<16}{'fit rel_l2':>14}{'extrap rel_l2':>16}")
    for k in labels:
        r = rep["regions"][k]
        print(f"{k:<16}{r['fit']['rel_l2']:>14.4e}{r['extrapolation']['rel_l2']:>16.4e}")
    for p in profiles:
        cells = "  ".join(f"{k} {p['metrics'][k]['all']['rel_l2']:.4e}" for k in labels)
        print(f"profile {p['axis']}={p['locus']:g}: {cells}")
    return EXIT_OK


def basis_table(bset: BasisSet) -> tuple[list[str], list[list]]:
    """One row per basis entry: group, index, then every column of the family's layout."""
    columns: list[str] = []
    for _, cols, _ in LAYOUTS[bset.family]:
        columns += [c for c in cols if c not in columns]
    rows = []
    for group, cols, _ in LAYOUTS[bset.family]:
        for i, row in enumerate(bset.tables[group]):
            vals = dict(zip(cols, row))
            rows.append([group, i] + [vals.get(c, np.nan) for c in columns])
    return ["group", "index"] + columns, rows


def basis_from_table(bset_like: BasisSet, rows: list[dict]) -> BasisSet:
    """Rebuild a basis set from parsed parameter-table rows (inverse of ``basis_table``)."""
    tables = {}
    for group, cols, _ in LAYOUTS[bset_like.family]:
        mine = sorted((r for r in rows if r["group"] == group), key=lambda r: int(r["index"]))
        tables[group] = np.array([[float(r[c]) for c in cols] for r in mine]).reshape(len(mine), len(cols))
    return BasisSet(bset_like.family, bset_like.count_m, bset_like.count_n, tables, bset_like.domain,
                    combine=bset_like.combine)


def cmd_dump_basis(args) -> int:
    cfg, model, _ = load_checkpoint(_one_checkpoint(args))
    if not isinstance(model, GenModel):
        raise ConfigurationError(f"{cfg.name} is a {cfg.model} model: no basis to dump")
    problem = get_problem(cfg.problem)
    nx, nt = parse_grid(args.grid) if args.grid else tuple(cfg.grid)
    out = _out_dir(args, cfg, f"runs/{cfg.name}")
    header, rows = basis_table(model.basis)
    write_atomic(out / "basis_params.csv", csv_text(header, rows))
    x, t = uniform_axes(problem.domain, nx, nt)
    X, T = np.meshgrid(x, t, indexing="ij")
    vals = basis_values(model.basis, X.ravel(), T.ravel())
    k = vals.shape[1]
    write_csv(out / "basis_curves.csv", ["x", "t"] + [f"basis_{i}" for i in range(k)],
              [X.ravel(), T.ravel(), *vals.T])
    print(f"{cfg.name}: {model.basis.family.value}, {len(rows)} parameter rows, {k} curves on {nx}x{nt}")
    return EXIT_OK


def _oracle(problem, method: str, nx: int, nt: int, box: Box, cols):
    if method == "fd":
        return fd_reference(problem, nx, nt, box).u[:, cols]
    if method in (ANALYTIC[problem.name], "analytic"):
        x, t = uniform_axes(box, nx, nt)
        X, T = np.meshgrid(x, t[cols], indexing="ij")
        return np.asarray(problem.reference(X, T), dtype=float)
    raise ConfigurationError(f"unknown oracle {method!r} for {problem.name}; expected "
                             f"{ANALYTIC[problem.name]!r} or 'fd'")


def _time_columns(spec: str | None, t: np.ndarray) -> np.ndarray:
    if not spec:
        return np.arange(t.size)
    cols = []
    for part in spec.split(","):
        try:
            v = float(part)
        except ValueError:
            raise ConfigurationError(f"--times: not a number: {part!r}") from None
        j = int(np.argmin(np.abs(t - v)))
        if abs(t[j] - v) > 1e-9 * max(1.0, abs(v)):
            raise ConfigurationError(f"--times: t = {v:g} is not a grid time (nearest {t[j]:.17g})")
        cols.append(j)
    return np.array(sorted(set(cols)))


def cmd_oracle(args) -> int:
    if args.problem is None:
        if not args.config:
            raise ConfigurationError("oracle needs a problem name (or --config)")
        args.problem = load_config(args.config).problem
    problem = get_problem(args.problem)
    methods = args.method or [ANALYTIC[problem.name]]
    if len(methods) > 2:
        raise ConfigurationError("oracle compares at most two methods")
    nx, nt = parse_grid(args.grid) if args.grid else (101, 101)
    box = problem.domain
    out = Path(args.out or f"runs/oracle-{problem.name}")
    x, t = uniform_axes(box, nx, nt)
    cols = _time_columns(args.times, t)
    X, T = np.meshgrid(x, t[cols], indexing="ij")
    fields = {}
    for m in methods:
        u = _oracle(problem, m, nx, nt, box, cols)
        fields[m] = u
        write_csv(out / f"oracle_{m}.csv", ["x", "t", "u"], [X.ravel(), T.ravel(), u.ravel()])
    doc = {"problem": problem.name, "methods": methods, "grid": [nx, nt], "box": list(box.as_tuple()),
           "times": None if args.times is None else [float(v) for v in t[cols]]}
    if len(methods) == 2:
        a, b = (fields[m] for m in methods)
        diff = np.abs(a - b)
        # interior: drop the x boundaries and the initial time
        inner = diff[1:-1][:, t[cols] > box.t_lo]
        doc["max_discrepancy"] = float(np.max(diff))
        doc["max_discrepancy_interior"] = float(np.max(inner)) if inner.size else 0.0
        print(f"{problem.name}: max |{methods[0]} - {methods[1]}| = {doc['max_discrepancy']:.3e} "
              f"(interior {doc['max_discrepancy_interior']:.3e}) on {nx}x{nt}")
    else:
        print(f"{problem.name}: {methods[0]} on {nx}x{nt} written to {out}")
    write_json(out / "oracle.json", doc)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "compare": cmd_compare, "dump-basis": cmd_dump_basis,
            "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gen-pde", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=False, grid=False):
        sp.add_argument("--out", help="output directory")
        if checkpoint:
            sp.add_argument("--checkpoint", action="append", help="checkpoint JSON (repeat for compare)")
        if grid:
            sp.add_argument("--grid", help="evaluation grid NX,NT")
        return sp

    tr = common(sub.add_parser("train", help="train a model from a config or preset"))
    tr.add_argument("--config", help=f"config path or preset ({', '.join(PRESETS)})")
    tr.add_argument("--seed", type=int)
    tr.add_argument("--iters", type=int)
    ev = common(sub.add_parser("eval", help="evaluate a checkpoint on a grid"), checkpoint=True, grid=True)
    ev.add_argument("--svg", action="store_true", help="also write heatmap.svg")
    common(sub.add_parser("compare", help="fit/extrapolation errors of two checkpoints"), checkpoint=True, grid=True)
    common(sub.add_parser("dump-basis", help="learned basis parameters and curves"), checkpoint=True, grid=True)
    orc = common(sub.add_parser("oracle", help="reference solutions on a grid"), grid=True)
    orc.add_argument("problem", nargs="?", choices=sorted(PROBLEMS))
    orc.add_argument("--method", action="append",
                     help="closed-form / dalembert / cole-hopf (analytic) or fd; give two to compare")
    orc.add_argument("--config", help="take the problem from a config instead")
    orc.add_argument("--times", help="only these grid times, comma separated (e.g. 0.25,0.5)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CheckpointError as exc:
        print(f"gen-pde: incompatible checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except ConfigurationError as exc:
        print(f"gen-pde: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"gen-pde: numerical failure: {exc} {exc.diagnostics or ''}".rstrip(), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
