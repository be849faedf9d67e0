"""Reproducible experiment driver.

Subcommands: ``synthesize | leaders | covariance | gridsearch | tune | ablate``.

Every run is controlled by a flat key-value config (defaults, optionally a
``key = value`` config file, then command-line flags, in increasing
precedence).  Every output embeds the build id, the master seed and a hash of
the effective config, and all randomness derives from the master seed, so a
repeated run produces byte-identical files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__, texture
from .covariance import (
    CovarianceModel,
    average_covariance,
    draw_probe,
    estimate_covariance,
    load_covariance,
    restrict,
    save_covariance,
)
from .errors import ConfigError, DataError, SolverDivergenceError, TunerError
from .forward import ScaleRange, linear_regression
from .risk import SureReport, fd_step, sure
from .solver import SolverConfig, TvSolver
from .tuner import TraceRow, TunerConfig, init_hyperparams, tune

PRESETS = {
    "D": [(0.5, 0.6), (0.75, 0.7)],
    "E": [(0.5, 0.6), (0.9, 1.1)],
}

EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER, EXIT_TUNER = 2, 3, 4, 5


@dataclass
class RunConfig:
    preset: str = "E"  # D | E | custom
    size: int = 128
    regions: str = ""  # custom preset: "H,var;H,var;..."
    mask: str = ""  # custom preset: path to a 16-bit PGM label map
    ellipse_a: float = 0.3
    ellipse_b: float = 0.4
    j1: int = 1
    j2: int = 3
    cov_source: str = "single"  # single | averaged | file
    cov_kind: str = "full"  # full | inter | var
    cov_samples: int = 100
    cov_path: str = ""
    radius_factor: float = 4.0
    kappa: float = 0.5
    tuner_max_iter: int = 250
    grad_tol: float = 1e-6
    line_evals: int = 20
    grid_points: int = 15
    grid_span: float = 2.0  # decades on each side of the balanced init
    gap_tol: float = 1e-4
    solver_max_iter: int = 500_000
    accelerate: bool = True
    n_classes: int = 2
    sure_probes: int = 1  # >1 averages SURE over several probes (extension)
    seed: int = 0
    workers: int = 1
    out: str = "runs/out"


def parse_config_file(path: str) -> dict:
    values = {}
    known = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def _coerce(name: str, value, target_type) -> object:
    if isinstance(value, target_type):
        return value
    try:
        if target_type is bool:
            if str(value).lower() in ("1", "true", "yes", "on"):
                return True
            if str(value).lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return target_type(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {name}: cannot parse {value!r}") from exc


def build_config(args: argparse.Namespace) -> RunConfig:
    values = {}
    if args.config:
        values.update(parse_config_file(args.config))
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    cfg = RunConfig()
    for f in fields(RunConfig):
        if f.name in values:
            setattr(cfg, f.name, _coerce(f.name, values[f.name], type(getattr(cfg, f.name))))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    if cfg.preset not in ("D", "E", "custom"):
        raise ConfigError(f"unknown preset {cfg.preset!r}")
    if cfg.preset == "custom" and not cfg.regions:
        raise ConfigError("custom preset requires the 'regions' key")
    if cfg.cov_source not in ("single", "averaged", "file"):
        raise ConfigError(f"unknown covariance source {cfg.cov_source!r}")
    if cfg.cov_kind not in ("full", "inter", "var"):
        raise ConfigError(f"unknown covariance kind {cfg.cov_kind!r}")
    if cfg.cov_source == "file" and not cfg.cov_path:
        raise ConfigError("cov_source=file requires cov_path")
    if cfg.j1 < 1 or cfg.j2 < cfg.j1:
        raise ConfigError(f"invalid octave range [{cfg.j1}, {cfg.j2}]")
    if cfg.size < 2 or cfg.grid_points < 2 or cfg.n_classes < 1:
        raise ConfigError("size, grid_points and n_classes must be sensible")


def config_hash(cfg: RunConfig) -> str:
    canon = json.dumps(asdict(cfg), sort_keys=True)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def run_header(cfg: RunConfig) -> dict:
    return {
        "build": f"steintv-{__version__}",
        "seed": cfg.seed,
        "config": config_hash(cfg),
    }


def header_comment(cfg: RunConfig) -> str:
    h = run_header(cfg)
    return f"# build={h['build']} seed={h['seed']} config={h['config']}"


def derive_seed(master: int, stream: int) -> int:
    return int(np.random.SeedSequence([master, stream]).generate_state(1)[0])


# -- pipeline pieces ---------------------------------------------------------


def make_spec(cfg: RunConfig) -> texture.TextureSpec:
    n = cfg.size
    if cfg.preset in PRESETS:
        regions = PRESETS[cfg.preset]
        mask = texture.elliptical_mask(n, n, (cfg.ellipse_a, cfg.ellipse_b))
    else:
        try:
            regions = [
                tuple(float(p) for p in part.split(","))
                for part in cfg.regions.split(";")
                if part.strip()
            ]
        except ValueError as exc:
            raise ConfigError(f"cannot parse regions {cfg.regions!r}") from exc
        if cfg.mask:
            mask = texture.read_pgm16(cfg.mask)
            if mask.shape != (n, n):
                raise DataError("mask size disagrees with configured size")
        else:
            mask = texture.elliptical_mask(n, n, (cfg.ellipse_a, cfg.ellipse_b))
    return texture.TextureSpec(mask, regions, seed=derive_seed(cfg.seed, 0))


def make_leaders(cfg: RunConfig, spec: texture.TextureSpec):
    scales = ScaleRange(cfg.j1, cfg.j2)
    image = texture.synthesize(spec, cfg.size, cfg.size)
    ell = texture.log_leaders(texture.uwt2d(image, cfg.j2), scales)
    return image, ell, scales


def make_covariance(cfg: RunConfig, ell: np.ndarray, scales: ScaleRange) -> CovarianceModel:
    if cfg.cov_source == "file":
        model = load_covariance(cfg.cov_path)
        if model.scales != scales:
            raise DataError("covariance file octave range disagrees with config")
    elif cfg.cov_source == "single":
        model = estimate_covariance(ell, scales, cfg.radius_factor)
    else:
        samples = []
        base_spec = make_spec(cfg)
        for q in range(cfg.cov_samples):
            spec_q = texture.TextureSpec(
                base_spec.mask, base_spec.regions, seed=derive_seed(cfg.seed, 100 + q)
            )
            _, ell_q, _ = make_leaders(cfg, spec_q)
            samples.append(estimate_covariance(ell_q, scales, cfg.radius_factor))
        model = average_covariance(samples)
    model.seed_lineage = f"seed={cfg.seed} source={cfg.cov_source}"
    if cfg.cov_kind != "full":
        model = restrict(model, cfg.cov_kind)
    return model


def make_solver(cfg: RunConfig, scales: ScaleRange) -> TvSolver:
    return TvSolver(
        scales,
        SolverConfig(
            gap_tol=cfg.gap_tol,
            max_iter=cfg.solver_max_iter,
            accelerate=cfg.accelerate,
        ),
    )


def grid_values(cfg: RunConfig, lam0: np.ndarray):
    offsets = np.linspace(-cfg.grid_span, cfg.grid_span, cfg.grid_points)
    return lam0[0] * 10.0**offsets, lam0[1] * 10.0**offsets


def _write_csv(path: Path, cfg: RunConfig, column_header: str, rows: list) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(header_comment(cfg) + "\n")
        fh.write(column_header + "\n")
        for row in rows:
            fh.write(row + "\n")


# -- grid evaluation ---------------------------------------------------------


def _grid_node(task: dict) -> dict:
    scales = ScaleRange(task["j1"], task["j2"])
    solver = TvSolver(
        scales,
        SolverConfig(
            gap_tol=task["gap_tol"],
            max_iter=task["max_iter"],
            accelerate=task["accelerate"],
        ),
    )
    y = task["y"]
    model = task["model"]
    lam = np.array(task["lam"])
    reports = [
        sure(y, lam, model, task["nu"], eps, solver, seed=task["seed"])
        for eps in task["probes"]
    ]
    value = float(np.mean([r.value for r in reports]))
    rep = reports[0]
    out = {
        "lam": (float(lam[0]), float(lam[1])),
        "sure": value,
        "fid": rep.term_fidelity,
        "dof": rep.term_dof,
        "trace": rep.term_trace,
        "risk": float("nan"),
        "seg_error": float("nan"),
    }
    if task["truth_h"] is not None:
        x_hat = solver.solve(y, lam)
        out["risk"] = float(((x_hat[0] - task["truth_h"]) ** 2).sum())
        seg = texture.threshold_segment(x_hat[0], task["n_classes"], task["kmeans_seed"])
        rep_m = texture.metrics(
            x_hat[0], seg.labels, task["truth_h"], task["truth_labels"]
        )
        out["seg_error"] = rep_m.error_rate
    return out


def run_grid(cfg: RunConfig, y, model, scales, truth_h=None, truth_labels=None):
    nu = fd_step(model, y.size)
    probes = [
        draw_probe(scales, y.shape[1:], derive_seed(cfg.seed, 1 + k))
        for k in range(max(1, cfg.sure_probes))
    ]
    lam0 = init_hyperparams(y, model)
    grid_h, grid_v = grid_values(cfg, lam0)
    tasks = []
    for lh in grid_h:
        for lv in grid_v:
            tasks.append(
                {
                    "y": y,
                    "model": model,
                    "lam": (float(lh), float(lv)),
                    "nu": nu,
                    "probes": probes,
                    "j1": cfg.j1,
                    "j2": cfg.j2,
                    "gap_tol": cfg.gap_tol,
                    "max_iter": cfg.solver_max_iter,
                    "accelerate": cfg.accelerate,
                    "truth_h": truth_h,
                    "truth_labels": truth_labels,
                    "n_classes": cfg.n_classes,
                    "kmeans_seed": derive_seed(cfg.seed, 2),
                    "seed": cfg.seed,
                }
            )
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_grid_node, tasks, chunksize=1))
    else:
        results = [_grid_node(t) for t in tasks]
    return results, lam0


def grid_rows(results: list) -> list:
    sure_vals = np.array([r["sure"] for r in results])
    risk_vals = np.array([r["risk"] for r in results])
    i_sure = int(np.argmin(sure_vals))
    i_risk = int(np.nanargmin(risk_vals)) if np.isfinite(risk_vals).any() else -1
    rows = []
    for i, r in enumerate(results):
        rows.append(
            f"{r['lam'][0]!r},{r['lam'][1]!r},{r['sure']!r},{r['fid']!r},"
            f"{r['dof']!r},{r['trace']!r},{r['risk']!r},{r['seg_error']!r},"
            f"{int(i == i_sure)},{int(i == i_risk)}"
        )
    return rows


GRID_HEADER = (
    "lambda_h,lambda_v,sure,term_fidelity,term_dof,term_trace,risk,"
    "seg_error,is_sure_argmin,is_risk_argmin"
)


# -- commands ----------------------------------------------------------------


def cmd_synthesize(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(cfg)
    image = texture.synthesize(spec, cfg.size, cfg.size)
    h_true, labels = spec.truth_maps()
    meta = run_header(cfg)
    texture.write_field_raw(out / "texture.raw", image, meta)
    texture.write_field_raw(out / "truth_h.raw", h_true, meta)
    texture.write_pgm16(out / "mask.pgm", labels)
    with open(out / "synthesize.json", "w") as fh:
        json.dump({**meta, "regions": spec.regions, "size": cfg.size}, fh, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_leaders(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(cfg)
    image, ell, scales = make_leaders(cfg, spec)
    meta = run_header(cfg)
    texture.write_field_raw(out / "texture.raw", image, meta)
    texture.write_field_raw(
        out / "leaders.raw", ell, {**meta, "j1": scales.j1, "j2": scales.j2}
    )
    return 0


def cmd_covariance(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(cfg)
    _, ell, scales = make_leaders(cfg, spec)
    model = make_covariance(cfg, ell, scales)
    save_covariance(model, out / "covariance.cov")
    with open(out / "covariance.json", "w") as fh:
        json.dump(
            {**run_header(cfg), "kind": model.kind, "C": model.C.tolist()},
            fh,
            sort_keys=True,
        )
        fh.write("\n")
    return 0


def cmd_gridsearch(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(cfg)
    _, ell, scales = make_leaders(cfg, spec)
    model = make_covariance(cfg, ell, scales)
    h_true, labels = spec.truth_maps()
    results, lam0 = run_grid(cfg, ell, model, scales, h_true, labels)
    _write_csv(out / "grid.csv", cfg, GRID_HEADER, grid_rows(results))
    return 0


def cmd_tune(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(cfg)
    _, ell, scales = make_leaders(cfg, spec)
    model = make_covariance(cfg, ell, scales)
    solver = make_solver(cfg, scales)
    tuner_cfg = TunerConfig(
        kappa=cfg.kappa,
        grad_tol=cfg.grad_tol,
        max_iter=cfg.tuner_max_iter,
        max_line_evals=cfg.line_evals,
    )
    lam, x_hat, result = tune(ell, model, derive_seed(cfg.seed, 1), solver, tuner_cfg)
    seg = texture.threshold_segment(x_hat[0], cfg.n_classes, derive_seed(cfg.seed, 2))

    h_true, labels_true = spec.truth_maps()
    x_lr = linear_regression(ell, scales)
    report = texture.metrics(x_hat[0], seg.labels, h_true, labels_true, x_lr[0])

    meta = run_header(cfg)
    texture.write_field_raw(out / "hurst.raw", x_hat[0], meta)
    texture.write_field_raw(out / "logvar.raw", x_hat[1], meta)
    texture.write_field_raw(out / "piecewise_hurst.raw", seg.piecewise_map(), meta)
    texture.write_pgm16(out / "labels.pgm", seg.labels)
    _write_csv(
        out / "tune_trace.csv",
        cfg,
        TraceRow.CSV_HEADER,
        [row.csv_row() for row in result.trace],
    )
    summary = {
        **meta,
        "lambda_h": float(lam[0]),
        "lambda_v": float(lam[1]),
        "sure": result.value,
        "converged": result.converged,
        "pd_calls": solver.calls,
        "risk": report.risk,
        "seg_error": report.error_rate,
        "normalized_risk": report.normalized_risk,
        "class_values": seg.class_values.tolist(),
    }
    with open(out / "tune_summary.json", "w") as fh:
        json.dump(summary, fh, sort_keys=True)
        fh.write("\n")
    return 0


def cmd_ablate(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = make_spec(cfg)
    _, ell, scales = make_leaders(cfg, spec)
    if cfg.cov_kind != "full":
        raise ConfigError("ablate starts from the full covariance")
    full = make_covariance(cfg, ell, scales)
    h_true, labels = spec.truth_maps()
    summary_rows = []
    for kind in ("full", "inter", "var"):
        model = full if kind == "full" else restrict(full, kind)
        results, _ = run_grid(cfg, ell, model, scales, h_true, labels)
        _write_csv(out / f"grid_{kind}.csv", cfg, GRID_HEADER, grid_rows(results))
        sure_vals = np.array([r["sure"] for r in results])
        risk_vals = np.array([r["risk"] for r in results])
        i_sure, i_risk = int(np.argmin(sure_vals)), int(np.argmin(risk_vals))
        n = cfg.grid_points
        cell_dist = max(
            abs(i_sure // n - i_risk // n), abs(i_sure % n - i_risk % n)
        )
        summary_rows.append(
            f"{kind},{results[i_sure]['lam'][0]!r},{results[i_sure]['lam'][1]!r},"
            f"{results[i_risk]['lam'][0]!r},{results[i_risk]['lam'][1]!r},{cell_dist}"
        )
    _write_csv(
        out / "ablate_summary.csv",
        cfg,
        "kind,sure_lambda_h,sure_lambda_v,risk_lambda_h,risk_lambda_v,cell_distance",
        summary_rows,
    )
    return 0


COMMANDS = {
    "synthesize": cmd_synthesize,
    "leaders": cmd_leaders,
    "covariance": cmd_covariance,
    "gridsearch": cmd_gridsearch,
    "tune": cmd_tune,
    "ablate": cmd_ablate,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="steintv",
        description="TV-based texture segmentation with risk-driven weight tuning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        for f in fields(RunConfig):
            arg = "--" + f.name.replace("_", "-")
            if f.type == "bool" or isinstance(getattr(RunConfig(), f.name), bool):
                p.add_argument(arg, default=None, help=f"config key {f.name}")
            else:
                p.add_argument(arg, default=None, help=f"config key {f.name}")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverDivergenceError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TunerError as exc:
        print(f"tuner error: {exc}", file=sys.stderr)
        return EXIT_TUNER


if __name__ == "__main__":
    sys.exit(main())
