"""Command-line driver: spike recovery, end-to-end spline recovery from a
polynomial approximation, certificate verification, the noise-calibration
Monte Carlo check, and parameter sweeps.

Every run is reproducible from (config, seed): artifacts are written with
deterministic formatting and all randomness flows through seeded generators.
Exit codes: 0 success, 2 configuration error, 3 solver failure, 4 a
requested assertion on the run's report failed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .blasso import BlassoError, BlassoOptions, solve_blasso, solution_to_dict
from .certificates import (QIC, SIGN_INTERPOLANT, build_certificate,
                           verify_certificate)
from .chebyshev import arccos_uniform_grid
from .diagnostics import recovery_report, spline_jump_report
from .measures import (DiscreteMeasure, measure_from_dict, measure_to_dict,
                       phi_matrix, separation_ok)
from .observation import (assemble_y_from_projection, lambda_algorithm,
                          lambda_rice, observation_to_dict,
                          polynomial_from_theta, rice_tail_bound,
                          scaled_sigma, simulate)
from .sdp import SdpError
from .splines import (NonUniformSpline, boundary_residual, boundary_vector,
                      distributional_derivative, integrate_from_spikes,
                      projection_vector, spline_from_dict, spline_to_dict)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_ASSERT = 4

CSV_SCHEMAS = {
    "profile": ("profile/1", ["t", "f_true", "f_hat", "p_approx"]),
    "spikes": ("spikes/1", ["source", "location", "weight"]),
    "sweep": ("sweep/1", ["index", "axis", "value", "ok", "lam", "n_atoms",
                          "global_control", "max_local_control", "passes",
                          "boundary_residual", "duality_gap_rel",
                          "in_guarantee_regime"]),
}


class ConfigError(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, schema: str, rows) -> None:
    version, columns = CSV_SCHEMAS[schema]
    lines = [",".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row width {len(row)} does not match "
                             f"schema {version} ({len(columns)} columns)")
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _require(cfg: dict, key: str, kind=None):
    if key not in cfg:
        raise ConfigError(f"missing config field '{key}'")
    val = cfg[key]
    if kind is not None and not isinstance(val, kind):
        raise ConfigError(f"config field '{key}' has wrong type")
    return val


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg.get("out_dir", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def random_separated_support(rng, n_points: int, m: int,
                             margin: float = 1.1, max_tries: int = 20000):
    """Rejection-sample a support satisfying the separation condition with
    the given slack factor."""
    gap = margin * 5.0 * np.pi / m
    lo, hi = gap / 2.0, np.pi - gap / 2.0
    for _ in range(max_tries):
        theta = np.sort(rng.uniform(lo, hi, n_points))
        pts = np.cos(theta)[::-1]
        if n_points == 1 or separation_ok(pts, m / margin):
            return np.sort(pts)
    raise ConfigError(f"could not sample {n_points} separated points at m={m}")


def _measure_from_target(cfg: dict, m: int, rng) -> DiscreteMeasure:
    target = _require(cfg, "target", dict)
    if "measure" in target:
        return measure_from_dict(target["measure"])
    if "measure_file" in target:
        path = Path(target["measure_file"])
        if not path.exists():
            raise ConfigError(f"measure file {path} does not exist")
        return measure_from_dict(json.loads(path.read_text()))
    if "random_measure" in target:
        spec_ = target["random_measure"]
        n = int(spec_.get("n_spikes", 3))
        amin = float(spec_.get("min_amplitude", 0.5))
        amax = float(spec_.get("max_amplitude", 2.0))
        support = random_separated_support(rng, n, m)
        amps = rng.uniform(amin, amax, n) * rng.choice([-1.0, 1.0], n)
        return DiscreteMeasure(support, amps)
    raise ConfigError("target needs 'measure', 'measure_file', or 'random_measure'")


def _spline_from_target(cfg: dict, rng) -> NonUniformSpline:
    target = _require(cfg, "target", dict)
    if "spline" in target:
        return spline_from_dict(target["spline"])
    if "spline_file" in target:
        path = Path(target["spline_file"])
        if not path.exists():
            raise ConfigError(f"spline file {path} does not exist")
        return spline_from_dict(json.loads(path.read_text()))
    if "random_spline" in target:
        spec_ = target["random_spline"]
        d = int(_require(cfg, "d"))
        m = int(_require(cfg, "m"))
        n_knots = int(spec_.get("n_knots", 2))
        jump_scale = float(spec_.get("jump_scale", 1.0))
        knots = random_separated_support(rng, n_knots, m)
        jumps = jump_scale * rng.uniform(0.8, 1.25, n_knots) \
            * rng.choice([-1.0, 1.0], n_knots)
        base = rng.uniform(-1.0, 1.0, d + 1)
        mu = DiscreteMeasure(knots, jumps)
        b = np.concatenate([base, np.zeros(d + 1)])
        f = integrate_from_spikes(mu, b, d)
        return f
    raise ConfigError("target needs 'spline', 'spline_file', or 'random_spline'")


def run_recover_spikes(cfg: dict) -> dict:
    out = _out_dir(cfg)
    m = int(_require(cfg, "m"))
    d = int(cfg.get("d", -1))
    sigma = float(cfg.get("sigma", 0.0))
    seed = cfg.get("seed", 0)
    rng = np.random.default_rng(seed)
    x = _measure_from_target(cfg, m, rng)
    obs = simulate(x, m, d, sigma, seed)
    lam = cfg.get("lambda")
    if lam is None:
        eta = float(cfg.get("eta", 1.0))
        lam = lambda_rice(sigma, m, d, eta) if sigma > 0 else 1e-6
    lam = float(lam)
    sol = solve_blasso(obs, lam, _blasso_opts(cfg))
    lam0 = lambda_rice(sigma, m, d, float(cfg.get("eta", 1.0))) if sigma > 0 else 0.0
    report = recovery_report(sol.measure, x, lam, m, lam0=lam0,
                             prediction_trials=int(cfg.get("prediction_trials", 0)),
                             seed=seed)
    write_json(out / "target.json", measure_to_dict(x))
    write_json(out / "observation.json", observation_to_dict(obs))
    write_json(out / "solution.json", solution_to_dict(sol, include_timing=False))
    write_json(out / "report.json", report.to_dict())
    rows = [("true", float(t), float(w)) for t, w in zip(x.support, x.weights)]
    rows += [("recovered", float(t), float(w))
             for t, w in zip(sol.measure.support, sol.measure.weights)]
    write_csv(out / "spikes.csv", "spikes", rows)
    summary = {
        "mode": "recover-spikes", "m": m, "d": d, "sigma": sigma, "lam": lam,
        "n_atoms": len(sol.measure), "passes": report.passes(),
        "in_guarantee_regime": bool(m >= 128 and separation_ok(x.support, m)),
        "duality_gap_rel": sol.duality_gap_rel,
        "csv_schemas": {"spikes.csv": CSV_SCHEMAS["spikes"][0]},
    }
    write_json(out / "run.json", summary)
    return summary


def _blasso_opts(cfg: dict, interior_support: bool = False) -> BlassoOptions:
    kw = {"interior_support": interior_support}
    for key in ("sdp_tol", "sdp_max_iter", "level_tol", "sign_threshold",
                "amplitude_floor", "interior_support"):
        if key in cfg:
            kw[key] = cfg[key]
    return BlassoOptions(**kw)


def run_recover_spline(cfg: dict) -> dict:
    out = _out_dir(cfg)
    seed = cfg.get("seed", 0)
    rng = np.random.default_rng(seed)
    f = _spline_from_target(cfg, rng)
    d = f.degree
    if "d" in cfg and int(cfg["d"]) != d:
        raise ConfigError(f"config d={cfg['d']} does not match spline degree {d}")
    m = int(_require(cfg, "m"))
    if m <= d:
        raise ConfigError(f"need m > d, got m={m}, d={d}")
    b = boundary_vector(f)
    if "boundary" in cfg:
        b_cfg = np.asarray(cfg["boundary"], dtype=float)
        if b_cfg.shape != (2 * (d + 1),):
            raise ConfigError(
                f"boundary must have length 2(d+1) = {2 * (d + 1)}, "
                f"got {b_cfg.size}")
        b = b_cfg
    sigma0 = float(cfg.get("sigma0", 0.0))
    sigma = scaled_sigma(sigma0, m, d) if sigma0 > 0 else 0.0
    theta = projection_vector(f, m)
    if sigma > 0:
        theta = theta + rng.normal(0.0, sigma, m - d)
    obs = assemble_y_from_projection(theta, b, m, d, sigma=sigma)
    lam = cfg.get("lambda")
    if lam is None:
        alpha = float(cfg.get("alpha", cfg.get("eta", 1.0)))
        lam = lambda_algorithm(sigma, m, d, alpha) if sigma > 0 else 1e-6
    lam = float(lam)
    sol = solve_blasso(obs, lam, _blasso_opts(cfg, interior_support=True))
    f_hat = integrate_from_spikes(sol.measure, b, d)
    resid = boundary_residual(f_hat, b)
    report = spline_jump_report(f_hat, f, lam, m)

    grid = np.linspace(-1.0, 1.0, int(cfg.get("profile_points", 1024)))
    p_approx = polynomial_from_theta(theta, m, d)
    prof = [(float(t), float(f(t)), float(f_hat(t)), float(p_approx(t)))
            for t in grid]
    write_csv(out / "profile.csv", "profile", prof)
    x_true = distributional_derivative(f)
    rows = [("true", float(t), float(w))
            for t, w in zip(x_true.support, x_true.weights)]
    rows += [("recovered", float(t), float(w))
             for t, w in zip(sol.measure.support, sol.measure.weights)]
    write_csv(out / "spikes.csv", "spikes", rows)
    write_json(out / "spline_true.json", spline_to_dict(f))
    write_json(out / "spline_hat.json", spline_to_dict(f_hat))
    write_json(out / "spikes_hat.json", measure_to_dict(sol.measure))
    write_json(out / "report.json", report.to_dict())
    write_json(out / "solution.json", solution_to_dict(sol, include_timing=False))
    summary = {
        "mode": "recover-spline", "m": m, "d": d, "sigma0": sigma0,
        "sigma": sigma, "lam": lam, "n_atoms": len(sol.measure),
        "boundary_residual": resid, "passes": report.passes(),
        "duality_gap_rel": sol.duality_gap_rel,
        "csv_schemas": {"profile.csv": CSV_SCHEMAS["profile"][0],
                        "spikes.csv": CSV_SCHEMAS["spikes"][0]},
    }
    write_json(out / "run.json", summary)
    return summary


def run_certificate(cfg: dict) -> dict:
    out = _out_dir(cfg)
    m = int(_require(cfg, "m"))
    seed = cfg.get("seed", 0)
    rng = np.random.default_rng(seed)
    if "support" in cfg:
        support = np.asarray(cfg["support"], dtype=float)
    elif "support_file" in cfg:
        path = Path(cfg["support_file"])
        if not path.exists():
            raise ConfigError(f"support file {path} does not exist")
        support = np.asarray(json.loads(path.read_text()), dtype=float)
    else:
        support = random_separated_support(rng, int(cfg.get("n_points", 3)), m)
    grid_size = int(cfg.get("grid_size", 10_000))
    anchors = []
    worst = np.inf
    interp = 0.0
    for j in range(support.size):
        cert = build_certificate(support, m, SIGN_INTERPOLANT, anchor=j)
        rep = verify_certificate(cert, support, m, grid_size)
        anchors.append({"anchor": j, "worst_margin": rep.worst_margin,
                        "interpolation_residual": rep.interpolation_residual,
                        "margins": rep.margins,
                        "condition_number": cert.condition_number})
        worst = min(worst, rep.worst_margin)
        interp = max(interp, rep.interpolation_residual)
    signs = rng.choice([-1.0, 1.0], support.size)
    qic_cert = build_certificate(support, m, QIC, targets=signs)
    qic_rep = verify_certificate(qic_cert, support, m, grid_size)
    worst = min(worst, qic_rep.worst_margin)
    interp = max(interp, qic_rep.interpolation_residual)
    result = {
        "mode": "certificate", "m": m, "support": support.tolist(),
        "grid_size": grid_size, "sign_interpolants": anchors,
        "qic": {"targets": signs.tolist(), "worst_margin": qic_rep.worst_margin,
                "interpolation_residual": qic_rep.interpolation_residual,
                "margins": qic_rep.margins},
        "worst_margin": worst, "max_interpolation_residual": interp,
        "passes": bool(worst >= -1e-9 and interp <= 1e-8),
    }
    write_json(out / "certificate_report.json", result)
    return result


def rice_exceedance(m: int, d: int, sigma: float, eta: float, n_trials: int,
                    seed, grid_factor: int = 4, chunk: int = 1000):
    """Empirical frequency of the noise polynomial's grid sup norm exceeding
    the calibration threshold, against the analytic tail bound."""
    lam0 = lambda_rice(sigma, m, d, eta)
    grid = arccos_uniform_grid(grid_factor * m)
    Phi = phi_matrix(grid, m)[d + 1:]
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    while done < n_trials:
        k = min(chunk, n_trials - done)
        eps = rng.normal(0.0, sigma, (k, m - d))
        sups = np.abs(eps @ Phi).max(axis=1)
        exceed += int((sups > lam0).sum())
        done += k
    freq = exceed / n_trials
    bound = rice_tail_bound(lam0, sigma, m, d)
    se = float(np.sqrt(bound * (1.0 - bound) / n_trials))
    return {"m": m, "d": d, "sigma": sigma, "eta": eta, "n_trials": n_trials,
            "threshold": lam0, "exceedances": exceed, "frequency": freq,
            "bound": bound, "binomial_se": se,
            "passes": bool(freq <= bound + 3.0 * se)}


def run_rice_check(cfg: dict) -> dict:
    out = _out_dir(cfg)
    n_trials = int(cfg.get("n_trials", 10_000))
    if n_trials < 100:
        raise ConfigError("rice check needs at least 100 trials")
    result = rice_exceedance(
        m=int(_require(cfg, "m")), d=int(cfg.get("d", -1)),
        sigma=float(cfg.get("sigma", 1.0)), eta=float(cfg.get("eta", 1.0)),
        n_trials=n_trials, seed=cfg.get("seed", 0),
        grid_factor=int(cfg.get("grid_factor", 4)))
    result["mode"] = "rice-check"
    write_json(out / "rice_report.json", result)
    return result


def run_sweep(cfg: dict) -> dict:
    out = _out_dir(cfg)
    axis = _require(cfg, "axis", str)
    if axis not in ("sigma0", "m", "lambda"):
        raise ConfigError(f"unknown sweep axis {axis!r}")
    values = _require(cfg, "values", list)
    base = dict(_require(cfg, "base", dict))
    mode = base.get("mode", "recover-spline")
    if mode not in ("recover-spline", "recover-spikes"):
        raise ConfigError(f"sweep base mode {mode!r} not supported")
    seed = cfg.get("seed", 0)
    rows = []
    for idx, value in enumerate(values):
        sub = dict(base)
        sub[axis if axis != "lambda" else "lambda"] = value
        sub["seed"] = seed + idx
        sub["out_dir"] = str(out / f"run_{idx:03d}")
        ok = True
        summary = {}
        try:
            summary = (run_recover_spline(sub) if mode == "recover-spline"
                       else run_recover_spikes(sub))
        except (ConfigError, BlassoError, SdpError, ValueError) as exc:
            ok = False
            summary = {"error": str(exc)}
        in_regime = bool(summary.get("in_guarantee_regime", False))
        if axis == "lambda" and ok:
            sigma = summary.get("sigma", base.get("sigma", 0.0)) or 0.0
            if sigma > 0:
                m_run = summary.get("m")
                d_run = summary.get("d", -1)
                lam0 = lambda_rice(sigma, m_run, d_run, float(base.get("eta", 1.0)))
                in_regime = bool(value >= lam0)
        rows.append((idx, axis, float(value), ok,
                     summary.get("lam", float("nan")),
                     summary.get("n_atoms", -1),
                     _report_field(sub, "global_control") if ok else float("nan"),
                     _report_field(sub, "max_local") if ok else float("nan"),
                     summary.get("passes", False),
                     summary.get("boundary_residual", float("nan")),
                     summary.get("duality_gap_rel", float("nan")),
                     in_regime))
    write_csv(out / "sweep.csv", "sweep", rows)
    result = {"mode": "sweep", "axis": axis, "values": values,
              "rows": len(rows), "all_ok": all(r[3] for r in rows),
              "csv_schemas": {"sweep.csv": CSV_SCHEMAS["sweep"][0]}}
    write_json(out / "sweep.json", result)
    return result


def _report_field(cfg: dict, field: str):
    path = Path(cfg["out_dir"]) / "report.json"
    if not path.exists():
        return float("nan")
    rep = json.loads(path.read_text())
    if field == "global_control":
        return float(rep.get("global_control", float("nan")))
    if field == "max_local":
        vals = rep.get("local_controls", [])
        return float(max(vals)) if vals else 0.0
    return float("nan")


MODES = {
    "recover-spikes": run_recover_spikes,
    "recover-spline": run_recover_spline,
    "certificate": run_certificate,
    "rice-check": run_rice_check,
    "sweep": run_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chebspike",
        description="Spike and non-uniform spline recovery from Chebyshev moments")
    parser.add_argument("--mode", choices=sorted(MODES),
                        help="run mode (alternative to the subcommand form)")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--out-dir")
    parser.add_argument("--sigma0", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--assert", dest="check", action="store_true",
                        help="exit 4 when the run's report does not pass")
    sub = parser.add_subparsers(dest="subcommand")
    for name in sorted(MODES):
        sp = sub.add_parser(name)
        sp.add_argument("--config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out-dir")
        sp.add_argument("--sigma0", type=float)
        sp.add_argument("--lambda", dest="lam", type=float)
        sp.add_argument("--eta", type=float)
        sp.add_argument("--assert", dest="check", action="store_true")
    return parser


def _merge_config(args) -> dict:
    cfg = {}
    path = args.config
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        try:
            cfg = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
    mode = args.subcommand or args.mode or cfg.get("mode")
    if mode not in MODES:
        raise ConfigError(f"no valid mode given (got {mode!r})")
    cfg["mode"] = mode
    for key, field in (("seed", "seed"), ("out_dir", "out_dir"),
                       ("sigma0", "sigma0"), ("lambda", "lam"), ("eta", "eta")):
        val = getattr(args, field, None)
        if val is not None:
            cfg[key] = val
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args)
        summary = MODES[cfg["mode"]](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BlassoError, SdpError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    print(json.dumps(summary, sort_keys=True))
    if getattr(args, "check", False):
        passed = summary.get("passes", summary.get("all_ok", True))
        if not passed:
            return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
