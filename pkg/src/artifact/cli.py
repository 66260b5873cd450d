"""Command-line driver: configs, seeded ensembles and CSV/JSON output.

    python -m artifact <subcommand> [flags]

Exit codes: 0 success, 2 gate violation or bad configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .branch import BranchConfig, BranchFailure, assemble_branches, continuity_diagnostic, prepare_setup
from .noise import build_noise_coloring, ou_paths, ou_variance
from .numerics import build_radial_grid
from .profile import ProfileError, integrate_profile, require_supercritical_fujita
from .randomize import (FixedPointFailure, band_limited_field, build_block_partition, gaussian_bump,
                        lq_moment_check, mild_fixed_point, random_data_gate, randomize,
                        smoothing_tail_estimate, success_probability)
from .simvar import approximate_ancient_solution, evolve_perturbation, growth_rate
from .spectrum import (SearchExhausted, assemble_linearized, core_scale, find_small_unstable_alpha,
                       spectral_grid, top_eigenpairs, unstable_eigenvalue_sweep)

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXIT_OK, EXIT_GATE, EXIT_NUMERIC = 0, 2, 3

GLOBAL = {"seed": 0, "threads": 1, "out_dir": "out", "ensemble": 1}

SCHEMA = {
    "profile": {"d": 3, "p": 3.0, "alpha": 1.0, "rho_max": 40.0, "n": 20000},
    "spectrum": {"d": 3, "p": 3.0, "eta": 1.0, "alpha_min": 0.2, "alpha_max": 3.0, "count": 15,
                 "n": 2000, "rho_max": 30.0, "eps": 0.0},
    "simvar": {"d": 3, "p": 3.0, "alpha": 1.0, "eta": 1.0, "tau1": 10.0, "dt": 1e-3,
               "mode": "growth", "eps": 0.05},
    "noise": {"d": 3, "rho_max": 10.0, "n": 400, "cutoff": 100, "horizon": 0.1, "steps": 10,
              "paths": 10000, "amplitude": 1.0, "q": 2.0, "p": 3.0},
    "branch": {"d": 3, "p": 3.0, "q": 2.0, "alpha_star": None, "lambda_star": None,
               "horizon": 1e-2, "t_min": 1e-9, "theta": 1.05, "n": 1500, "rho_max": 10.0,
               "noise_amplitude": 1.0, "noise_cutoff": 100, "noise_beta": None},
    "randomize": {"d": 3, "L": 16.0, "n": 64, "K": 8, "q": 2.0, "p": 3.0, "mode": "moments",
                  "datum": "bump", "amplitude": 1.0, "width": 1.0, "xi_cut": 3.0,
                  "samples": 1000, "T": 0.1, "gamma": 0.0, "sigma": 0.0, "theta2": 2.0,
                  "theta3": 2.0, "horizon": 1.0, "T_min": 1e-3, "T_count": 25},
    "report": {"source": "out"},
}

CHOICES = {"mode": {"simvar": ("growth", "ancient"),
                    "randomize": ("moments", "tails", "solve", "success-curve")},
           "datum": {"randomize": ("bump", "band")}}


class GateViolation(ValueError):
    pass


class EnsembleFailure(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict
    seed: int = 0
    threads: int = 1
    out_dir: str = "out"
    ensemble: int = 1
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {"subcommand": self.subcommand, "schema_version": self.schema_version,
                "seed": self.seed, "threads": self.threads, "out_dir": self.out_dir,
                "ensemble": self.ensemble, **self.params}

    def digest(self) -> str:
        """Hash of everything that determines the numbers (threads and out_dir excluded)."""
        body = {k: v for k, v in self.to_dict().items() if k not in ("threads", "out_dir")}
        return hashlib.sha256(json.dumps(body, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class RunManifest:
    config_hash: str
    seeds: list
    version: str
    status: dict
    outputs: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"config_hash": self.config_hash, "seeds": self.seeds, "artifact_version": self.version,
                "status": self.status, "outputs": self.outputs, "aggregate": self.aggregate}


# ---------------------------------------------------------------------------
# configuration

def _coerce(value, default, key):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        return bool(value)
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, float) and not value.is_integer():
            raise GateViolation(f"{key} must be an integer, got {value}")
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def build_config(subcommand: str, values: dict) -> ExperimentConfig:
    """Fill defaults, reject unknown keys and re-validate the gates of the owning module."""
    if subcommand not in SCHEMA:
        raise GateViolation(f"unknown subcommand {subcommand!r}")
    schema = SCHEMA[subcommand]
    values = {k.replace("-", "_"): v for k, v in values.items()}
    values.pop("subcommand", None)
    version = values.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise GateViolation(f"unsupported schema version {version}")
    unknown = sorted(set(values) - set(schema) - set(GLOBAL))
    if unknown:
        raise GateViolation(f"unknown configuration keys: {', '.join(unknown)}")
    params = {k: _coerce(values.get(k, v), v, k) for k, v in schema.items()}
    glob = {k: _coerce(values.get(k, v), v, k) for k, v in GLOBAL.items()}
    for key, by_cmd in CHOICES.items():
        if subcommand in by_cmd and params[key] not in by_cmd[subcommand]:
            raise GateViolation(f"{key} must be one of {by_cmd[subcommand]}, got {params[key]!r}")
    cfg = ExperimentConfig(subcommand, params, **glob)
    validate_gates(cfg)
    return cfg


def validate_gates(cfg: ExperimentConfig):
    p = cfg.params
    if cfg.ensemble < 1 or cfg.threads < 1:
        raise GateViolation("ensemble and threads must be >= 1")
    try:
        if cfg.subcommand in ("profile", "spectrum", "simvar", "branch"):
            require_supercritical_fujita(p["d"], p["p"])
        if cfg.subcommand in ("profile", "simvar") and not p["alpha"] > 0:
            raise GateViolation("alpha must be positive")
        if cfg.subcommand == "branch":
            BranchConfig(d=p["d"], p=p["p"], q=p["q"], lambda_star=p["lambda_star"],
                         horizon=p["horizon"], t_min=p["t_min"], theta=p["theta"],
                         rho_max=p["rho_max"], n=p["n"]).validate()
        if cfg.subcommand == "randomize":
            if p["mode"] in ("solve", "success-curve"):
                random_data_gate(p["d"], p["p"], p["q"])
            if p["mode"] == "tails":
                lhs = (p["sigma"] - 2 * p["gamma"]) * p["theta3"]
                if not lhs < 2:
                    raise GateViolation(f"gate violated: (sigma + alpha - 2 gamma) theta3 < 2 fails, "
                                        f"left side = {lhs:.4g}")
            if p["K"] < 1:
                raise GateViolation("K must be >= 1")
    except GateViolation:
        raise
    except ValueError as exc:
        raise GateViolation(str(exc)) from exc


def load_config_file(path) -> dict:
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise GateViolation("configuration file must hold a mapping")
    return data


def dump_config(cfg: ExperimentConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--out-dir", dest="out_dir")
    common.add_argument("--config")
    common.add_argument("--ensemble", type=int)
    common.add_argument("--emit-config", dest="emit_config", help="write the resolved config here and exit")
    sub = ap.add_subparsers(dest="subcommand", required=True)
    for name, schema in SCHEMA.items():
        sp = sub.add_parser(name, parents=[common])
        for key, default in schema.items():
            flag = "--" + key.replace("_", "-")
            kind = float if isinstance(default, float) or default is None else type(default)
            kw = {"dest": key, "type": kind}
            if key in CHOICES and name in CHOICES[key]:
                kw["choices"] = CHOICES[key][name]
            sp.add_argument(flag, **kw)
    return ap


def parse_config(argv) -> tuple[ExperimentConfig, dict]:
    """Flags override the config file, which overrides the defaults."""
    ns = vars(_parser().parse_args(argv))
    sub = ns.pop("subcommand")
    extra = {"emit_config": ns.pop("emit_config")}
    values = {}
    path = ns.pop("config")
    if path:
        values.update(load_config_file(path))
        if values.get("subcommand", sub) != sub:
            raise GateViolation(f"config file is for {values['subcommand']!r}, not {sub!r}")
    values.update({k: v for k, v in ns.items() if v is not None})
    return build_config(sub, values), extra


# ---------------------------------------------------------------------------
# output

def substream(seed: int, path: int) -> np.random.Generator:
    """Counter-based generator for ensemble member `path` of run `seed`."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(path)])))


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path: Path, header: str, columns: dict):
    names = list(columns)
    rows = zip(*[np.asarray(columns[n]).ravel() for n in names])
    lines = [f"# {header}", ",".join(names)] + [",".join(_fmt(v) for v in row) for row in rows]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path: Path, data: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def slope_confidence(values, z: float = 1.96) -> dict:
    """Mean, standard deviation and normal-theory confidence interval of per-member fits."""
    v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"mean": float("nan"), "sd": float("nan"), "ci": [float("nan")] * 2, "n": 0}
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    half = z * sd / math.sqrt(v.size)
    m = float(v.mean())
    return {"mean": m, "sd": sd, "ci": [m - half, m + half], "n": int(v.size),
            "quantiles": [float(x) for x in np.quantile(v, [0.05, 0.5, 0.95])]}


def run_ensemble(cfg: ExperimentConfig, member, threads: int | None = None, min_success: float = 0.8):
    """Run member(rng, index) over the ensemble; at least min_success of members must succeed."""
    n = cfg.ensemble
    threads = cfg.threads if threads is None else threads

    def job(i):
        try:
            return i, member(substream(cfg.seed, i), i), None
        except (BranchFailure, FixedPointFailure, ProfileError, SearchExhausted, FloatingPointError) as exc:
            return i, None, f"{type(exc).__name__}: {exc}"

    if threads > 1 and n > 1:
        with ThreadPoolExecutor(threads) as pool:
            out = list(pool.map(job, range(n)))
    else:
        out = [job(i) for i in range(n)]
    results = {i: r for i, r, e in out if e is None}
    status = {str(i): ("ok" if e is None else e) for i, _, e in out}
    if len(results) < min_success * n:
        raise EnsembleFailure(f"only {len(results)} of {n} ensemble members succeeded")
    return results, status


# ---------------------------------------------------------------------------
# subcommands

def _cmd_profile(cfg, out, header, manifest):
    p = cfg.params
    ps = integrate_profile(p["alpha"], p["p"], p["d"], p["rho_max"], p["n"])
    step = max(1, ps.grid.n // 2000)
    write_csv(out / "profile.csv", header, {"rho": ps.grid.nodes[::step], "U": ps.U.values[::step],
                                            "dU": ps.dU.values[::step]})
    summary = {"ell": ps.asymptotic_ell(), "ell_raw": ps.ell, "residual": ps.residual,
               "tail_oscillation": ps.tail_oscillation, "tail_warning": ps.tail_warning}
    write_json(out / "profile.json", summary)
    manifest.outputs += ["profile.csv", "profile.json"]
    manifest.aggregate = summary


def _cmd_spectrum(cfg, out, header, manifest):
    p = cfg.params
    alphas = np.linspace(p["alpha_min"], p["alpha_max"], p["count"])
    sweep = unstable_eigenvalue_sweep(p["p"], p["d"], alphas, p["eta"], p["n"], p["rho_max"])
    rows = sweep["rows"]
    write_csv(out / "sweep.csv", header, {"alpha": [r.alpha for r in rows],
                                          "lambda_max": [r.lam for r in rows]})
    summary = {"unstable": [r.alpha for r in sweep["unstable"]], "min_positive": sweep["min_positive"], "jl_subcritical": sweep["jl_subcritical"]}
    if p["eps"] > 0:
        small = find_small_unstable_alpha(p["p"], p["d"], p["eps"], p["eta"], n=p["n"], rho_max=p["rho_max"])
        summary["small"] = {"alpha": small.alpha, "lambda": small.lam, "bracket": small.bracket}
    write_json(out / "spectrum.json", summary)
    manifest.outputs += ["sweep.csv", "spectrum.json"]
    manifest.aggregate = summary


def _cmd_simvar(cfg, out, header, manifest):
    p = cfg.params
    ps = integrate_profile(p["alpha"], p["p"], p["d"])
    grid = spectral_grid(p["d"], core=core_scale(p["alpha"], p["p"]))
    op = assemble_linearized(ps, p["eta"], grid)
    rep = top_eigenpairs(op, 1)
    lam = float(rep.eigenvalues[0])
    mode = rep.eigenfields[0]
    mode = mode * (1.0 / np.max(np.abs(mode.values)))
    if p["mode"] == "growth":
        tr = evolve_perturbation(mode * 1e-8, ps, 0.0, p["tau1"], p["dt"], p["eta"], nonlinear=False, op=op)
        fit = growth_rate(tr)
        summary = {"lambda_max": lam, "rate": fit.rate, "r2": fit.r2,
                   "relative_error": abs(fit.rate - lam) / abs(lam) if lam else float("nan")}
    else:
        anc = approximate_ancient_solution(ps, mode, lam, p["eps"])
        tr = anc.trajectory
        summary = {"lambda": lam, "rate": anc.rate.rate, "upper_ok": anc.upper_ok,
                   "lower_ok": anc.lower_ok, "rate_ok": anc.rate_ok, "delta": anc.delta}
    cols = {"tau": tr.times, **{k: v for k, v in tr.norm_table.items()}}
    write_csv(out / "norms.csv", header, cols)
    write_json(out / "simvar.json", summary)
    manifest.outputs += ["norms.csv", "simvar.json"]
    manifest.aggregate = summary


def _cmd_noise(cfg, out, header, manifest):
    p = cfg.params
    grid = build_radial_grid(p["d"], p["rho_max"], p["n"])
    nc = build_noise_coloring(grid, q=p["q"], p=p["p"], cutoff=p["cutoff"], amplitude=p["amplitude"])
    times = np.linspace(0.0, p["horizon"], p["steps"] + 1)
    coeffs, _ = ou_paths(nc, times, substream(cfg.seed, 0), p["paths"])
    emp = np.mean(coeffs[:, -1] ** 2, axis=0)
    exact = ou_variance(nc, p["horizon"])
    write_csv(out / "ou_variance.csv", header, {"mode": np.arange(nc.cutoff), "mu": nc.mu,
                                                "empirical": emp, "exact": exact})
    rel = np.abs(emp / exact - 1)
    summary = {"max_relative_error": float(rel.max()), "l2_mean": float(emp.sum()),
               "l2_exact": float(exact.sum()), "tail_ratio": nc.tail_ratio, "beta": nc.beta}
    write_json(out / "noise.json", summary)
    manifest.outputs += ["ou_variance.csv", "noise.json"]
    manifest.aggregate = summary


def _cmd_branch(cfg, out, header, manifest):
    p = cfg.params
    bc = BranchConfig(d=p["d"], p=p["p"], q=p["q"], alpha_star=p["alpha_star"], lambda_star=p["lambda_star"],
                      horizon=p["horizon"], t_min=p["t_min"], theta=p["theta"], n=p["n"],
                      rho_max=p["rho_max"], noise_amplitude=p["noise_amplitude"],
                      noise_cutoff=p["noise_cutoff"], noise_beta=p["noise_beta"])
    setup = prepare_setup(bc)

    def member(rng, i):
        res = assemble_branches(setup, seed=rng)
        k = res.meta["k_stop"]
        cont = continuity_diagnostic(res.u1, res.config.q, upto=k)
        write_csv(out / f"separation_{i:04d}.csv", header,
                  {"t": res.u1.times[:k + 1], "separation": res.separation[:k + 1]})
        return {"slope": res.fitted_slope, "expected": res.expected_slope,
                "residual": max(r["max"] for r in res.residuals),
                "contraction": max(c.max_ratio_after_2 for c in res.certificates),
                "stop": res.stop.value, "trigger": res.stop.trigger, "continuity": cont.ratios}

    results, status = run_ensemble(cfg, member, threads=1)
    manifest.status = status
    manifest.outputs += [f"separation_{i:04d}.csv" for i in sorted(results)]
    slopes = [results[i]["slope"] for i in sorted(results)]
    manifest.aggregate = {"slope": slope_confidence(slopes), "expected_slope": setup.cfg.expected_slope,
                          "alpha_star": setup.cfg.alpha_star, "lambda_star": setup.cfg.lambda_star,
                          "members": {str(i): results[i] for i in sorted(results)}}
    write_json(out / "branch.json", manifest.aggregate)
    manifest.outputs.append("branch.json")


def _lattice_datum(p, seed):
    if p["datum"] == "bump":
        f = gaussian_bump(p["d"], p["L"], p["n"], p["width"])
        return f * (p["amplitude"] / f.l2_spectral())
    return band_limited_field(p["d"], p["L"], p["n"], p["xi_cut"], substream(seed, 10 ** 6), p["amplitude"])


def _cmd_randomize(cfg, out, header, manifest):
    p = cfg.params
    bp = build_block_partition(p["d"], p["K"])
    u0 = _lattice_datum(p, cfg.seed)
    mode = p["mode"]
    rng = substream(cfg.seed, 0)
    if mode == "moments":
        rep = lq_moment_check(u0, p["q"], max(p["samples"], 1000), rng, bp)
        write_json(out / "moments.json", rep)
        manifest.outputs.append("moments.json")
        manifest.aggregate = {k: rep[k] for k in ("l2_ratio", "growth_slope", "pointwise_growth_slope", "ratio")}
    elif mode == "tails":
        rep = smoothing_tail_estimate(u0, p["gamma"], p["sigma"], p["theta2"], p["theta3"], p["T"],
                                      max(p["samples"], 100), rng, bp=bp)
        write_csv(out / "survival.csv", header, {"lambda": rep.lam, "P_emp": rep.survival,
                                                  "bound_fit": rep.bound_fit(rep.lam)})
        summary = {"a": rep.a, "b": rep.b, "C_T": rep.C_T, "dominated": rep.dominated, "params": rep.params,
                   "mean_square": rep.mean_square, "mean_square_oracle": rep.mean_square_oracle}
        write_json(out / "tails.json", summary)
        manifest.outputs += ["survival.csv", "tails.json"]
        manifest.aggregate = summary
    elif mode == "solve":
        def member(r, i):
            sol = mild_fixed_point(randomize(u0, bp, r), p["p"], p["d"], p["q"], p["horizon"])
            return {"T": sol.stop.value, "trigger": sol.stop.trigger,
                    "contraction": sol.certificate.max_ratio_after_2, "iterations": sol.certificate.iterations,
                    "uniqueness_gap": sol.uniqueness_gap, "self_map_ok": sol.self_map_ok,
                    "continuity": sol.continuity.ratios if sol.continuity else None}
        results, status = run_ensemble(cfg, member)
        manifest.status = status
        manifest.aggregate = {"members": {str(i): results[i] for i in sorted(results)},
                              "stopping_time": slope_confidence([results[i]["T"] for i in results])}
        write_json(out / "solve.json", manifest.aggregate)
        manifest.outputs.append("solve.json")
    else:
        T = np.geomspace(p["T_min"], p["horizon"], p["T_count"])
        res = success_probability(u0, p["q"], p["p"], p["d"], T, max(cfg.ensemble, 100), rng, bp=bp,
                                  horizon=p["horizon"])
        write_csv(out / "success.csv", header, {"T": res["T"], "P_emp": res["P"]})
        summary = {"kappa": res["kappa"], "fit": res["fit"], "C": res["C"], "r": res["r"],
                   "ensemble": res["ensemble"], "monotone": bool(np.all(np.diff(res["P"]) <= 0))}
        write_json(out / "success.json", summary)
        manifest.outputs += ["success.csv", "success.json"]
        manifest.aggregate = summary
    gate = {"mode": mode, "d": p["d"], "p": p["p"], "q": p["q"]}
    if mode in ("solve", "success-curve"):
        gate["dimension_at_least_3"] = p["d"] >= 3
    write_json(out / "gate.json", gate)
    manifest.outputs.append("gate.json")


def _cmd_report(cfg, out, header, manifest):
    src = Path(cfg.params["source"])
    rows = []
    for mf in sorted(src.rglob("manifest.json")):
        data = json.loads(mf.read_text())
        bad = [k for k, v in data.get("status", {}).items() if v != "ok"]
        rows.append({"run": str(mf.parent.relative_to(src)), "config_hash": data["config_hash"],
                     "outputs": len(data.get("outputs", [])), "failed_members": bad})
    write_json(out / "report.json", {"runs": rows})
    manifest.outputs.append("report.json")
    manifest.aggregate = {"runs": len(rows)}
    for r in rows:
        print(f"{r['run']}: hash {r['config_hash']}, {r['outputs']} outputs, failed {r['failed_members']}")


COMMANDS = {"profile": _cmd_profile, "spectrum": _cmd_spectrum, "simvar": _cmd_simvar, "noise": _cmd_noise,
            "branch": _cmd_branch, "randomize": _cmd_randomize, "report": _cmd_report}


def execute(cfg: ExperimentConfig) -> RunManifest:
    h = cfg.digest()
    out = Path(cfg.out_dir) / cfg.subcommand
    out.mkdir(parents=True, exist_ok=True)
    header = f"config_hash={h} subcommand={cfg.subcommand} artifact={__version__} seed={cfg.seed}"
    manifest = RunManifest(h, [cfg.seed], __version__, {"0": "ok"})
    dump_config(cfg, out / "config.json")
    COMMANDS[cfg.subcommand](cfg, out, header, manifest)
    manifest.outputs.insert(0, "config.json")
    write_json(out / "manifest.json", manifest.to_dict())
    return manifest


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg, extra = parse_config(sys.argv[1:] if argv is None else argv)
        if extra["emit_config"]:
            dump_config(cfg, extra["emit_config"])
            return EXIT_OK
        manifest = execute(cfg)
    except (GateViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GATE
    except (BranchFailure, FixedPointFailure, ProfileError, SearchExhausted, EnsembleFailure,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(_jsonable(manifest.aggregate), sort_keys=True, default=str)[:2000])
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
