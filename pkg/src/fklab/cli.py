"""Command-line surface: configure, run and export every experiment.

Configuration is a flat ``key = value`` text file; command-line flags
override file keys.  Every command writes a manifest (the effective
configuration, seed and package version) next to its outputs, never
touches another command's outputs, and produces byte-identical files when
rerun with the same configuration and seed.  All randomness flows from the
single configured seed through documented stream splitting.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, analysis, clustergeo, duality2d, fkmodel
from . import geometry, lattice, potts, runners

DEFAULTS = {
    "d": 2,
    "N": 8,
    "q": 1.0,
    "beta": None,
    "p": None,
    "sampler": "heat_bath",
    "bc": "free",
    "sweeps": 200,
    "burn_in": 100,
    "thinning": 1,
    "K": 8.0,
    "r": 1.0,
    "delta": 0.25,
    "grid_m": 16,
    "scales": "8,12,16,20,24,28,32",
    "ray_radii": "4",
    "n_configs": 200000,
    "n_samples": 100000,
    "n_profiles": 1000,
    "box_sizes": "4,6,8,10,12,14,16",
    "L1": 192,
    "L2": 64,
    "margin": 8,
    "curvature_ref": None,
    "cluster_file": None,
}

_NUMERIC = {"d": int, "N": int, "sweeps": int, "burn_in": int,
            "thinning": int, "grid_m": int, "n_configs": int,
            "n_samples": int, "n_profiles": int, "L1": int, "L2": int,
            "margin": int, "q": float, "beta": float, "p": float,
            "K": float, "r": float, "delta": float, "curvature_ref": float}


class ConfigError(Exception):
    pass


def parse_config_file(path: str) -> dict:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key] = val
    return out


def build_config(args) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        file_cfg = parse_config_file(args.config)
        for k, v in file_cfg.items():
            if k not in cfg and k != "seed":
                raise ConfigError(f"unknown config key {k!r}")
            cfg[k] = v
        if "seed" in file_cfg:
            cfg["seed"] = file_cfg["seed"]
    cfg.setdefault("seed", 0)
    if args.seed is not None:
        cfg["seed"] = args.seed
    for k, conv in _NUMERIC.items():
        if cfg.get(k) is not None and not isinstance(cfg[k], (int, float)):
            try:
                cfg[k] = conv(cfg[k])
            except ValueError as exc:
                raise ConfigError(f"config key {k!r}: {exc}") from None
    cfg["seed"] = int(cfg["seed"])
    if cfg["p"] is not None and cfg["beta"] is not None:
        raise ConfigError("give either p or beta, not both")
    if cfg["p"] is not None:
        if not 0 <= cfg["p"] < 1:
            raise ConfigError("config key 'p': must lie in [0, 1)")
        cfg["beta"] = -0.5 * math.log1p(-cfg["p"])
    if cfg["beta"] is None:
        cfg["beta"] = 0.4
    if cfg["q"] < 1:
        raise ConfigError("config key 'q': must be >= 1")
    if cfg["N"] < 0:
        raise ConfigError("config key 'N': must be >= 0")
    if cfg["bc"] not in ("free", "wired"):
        raise ConfigError("config key 'bc': must be free or wired")
    for key in ("sweeps", "burn_in", "thinning", "n_configs", "n_samples",
                "n_profiles"):
        if cfg[key] < 0:
            raise ConfigError(f"config key {key!r}: must be >= 0")
    return cfg


def _int_list(text) -> list:
    return [int(s) for s in str(text).split(",") if s.strip()]


class OutputDir:
    def __init__(self, path: str, force: bool):
        self.path = Path(path)
        if self.path.exists() and any(self.path.iterdir()) and not force:
            raise ConfigError(
                f"output directory {path} is not empty (use --force)")
        self.path.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, content: str) -> Path:
        p = self.path / name
        p.write_text(content)
        return p


def write_manifest(out: OutputDir, command: str, cfg: dict) -> None:
    lines = [f"command = {command}", f"version = {__version__}"]
    for k in sorted(cfg):
        lines.append(f"{k} = {cfg[k]}")
    out.write("manifest.txt", "\n".join(lines) + "\n")


def _series_files(out: OutputDir, name: str, series) -> None:
    csv = series.to_csv(name)
    out.write(f"{name}.csv", csv)
    dat = "\n".join(line.replace(",", " ") for line in csv.splitlines()[1:])
    out.write(f"{name}.dat", f"# {csv.splitlines()[0]}\n" + dat + "\n")


def _model(cfg) -> fkmodel.ModelParams:
    return fkmodel.ModelParams(beta=cfg["beta"], q=cfg["q"],
                               couplings=lattice.nearest_neighbor(cfg["d"]))


def _region(cfg):
    return lattice.Box(cfg["N"], cfg["d"])


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_sample(cfg, out: OutputDir, chains: int) -> None:
    params = _model(cfg)
    region = _region(cfg)
    for chain in range(chains):
        dumps = []
        for config in fkmodel.sample_chain(params, region, cfg["bc"],
                                           cfg["sampler"], cfg["burn_in"],
                                           cfg["sweeps"], cfg["thinning"],
                                           cfg["seed"], stream=chain):
            dumps.append(fkmodel.dump_configuration(config, params,
                                                    cfg["seed"]))
        out.write(f"samples_chain{chain}.fk", "".join(dumps))


def cmd_enumerate(cfg, out: OutputDir, chains: int) -> None:
    params = _model(cfg)
    dist = fkmodel.exact_distribution(_region(cfg), params, cfg["bc"])
    lines = ["mask,probability"]
    for mask, prob in enumerate(dist.probs):
        lines.append(f"{mask},{prob:.17g}")
    out.write("distribution.csv", "\n".join(lines) + "\n")
    bonds = "\n".join(f"{i},{b}" for i, b in enumerate(dist.graph.bonds))
    out.write("bonds.csv", "index,bond\n" + bonds + "\n")


def _pair_study(cfg) -> runners.PairStudy:
    scales = _int_list(cfg["scales"])
    radii = _int_list(cfg["ray_radii"])
    rays = {d: tuple(radii) for d in runners.OCTANT_DIRECTIONS[1:]} if radii else {}
    if cfg["q"] == 1.0:
        p = -math.expm1(-2 * cfg["beta"])
        return runners.run_q1_pair_study(
            p, scales, rays, cfg["n_configs"], cfg["seed"],
            L1=cfg["L1"], L2=cfg["L2"], margin=cfg["margin"])
    if cfg["q"] != int(cfg["q"]):
        raise ConfigError("decay studies support q = 1 or integer q >= 2")
    return runners.run_sw_pair_study(
        cfg["beta"], int(cfg["q"]), scales, rays, cfg["n_configs"],
        cfg["seed"], L1=cfg["L1"], L2=cfg["L2"], margin=cfg["margin"],
        thinning=cfg["thinning"] or 2)


def cmd_xi(cfg, out: OutputDir, chains: int) -> None:
    studies = []
    for chain in range(chains):
        c = dict(cfg)
        c["seed"] = cfg["seed"] + chain
        studies.append(_pair_study(c))
    study = runners.merge_studies(studies) if len(studies) > 1 else studies[0]
    series = study.series["axis"]
    _series_files(out, "decay_axis", series)
    xi, naive = analysis.fit_inverse_correlation_length(series, cfg["d"])
    report = {
        "xi": {"value": xi.value, "lo": xi.lo, "hi": xi.hi, "n": xi.n},
        "naive_rates": [float(v) for v in naive],
        "sweeps": study.n_sweeps,
    }
    out.write("xi.json", json.dumps(report, indent=1, sort_keys=True) + "\n")


def cmd_oz(cfg, out: OutputDir, chains: int) -> None:
    study = _pair_study(cfg)
    series = study.series["axis"]
    _series_files(out, "decay_axis", series)
    fit = analysis.oz_exponent_fit(series, cfg["d"])
    report = {
        "xi": {"value": fit.xi.value, "lo": fit.xi.lo, "hi": fit.xi.hi},
        "alpha": {"value": fit.alpha.value, "lo": fit.alpha.lo,
                  "hi": fit.alpha.hi},
        "log_psi": {"value": fit.log_psi.value, "lo": fit.log_psi.lo,
                    "hi": fit.log_psi.hi},
        "alpha_covers_expected": bool(fit.alpha_covers_expected),
        "chi2_dof": fit.chi2_dof,
        "scales_used": [float(s) for s in fit.scales_used],
        "sweeps": study.n_sweeps,
    }
    out.write("oz.json", json.dumps(report, indent=1, sort_keys=True) + "\n")


def cmd_wulff(cfg, out: OutputDir, chains: int) -> None:
    study = _pair_study(cfg)
    norm, ests = runners.directional_norm_from_study(study, cfg["d"])
    for lab, series in study.series.items():
        _series_files(out, f"decay_{lab}", series)
    U = geometry.equi_decay_set(norm, 512)
    K, t, chi, positive = runners.wulff_curvature_at_axis(norm)
    out.write("equi_decay.csv", U.to_csv())
    out.write("wulff.csv", K.to_csv())
    report = {
        "directions": {f"{a},{b}": {"value": e.value, "lo": e.lo, "hi": e.hi}
                       for (a, b), e in ests.items()},
        "curvature_at_axis": chi,
        "curvature_positive": bool(positive),
        "dual_point": [float(c) for c in t],
        "convexity_defect": norm.convexity_defect(),
    }
    out.write("wulff.json", json.dumps(report, indent=1, sort_keys=True) + "\n")


def _load_cluster(path: str) -> clustergeo.Cluster:
    data = json.loads(Path(path).read_text())
    return clustergeo.cluster_from_points(
        [tuple(v) for v in data["vertices"]],
        [(tuple(a), tuple(b)) for a, b in data["edges"]],
        tuple(data["source"]), tuple(data["target"]))


def cmd_skeleton(cfg, out: OutputDir, chains: int) -> None:
    if not cfg.get("cluster_file"):
        raise ConfigError("config key 'cluster_file' required")
    C = _load_cluster(cfg["cluster_file"])
    norm = geometry.EuclideanNorm()
    tree = clustergeo.skeleton(C, cfg["K"], cfg["r"], norm)
    trunk, branches = clustergeo.split_trunk_branches(
        tree, C.target_point())
    report = {
        "K": cfg["K"],
        "r": cfg["r"],
        "vertices": [list(map(int, v)) for v in tree.vertices],
        "parent": tree.parent,
        "trunk": trunk,
        "branches": [{"root": r, "vertices": s} for r, s in branches],
    }
    out.write("skeleton.json", json.dumps(report, indent=1, sort_keys=True) + "\n")


def cmd_decompose(cfg, out: OutputDir, chains: int) -> None:
    if not cfg.get("cluster_file"):
        raise ConfigError("config key 'cluster_file' required")
    C = _load_cluster(cfg["cluster_file"])
    norm = geometry.EuclideanNorm()
    x = np.asarray(C.displacement(), dtype=float)
    t = geometry.dual_vector(x, norm)
    dec = clustergeo.decompose(C, t, cfg["delta"], norm)
    if isinstance(dec, clustergeo.Undecomposable):
        out.write("decomposition.json", json.dumps(
            {"undecomposable": True, "cone_points": dec.count}) + "\n")
        return
    report = clustergeo.export_decomposition(dec)
    anchors = clustergeo.decomposition_anchors(C, dec)
    _, dh = clustergeo.polyline_and_hausdorff(C, anchors)
    report["hausdorff"] = dh
    out.write("decomposition.json",
              json.dumps(report, indent=1, sort_keys=True) + "\n")


def cmd_interface(cfg, out: OutputDir, chains: int) -> None:
    all_profiles = []
    for chain in range(chains):
        study = runners.run_interface_study(
            cfg["N"], cfg["beta"], int(cfg["q"]), cfg["n_profiles"],
            cfg["grid_m"], cfg["seed"], delta=cfg["delta"],
            thinning=max(cfg["thinning"], 1), burn_in=cfg["burn_in"],
            stream=chain)
        all_profiles.extend(study.profiles)
    out.write("profiles.csv", potts.profiles_to_csv(all_profiles))


def cmd_bridge(cfg, out: OutputDir, chains: int) -> None:
    all_profiles = []
    for chain in range(chains):
        study = runners.run_interface_study(
            cfg["N"], cfg["beta"], int(cfg["q"]), cfg["n_profiles"],
            cfg["grid_m"], cfg["seed"], delta=cfg["delta"],
            thinning=max(cfg["thinning"], 1), burn_in=cfg["burn_in"],
            stream=chain)
        all_profiles.extend(study.profiles)
    ref = cfg.get("curvature_ref")
    rep = analysis.bridge_covariance_test(
        all_profiles, curvature_ref=ref,
        span_scale=cfg["N"] / (2 * cfg["N"] + 1))
    report = {
        "chi": {"value": rep.chi.value, "lo": rep.chi.lo, "hi": rep.chi.hi},
        "r2": rep.r2,
        "kurtosis_mid": rep.kurtosis_mid,
        "max_cov_deviation": rep.max_cov_deviation,
        "chi_vs_reference": rep.chi_vs_reference,
        "verdict": bool(rep.verdict),
        "n_profiles": len(all_profiles),
    }
    out.write("bridge.json", json.dumps(report, indent=1, sort_keys=True) + "\n")
    out.write("profiles.csv", potts.profiles_to_csv(all_profiles))


def cmd_exit(cfg, out: OutputDir, chains: int) -> None:
    if cfg["q"] != 1.0:
        raise ConfigError("exit studies are q = 1 (cluster growth)")
    p = -math.expm1(-2 * cfg["beta"])
    boxes = _int_list(cfg["box_sizes"])
    free, wired = runners.run_exit_study(p, boxes, cfg["n_samples"],
                                         cfg["seed"])
    free_decay = analysis.exit_decay(free)
    wired_decay = analysis.exit_decay(wired)
    _series_files(out, "exit_free", free_decay.series)
    _series_files(out, "exit_wired", wired_decay.series)
    report = {
        "free_rates": [float(v) for v in free_decay.rates],
        "free_final_rate": {"value": free_decay.final_rate.value,
                            "lo": free_decay.final_rate.lo,
                            "hi": free_decay.final_rate.hi},
        "wired_loglinear_slope": wired_decay.loglinear_slope,
        "wired_loglinear_r2": wired_decay.loglinear_r2,
    }
    out.write("exit.json", json.dumps(report, indent=1, sort_keys=True) + "\n")


def cmd_duality(cfg, out: OutputDir, chains: int) -> None:
    q = cfg["q"]
    p = -math.expm1(-2 * cfg["beta"])
    report = {
        "p": p,
        "p_dual": duality2d.dual_parameter(p, q) if 0 < p < 1 else None,
        "beta_dual": duality2d.dual_beta(cfg["beta"], q) if 0 < p < 1 else None,
        "self_dual_point": duality2d.self_dual_point(q),
        "involution_error": None,
        "tv_2x2": None,
        "tv_3x3": None,
    }
    if 0 < p < 1:
        report["involution_error"] = abs(
            duality2d.dual_parameter(report["p_dual"], q) - p)
        params = fkmodel.ModelParams(beta=cfg["beta"], q=q,
                                     couplings=lattice.nearest_neighbor(2))
        for name, shape in (("tv_2x2", (2, 2)), ("tv_3x3", (3, 3))):
            push, exact = duality2d.dual_pushforward_table(
                lattice.Rect(shape), params)
            report[name] = fkmodel.tv_distance(push, exact)
    out.write("duality.json", json.dumps(report, indent=1, sort_keys=True) + "\n")


COMMANDS = {
    "sample": cmd_sample,
    "enumerate": cmd_enumerate,
    "xi": cmd_xi,
    "oz": cmd_oz,
    "wulff": cmd_wulff,
    "skeleton": cmd_skeleton,
    "decompose": cmd_decompose,
    "interface": cmd_interface,
    "bridge": cmd_bridge,
    "exit": cmd_exit,
    "duality": cmd_duality,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fklab",
        description="random-cluster sampling and analysis laboratory")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", help="flat key = value file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--chains", type=int, default=1)
    parser.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty directory")
    args = parser.parse_args(argv)
    try:
        cfg = build_config(args)
        out = OutputDir(args.out, args.force)
        write_manifest(out, args.command, cfg)
        COMMANDS[args.command](cfg, out, max(args.chains, 1))
    except Exception as exc:
        kind = type(exc).__name__
        sys.stderr.write(f"error: {kind}: {exc}\n")
        return 1 if isinstance(exc, ConfigError) else 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
