"""Command-line front end: config files, dispatch, manifests, report bundles.

Every subcommand validates its options against a schema, runs one operation
from the library, writes its outputs (17 significant digits in CSV so 64-bit
floats round-trip), and drops a manifest JSON beside them recording the
command, the full configuration, input hashes, output hashes, seeds, and
wall-clock time.  Exit codes: 0 success, 2 configuration/schema error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .grids import GridError, PeriodicGrid, RealField, write_field
from .profiles import ProfileError, WaveParameters, solve_ks_wave
from .bloch import BlochError
from .semigroup import SemigroupError
from .simulate import SimConfig, SimulationError, run
from .experiments import ExperimentError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

NUMERICAL_ERRORS = (ProfileError, BlochError, SemigroupError,
                    SimulationError, ExperimentError, GridError,
                    np.linalg.LinAlgError)


class ConfigError(ValueError):
    """Malformed configuration: unknown key, bad type, missing value."""


# ---------------------------------------------------------------------------
# configuration documents
#
# One section per subcommand; every key is also a command-line flag and flags
# override file values.  Types: f = float (units noted in help strings),
# i = int, s = string, fl = comma-separated floats, il = comma-separated ints.

SCHEMA = {
    "profile": {"eps": "f", "period": "f", "points": "i"},
    "continue": {"eps": "f", "t0": "f", "t1": "f", "step": "f",
                 "points": "i"},
    "spectrum": {"eps": "f", "period": "f", "m": "i", "xi_count": "i",
                 "top": "i"},
    "stabmap": {"eps_grid": "fl", "t_grid": "fl", "m": "i", "points": "i",
                "xi_count": "i", "refine_tol": "f"},
    "semigroup": {"period": "f", "n_list": "il", "t_list": "fl",
                  "piece": "s", "input_derivative": "i",
                  "output_derivative": "i", "norm": "s", "seed": "i"},
    "lemma-a1": {"omega": "i", "d": "f", "n_list": "il", "t_list": "fl"},
    "gaps": {"eps": "f", "period": "f", "n_list": "il"},
    "simulate": {"eps": "f", "period": "f", "n_periods": "i",
                 "points_per_period": "i", "dt": "f", "t_end": "f",
                 "snapshots": "fl", "shape": "s", "amplitude": "f",
                 "seed": "i", "mode": "i"},
    "experiment": {"kind": "s", "eps": "f", "period": "f", "n_list": "il",
                   "points_per_period": "i", "dt": "f", "t_end": "f",
                   "snapshots": "i", "shape": "s", "amplitude": "f",
                   "seed": "i", "t_min": "f", "t_max": "f"},
    "report": {"run_dir": "s"},
}

DEFAULTS = {
    "profile": {"eps": 0.0, "points": 64},
    "continue": {"eps": 0.0, "step": 0.05, "points": 64},
    "spectrum": {"eps": 0.0, "m": 48, "xi_count": 64, "top": 4},
    "stabmap": {"m": 48, "points": 64, "xi_count": 64, "refine_tol": 1e-3},
    "semigroup": {"piece": "stilde", "input_derivative": 0,
                  "output_derivative": 0, "norm": "L2", "seed": 0},
    "lemma-a1": {},
    "gaps": {"eps": 0.0},
    "simulate": {"eps": 0.0, "n_periods": 1, "points_per_period": 64,
                 "dt": 0.02, "shape": "random", "amplitude": 0.01,
                 "seed": 0, "mode": 1, "snapshots": ()},
    "experiment": {"eps": 0.0, "points_per_period": 64, "dt": 0.02,
                   "shape": "random", "amplitude": 0.01, "seed": 0,
                   "snapshots": 40, "t_min": 2.0, "t_max": float("inf")},
    "report": {},
}


def _parse_value(raw, kind, key):
    try:
        if kind == "f":
            return float(raw)
        if kind == "i":
            return int(raw)
        if kind == "s":
            return str(raw)
        if kind == "fl":
            return tuple(float(v) for v in str(raw).split(",") if v != "")
        if kind == "il":
            return tuple(int(v) for v in str(raw).split(",") if v != "")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})")
    raise ConfigError(f"unknown schema kind {kind!r}")


@dataclass
class ConfigDocument:
    """Validated key-value tree, one section per subcommand."""

    sections: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path):
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}")
        doc = cls()
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            out = {}
            for key, raw in cp[section].items():
                if key not in SCHEMA[section]:
                    raise ConfigError(
                        f"unknown key {key!r} in section [{section}]")
                out[key] = _parse_value(raw, SCHEMA[section][key], key)
            doc.sections[section] = out
        return doc

    def options(self, command, overrides):
        """Defaults, then the config section, then explicit flag overrides."""
        opts = dict(DEFAULTS.get(command, {}))
        opts.update(self.sections.get(command, {}))
        opts.update({k: v for k, v in overrides.items() if v is not None})
        missing = [k for k in SCHEMA[command]
                   if k not in opts]
        if missing:
            raise ConfigError(
                f"missing required option(s) for {command}: "
                + ", ".join(sorted(missing)))
        return opts


# ---------------------------------------------------------------------------
# manifests

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    config: dict
    version: str
    input_hashes: dict
    outputs: dict
    wall_clock: float
    seeds: dict

    def write(self, path):
        doc = {"command": self.command, "argv": self.argv,
               "config": self.config, "version": self.version,
               "input_hashes": self.input_hashes, "outputs": self.outputs,
               "wall_clock_seconds": self.wall_clock, "seeds": self.seeds}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    return f"{float(v):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                v if isinstance(v, str) else _fmt(v) for v in row) + "\n")


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# subcommand implementations: each returns a list of output paths

def cmd_profile(opts, out_dir):
    w = solve_ks_wave(opts["period"], epsilon=opts["eps"],
                      num_points=opts["points"])
    from .profiles import unintegrated_residual

    paths = []
    p = os.path.join(out_dir, "profile.bin")
    write_field(p, w.profile)
    paths.append(p)
    p = os.path.join(out_dir, "profile.csv")
    _write_csv(p, ["x", "value"],
               zip(w.grid.points, w.profile.values))
    paths.append(p)
    p = os.path.join(out_dir, "profile.json")
    _write_json(p, {"epsilon": w.params.epsilon, "delta": w.params.delta,
                    "period": w.T, "speed": w.c, "quad_const": w.q,
                    "residual_norm": w.residual_norm,
                    "unintegrated_residual": unintegrated_residual(w),
                    "num_points": w.grid.num_points})
    paths.append(p)
    return paths


def cmd_continue(opts, out_dir):
    from .profiles import continue_in_period

    seed = solve_ks_wave(opts["t0"], epsilon=opts["eps"],
                         num_points=opts["points"])
    branch = continue_in_period(seed, (opts["t0"], opts["t1"]),
                                step=opts["step"])
    p = os.path.join(out_dir, "branch.csv")
    _write_csv(p, ["period", "speed", "quad_const", "residual_norm"],
               [(w.T, w.c, w.q, w.residual_norm)
                for w in branch.profiles])
    return [p]


def cmd_spectrum(opts, out_dir):
    from .bloch import build_bloch_matrix, spectrum_slice

    w = solve_ks_wave(opts["period"], epsilon=opts["eps"])
    xis = np.linspace(-np.pi / w.T, np.pi / w.T, opts["xi_count"],
                      endpoint=False)
    rows = []
    for xi in xis:
        sl = spectrum_slice(build_bloch_matrix(w, float(xi), opts["m"]))
        for lam in sl.eigenvalues[:opts["top"]]:
            rows.append((xi, lam.real, lam.imag))
    p = os.path.join(out_dir, "spectrum.csv")
    _write_csv(p, ["xi", "re_lambda", "im_lambda"], rows)
    return [p]


def cmd_stabmap(opts, out_dir):
    from .bloch import critical_expansion, stability_map

    res = stability_map(opts["eps_grid"], opts["t_grid"], M=opts["m"],
                        num_points=opts["points"],
                        xi_count=opts["xi_count"],
                        refine_tol=opts["refine_tol"])
    rows = []
    for (eps, T), (verdict, _, v) in sorted(res["cells"].items()):
        a1 = a2 = d1 = d2 = float("nan")
        theta = v.theta if v is not None else float("nan")
        if verdict == "stable":
            w = solve_ks_wave(T, epsilon=eps, num_points=opts["points"])
            b1, b2 = critical_expansion(w)
            a1, a2, d1, d2 = b1.a, b2.a, b1.d, b2.d
        rows.append((eps, T, verdict, theta, a1, a2, d1, d2))
    p_csv = os.path.join(out_dir, "stabmap.csv")
    _write_csv(p_csv, ["eps", "T", "verdict", "theta", "a1", "a2",
                       "d1", "d2"], rows)
    p_json = os.path.join(out_dir, "stabmap.json")
    _write_json(p_json, {"bands": {f"{e:.17g}": b
                                   for e, b in res["bands"].items()}})
    return [p_csv, p_json]


def _seeded_builder(seed, decay=0.25):
    def build(grid):
        rng = np.random.default_rng(seed)
        n = grid.num_points
        c = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        c *= np.exp(-decay * np.abs(np.fft.fftfreq(n, d=1.0 / n)))
        vals = np.fft.ifft(c).real
        return RealField(grid, vals / np.max(np.abs(vals)))
    return build


def cmd_semigroup(opts, out_dir):
    from .semigroup import measure_linear_decay

    w = solve_ks_wave(opts["period"])
    out = measure_linear_decay(
        w, opts["n_list"], np.asarray(opts["t_list"]),
        _seeded_builder(opts["seed"]), piece=opts["piece"],
        input_derivative=opts["input_derivative"],
        output_derivative=opts["output_derivative"], norm=opts["norm"])
    rows = []
    fits = {}
    for meas in out:
        for t, v in meas.series:
            rows.append((meas.N, t, v))
        fits[str(meas.N)] = {"exponent": meas.exponent_fit,
                             "prefactor": meas.prefactor,
                             "r_squared": meas.r_squared,
                             "window": list(meas.window),
                             "piece": meas.piece, "norm": meas.norm}
    p_csv = os.path.join(out_dir, "decay.csv")
    _write_csv(p_csv, ["N", "t", "norm"], rows)
    p_json = os.path.join(out_dir, "decay.json")
    _write_json(p_json, {"fits": fits})
    return [p_csv, p_json]


def cmd_lemma_a1(opts, out_dir):
    from .semigroup import discrete_sum_bound

    t_list = np.asarray(opts["t_list"])
    out = discrete_sum_bound(opts["omega"], opts["d"], opts["n_list"],
                             t_list)
    rows = []
    envelope = (1.0 + t_list) ** (opts["omega"] + 0.5)
    for N in opts["n_list"]:
        vals = out["values"][N]
        for t, v, wv in zip(t_list, vals, vals * envelope):
            rows.append((N, t, v, wv))
    p_csv = os.path.join(out_dir, "lattice_sum.csv")
    _write_csv(p_csv, ["N", "t", "value", "weighted"], rows)
    p_json = os.path.join(out_dir, "lattice_sum.json")
    _write_json(p_json, {"omega": opts["omega"], "d": opts["d"],
                         "sup_weighted": {str(N): v for N, v in
                                          out["sup_weighted"].items()},
                         "sup_overall": out["sup_overall"]})
    return [p_csv, p_json]


def cmd_gaps(opts, out_dir):
    from .bloch import critical_expansion
    from .semigroup import gap_scan

    w = solve_ks_wave(opts["period"], epsilon=opts["eps"])
    gaps = gap_scan(w, opts["n_list"])
    b1, b2 = critical_expansion(w)
    d_min = min(b1.d, b2.d)
    rows = [(N, gaps[N], d_min * (2 * np.pi / (N * w.T)) ** 2)
            for N in opts["n_list"]]
    p_csv = os.path.join(out_dir, "gaps.csv")
    _write_csv(p_csv, ["N", "gap", "quadratic_reference"], rows)
    p_json = os.path.join(out_dir, "gaps.json")
    _write_json(p_json, {"d_min": d_min, "period": w.T,
                         "gaps": {str(N): gaps[N] for N in gaps}})
    return [p_csv, p_json]


def _build_initial(opts, w):
    from .experiments import PerturbationSpec, make_perturbation

    spec = PerturbationSpec(N=opts["n_periods"], shape=opts["shape"],
                            amplitude=opts["amplitude"],
                            seed=opts["seed"], mode=opts.get("mode", 1))
    return make_perturbation(spec, w)


def cmd_simulate(opts, out_dir):
    w = solve_ks_wave(opts["period"], epsilon=opts["eps"],
                      num_points=opts["points_per_period"])
    u0, rep = _build_initial(opts, w)
    cfg = SimConfig(w.params, w.c, opts["n_periods"] * w.T,
                    opts["n_periods"] * opts["points_per_period"],
                    dt=opts["dt"], t_end=opts["t_end"],
                    snapshot_times=tuple(opts["snapshots"]))
    traj = run(cfg, u0)
    paths = []
    for i, (t, f) in enumerate(traj.snapshots):
        p = os.path.join(out_dir, f"snapshot_{i:04d}.bin")
        write_field(p, f)
        paths.append(p)
    p = os.path.join(out_dir, "diagnostics.csv")
    _write_csv(p, ["t", "mass", "energy", "sup"],
               zip(traj.times, traj.mass, traj.energy, traj.sup))
    paths.append(p)
    p = os.path.join(out_dir, "simulation.json")
    _write_json(p, {"perturbation": rep, "dt": cfg.dt, "t_end": cfg.t_end,
                    "num_points": cfg.num_points, "length": cfg.length,
                    "snapshot_times": list(traj.times)})
    paths.append(p)
    return paths


def cmd_experiment(opts, out_dir):
    from .bloch import critical_expansion
    from .experiments import (
        PerturbationSpec,
        compare_remainder_implementations,
        fit_fixedN_decay,
        fit_uniform_decay,
        make_perturbation,
    )

    kind = opts["kind"]
    w = solve_ks_wave(opts["period"], epsilon=opts["eps"],
                      num_points=opts["points_per_period"])

    def run_one(N):
        spec = PerturbationSpec(N=N, shape=opts["shape"],
                                amplitude=opts["amplitude"],
                                seed=opts["seed"])
        u0, rep = make_perturbation(spec, w)
        snaps = tuple(np.unique(np.round(
            np.logspace(0, np.log10(opts["t_end"]), opts["snapshots"]), 2)))
        cfg = SimConfig(w.params, w.c, N * w.T,
                        N * opts["points_per_period"], dt=opts["dt"],
                        t_end=opts["t_end"], snapshot_times=snaps)
        return run(cfg, u0), rep

    if kind == "fixed-n":
        paths = []
        summary = {}
        for N in opts["n_list"]:
            traj, rep = run_one(N)
            out = fit_fixedN_decay(traj, w, N, t_min=opts["t_min"],
                                   t_max=opts["t_max"])
            p = os.path.join(out_dir, f"fixed_n_{N}.csv")
            _write_csv(p, ["t", "h1_distance", "shift"],
                       zip(out["times"], out["norms"], out["shifts"]))
            paths.append(p)
            summary[str(N)] = {
                "delta_fit": out["delta_fit"],
                "r_squared": out["fit"].r_squared,
                "window": list(out["fit"].window),
                "gamma_inf": out["gamma_inf"], "deltaM": out["deltaM"],
                "E0": rep["E0"]}
        p = os.path.join(out_dir, "fixed_n.json")
        _write_json(p, {"fits": summary})
        paths.append(p)
        return paths

    if kind == "uniform":
        b1, _ = critical_expansion(w)

        def window(N):
            gap = b1.d * (2 * np.pi / (N * w.T)) ** 2
            return (opts["t_min"], min(opts["t_end"], 1.5 / gap))

        runs, e0 = {}, {}
        for N in opts["n_list"]:
            runs[N], rep = run_one(N)
            e0[N] = rep["E0"]
        out = fit_uniform_decay(runs, w, E0=e0, fit_window=window)
        paths = []
        for N in opts["n_list"]:
            s = out["series"][N]
            p = os.path.join(out_dir, f"uniform_{N}.csv")
            _write_csv(p, ["t", "res_l2", "res_h1", "monitor"],
                       zip(s["times"], s["res_l2"], s["res_h1"],
                           out["monitors"][N]))
            paths.append(p)
        summary = {str(N): {"exponent": f.exponent,
                            "r_squared": f.r_squared,
                            "window": list(f.window),
                            "zeta": out["zeta"][N],
                            "psi_sup": out["psi_sup"][N],
                            "psi_over_E0": out["psi_over_E0"][N],
                            "E0": e0[N]}
                   for N, f in out["fits"].items()}
        p = os.path.join(out_dir, "uniform.json")
        _write_json(p, {"fits": summary})
        paths.append(p)
        return paths

    if kind == "residual":
        N = opts["n_list"][0] if opts["n_list"] else 2
        grid = PeriodicGrid(N * w.T, max(256, N * opts["points_per_period"]))
        rng = np.random.default_rng(opts["seed"])

        def smooth(scale):
            c = rng.standard_normal(grid.num_points) \
                + 1j * rng.standard_normal(grid.num_points)
            c *= np.exp(-0.6 * np.abs(
                np.fft.fftfreq(grid.num_points, d=1.0 / grid.num_points)))
            vals = np.fft.ifft(c).real
            return scale * vals / np.max(np.abs(vals))

        err = compare_remainder_implementations(
            w, grid, smooth(0.3), smooth(0.2), smooth(0.1), 0.07, N)
        p = os.path.join(out_dir, "residual.json")
        _write_json(p, {"N": N, "num_points": grid.num_points,
                        "dual_implementation_max_diff": err})
        return [p]

    raise ConfigError(f"unknown experiment kind {kind!r}")


def cmd_report(opts, out_dir):
    """Consolidate a completed run directory into a plotting bundle."""
    run_dir = opts["run_dir"]
    manifest_path = os.path.join(run_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise ConfigError(f"no manifest.json in {run_dir}; not a "
                          "completed run directory")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    missing = [p for p in manifest["outputs"]
               if not os.path.isfile(os.path.join(run_dir,
                                                  os.path.basename(p)))]
    if missing:
        raise ConfigError("missing outputs: " + ", ".join(sorted(missing)))
    paths = []
    index = {"command": manifest["command"], "files": []}
    for out in sorted(manifest["outputs"]):
        name = os.path.basename(out)
        src = os.path.join(run_dir, name)
        dst = os.path.join(out_dir, name)
        if os.path.abspath(src) != os.path.abspath(dst):
            with open(src, "rb") as fi, open(dst, "wb") as fo:
                fo.write(fi.read())
        index["files"].append(name)
        paths.append(dst)
    p = os.path.join(out_dir, "bundle.json")
    _write_json(p, index)
    paths.append(p)
    return paths


COMMANDS = {
    "profile": cmd_profile,
    "continue": cmd_continue,
    "spectrum": cmd_spectrum,
    "stabmap": cmd_stabmap,
    "semigroup": cmd_semigroup,
    "lemma-a1": cmd_lemma_a1,
    "gaps": cmd_gaps,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kdvks",
        description="Periodic wave trains of the KdV/Kuramoto-Sivashinsky "
                    "equation: profiles, spectra, semigroup decay, "
                    "stability experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for command, keys in SCHEMA.items():
        p = sub.add_parser(command)
        p.add_argument("--config", default=None,
                       help="config file; flags override its values")
        p.add_argument("--out", default=".", help="output directory")
        for key, kind in keys.items():
            flag = "--" + key.replace("_", "-")
            p.add_argument(flag, dest=key, default=None,
                           type=str)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command

    t0 = time.monotonic()
    try:
        doc = (ConfigDocument.from_file(args.config) if args.config
               else ConfigDocument())
        overrides = {
            key: _parse_value(getattr(args, key), kind, key)
            for key, kind in SCHEMA[command].items()
            if getattr(args, key) is not None}
        opts = doc.options(command, overrides)
        out_dir = args.out
        os.makedirs(out_dir, exist_ok=True)
        outputs = COMMANDS[command](opts, out_dir)
    except ConfigError as exc:
        print(f"kdvks {command}: configuration error: {exc}",
              file=sys.stderr)
        return EXIT_CONFIG
    except NUMERICAL_ERRORS as exc:
        payload = {"command": command, "error": type(exc).__name__,
                   "message": str(exc)}
        print("kdvks numerical failure: " + json.dumps(payload),
              file=sys.stderr)
        return EXIT_NUMERICAL

    manifest = RunManifest(
        command=command,
        argv=[sys.argv[0] if argv is None else "kdvks"] + argv,
        config={k: (list(v) if isinstance(v, tuple) else v)
                for k, v in opts.items()},
        version=__version__,
        input_hashes=({os.path.basename(args.config): _sha256(args.config)}
                      if args.config else {}),
        outputs={os.path.basename(p): _sha256(p) for p in outputs},
        wall_clock=time.monotonic() - t0,
        seeds={"seed": opts["seed"]} if "seed" in opts else {},
    )
    manifest.write(os.path.join(out_dir, "manifest.json"))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
