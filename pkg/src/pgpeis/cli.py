"""Command-line front end.

    pgpeis run [--config FILE] [flags]     run chains, write draws and summaries
    pgpeis simulate [--config FILE] [flags] write simulated data and true states
    pgpeis diagnose DRAWS.csv               ESS and update rates of stored draws

Configuration files are INI files with sections [run], [eis], [data],
[simulate] and [prior]; flags override the file, which overrides defaults.
The worker count for replications is read from PGPEIS_WORKERS.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import math
import os
import subprocess
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import io as pio
from .diagnostics import ChainOutput, ess, update_rate
from .models import cev, invwishart, sv
from .pg import SamplerConfig, run_chain
from .smc import ResampleSchedule

log = logging.getLogger("pgpeis")

WORKERS_ENV = "PGPEIS_WORKERS"
NONDETERMINISTIC = ("timing.csv", "manifest.json")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: str = "sv"
    sampler: str = "pgas"
    proposal: str = "peis"
    resample: str = "every"
    N: int = 30
    iterations: int = 50000
    burn_in: int = 10000
    thinning: int = 1
    eis_R: int = 15
    eis_L: int = 4
    seed: int = 0
    replications: int = 1
    data: str | None = None
    simulate_T: int | None = None
    simulate_q: int = 3
    simulate_seed: int | None = None
    theta_true: str | None = None
    theta_init: str | None = None
    fixed_params: bool = False
    state_index: str | None = None
    output: str = "out"
    prior: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.model not in ("sv", "cev", "invwishart"):
            raise ConfigError(f"model must be sv, cev or invwishart, not {self.model!r}")
        if self.sampler not in ("pg", "pgas", "pgmh"):
            raise ConfigError(f"sampler must be pg, pgas or pgmh, not {self.sampler!r}")
        if self.proposal not in ("bpf", "peis"):
            raise ConfigError(f"proposal must be bpf or peis, not {self.proposal!r}")
        parse_schedule(self.resample)
        if (self.data is None) == (self.simulate_T is None):
            raise ConfigError("give exactly one of a data path or a simulate block")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        try:
            self.sampler_config(2)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def schedule(self) -> ResampleSchedule:
        return parse_schedule(self.resample)

    def sampler_config(self, T: int) -> SamplerConfig:
        idx = None
        if self.state_index:
            idx = tuple(int(v) - 1 for v in self.state_index.split(","))
            if any(not 0 <= i < T for i in idx) and T > 2:
                raise ConfigError(f"state indices must lie in 1..{T}")
        return SamplerConfig(self.sampler, self.proposal, self.schedule(), self.N,
                             self.iterations, self.burn_in, self.thinning, self.eis_R,
                             self.eis_L, not self.fixed_params, idx)


# (section, key) in config files -> RunConfig field
FILE_KEYS = {
    ("run", "model"): "model", ("run", "sampler"): "sampler", ("run", "proposal"): "proposal",
    ("run", "resample"): "resample", ("run", "n"): "N", ("run", "iterations"): "iterations",
    ("run", "burn_in"): "burn_in", ("run", "thinning"): "thinning", ("run", "seed"): "seed",
    ("run", "replications"): "replications", ("run", "output"): "output",
    ("run", "state_index"): "state_index", ("run", "fixed_params"): "fixed_params",
    ("run", "theta_init"): "theta_init",
    ("eis", "r"): "eis_R", ("eis", "l"): "eis_L",
    ("data", "path"): "data",
    ("simulate", "t"): "simulate_T", ("simulate", "q"): "simulate_q",
    ("simulate", "seed"): "simulate_seed", ("simulate", "theta"): "theta_true",
}


def parse_schedule(text: str) -> ResampleSchedule:
    t = str(text).strip().lower().replace(" ", ":")
    if t == "every":
        return ResampleSchedule.every()
    if t == "never":
        return ResampleSchedule.never()
    if t.startswith("stride:"):
        try:
            return ResampleSchedule.sparse(int(t.split(":", 1)[1]))
        except ValueError:
            pass
    raise ConfigError(f"resample must be 'every', 'never' or 'stride K', not {text!r}")


def _coerce(name: str, value: str):
    ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
    if "bool" in ftype:
        v = str(value).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if ftype.startswith("int"):
        return int(value)
    return str(value).strip()


def _key_lines(path) -> dict:
    out, section = {}, None
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif "=" in s and not s.startswith(("#", ";")):
            out[(section, s.split("=", 1)[0].strip().lower())] = n
    return out


def read_config_file(path, cfg: RunConfig) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as e:
        raise ConfigError(f"{path}: {e}") from None
    lines = _key_lines(path)
    for section in cp.sections():
        for key, value in cp.items(section):
            sec = section.lower()
            where = f"{path}:{lines.get((sec, key), '?')}"
            if sec == "prior":
                cfg.prior[key] = value
                continue
            name = FILE_KEYS.get((sec, key))
            if name is None:
                raise ConfigError(f"{where}: unknown key [{section}] {key}")
            try:
                setattr(cfg, name, _coerce(name, value))
            except ValueError as e:
                raise ConfigError(f"{where}: bad value for {key}: {e}") from None
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--model", choices=("sv", "cev", "invwishart"))
    p.add_argument("--seed", type=int)
    p.add_argument("--output")
    p.add_argument("--data", help="observation CSV")
    p.add_argument("--simulate", metavar="T=..,q=..", help="simulate data, e.g. T=500")
    p.add_argument("--theta", dest="theta_true", help="true parameters, name=value,...")
    p.add_argument("--prior", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pgpeis", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run particle Gibbs chains")
    _add_common(run)
    run.add_argument("--sampler", choices=("pg", "pgas", "pgmh"))
    run.add_argument("--proposal", choices=("bpf", "peis"))
    run.add_argument("--resample", help="'every' or 'stride K'")
    run.add_argument("--N", type=int)
    run.add_argument("--iterations", type=int)
    run.add_argument("--burn-in", dest="burn_in", type=int)
    run.add_argument("--thinning", type=int)
    run.add_argument("--eis-R", dest="eis_R", type=int)
    run.add_argument("--eis-L", dest="eis_L", type=int)
    run.add_argument("--replications", type=int)
    run.add_argument("--state-index", dest="state_index", help="1-based periods, comma separated")
    run.add_argument("--theta-init", dest="theta_init")
    run.add_argument("--fixed-params", dest="fixed_params", action="store_true", default=None)
    simp = sub.add_parser("simulate", help="write simulated observations and states")
    _add_common(simp)
    diag = sub.add_parser("diagnose", help="ESS and update rates from a draws file")
    diag.add_argument("draws")
    diag.add_argument("--burn-in", dest="burn_in", type=int, default=0)
    diag.add_argument("--output", help="write the table as CSV here")
    return ap


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        read_config_file(args.config, cfg)
    for name in ("model", "seed", "output", "data", "theta_true", "sampler", "proposal",
                 "resample", "N", "iterations", "burn_in", "thinning", "eis_R", "eis_L",
                 "replications", "state_index", "theta_init", "fixed_params"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if args.data is not None:
        cfg.simulate_T = None
    if args.simulate:
        cfg.data = None
        for part in args.simulate.split(","):
            k, _, v = part.partition("=")
            key = k.strip().lower()
            if key not in ("t", "q", "seed") or not v:
                raise ConfigError(f"--simulate: expected T=..,q=..,seed=.., got {part!r}")
            setattr(cfg, {"t": "simulate_T", "q": "simulate_q", "seed": "simulate_seed"}[key], int(v))
    for item in args.prior:
        k, _, v = item.partition("=")
        if not v:
            raise ConfigError(f"--prior expects KEY=VALUE, got {item!r}")
        cfg.prior[k.strip().lower()] = v
    return cfg


# ---------------------------------------------------------------- models

def default_params(model: str, q: int = 3):
    if model == "sv":
        return sv.ML_PARAMS
    if model == "cev":
        return cev.ML_PARAMS
    mu = np.array([4.15, 4.12, 3.72, 4.11, 3.53])
    delta = np.array([0.97, 0.98, 0.96, 0.94, 0.96])
    sigma = np.array([0.31, 0.26, 0.29, 0.28, 0.25])
    h5 = [[0.39, 0.29, 0.29, 0.23], [0.20, 0.17, 0.12], [0.22, 0.18], [0.11]]
    reps = math.ceil(q / 5)
    h = np.concatenate([np.resize(h5[l % 4], q - l - 1) for l in range(q - 1)]) if q > 1 else np.zeros(0)
    return invwishart.IwParams(33.6, np.tile(mu, reps)[:q], np.tile(delta, reps)[:q],
                               np.tile(sigma, reps)[:q], h)


def parse_params(model_obj, text: str | None, fallback):
    if not text:
        return fallback
    names = list(model_obj.param_names)
    values = model_obj.flatten(fallback).astype(float)
    parts = [p for p in text.split(",") if p.strip()]
    if all("=" in p for p in parts):
        for p in parts:
            k, v = (s.strip() for s in p.split("=", 1))
            if k not in names:
                raise ConfigError(f"unknown parameter {k!r}; known: {', '.join(names)}")
            values[names.index(k)] = float(v)
    else:
        if len(parts) != len(names):
            raise ConfigError(f"expected {len(names)} parameter values ({', '.join(names)})")
        values = np.array([float(p) for p in parts])
    try:
        return model_obj.unflatten(values)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def build_model(name: str, y, prior: dict):
    cls, pcls = {"sv": (sv.SvModel, sv.SvPrior), "cev": (cev.CevModel, cev.CevPrior),
                 "invwishart": (invwishart.InvWishartModel, invwishart.IwPrior)}[name]
    known = {f.name: f for f in dataclasses.fields(pcls)}
    kw = {}
    for k, v in prior.items():
        if k not in known:
            raise ConfigError(f"unknown prior key {k!r} for {name}; known: {', '.join(known)}")
        kw[k] = tuple(float(x) for x in v.split(",")) if "," in v else float(v)
    if name == "invwishart" and np.ndim(y) != 3:
        raise ConfigError("invwishart needs matrix data")
    if name != "invwishart" and np.ndim(y) != 1:
        raise ConfigError(f"{name} needs a univariate series")
    return cls(y, pcls(**kw))


def _shape_model(name: str, q: int):
    # a throwaway model instance for parameter names and (un)flattening
    if name == "invwishart":
        return invwishart.InvWishartModel(np.tile(np.eye(q), (2, 1, 1)))
    return build_model(name, np.zeros(2), {})


def simulate_data(cfg: RunConfig):
    seed = cfg.seed if cfg.simulate_seed is None else cfg.simulate_seed
    shape = _shape_model(cfg.model, cfg.simulate_q)
    truth = parse_params(shape, cfg.theta_true, default_params(cfg.model, cfg.simulate_q))
    mod = {"sv": sv, "cev": cev, "invwishart": invwishart}[cfg.model]
    x, y = mod.simulate(truth, cfg.simulate_T, seed)
    return truth, np.atleast_2d(x), y


def replication_seeds(master: int, n: int) -> list[int]:
    """Per-replication seeds from the master seed by SeedSequence spawn keys."""
    return [int(np.random.SeedSequence(master, spawn_key=(r,)).generate_state(1)[0])
            for r in range(n)]


def _one_replication(job):
    cfg, y, seed = job
    model = build_model(cfg.model, y, cfg.prior)
    scfg = cfg.sampler_config(model.T)
    init_default = default_params(cfg.model, getattr(model, "q", 3))
    truth = parse_params(model, cfg.theta_true, init_default)
    params0 = parse_params(model, cfg.theta_init, truth)
    return run_chain(model, scfg, params0, seed)


# ---------------------------------------------------------------- outputs

def _summary_rows(out: ChainOutput):
    rows = []
    names = list(out.param_names) + out.state_labels()
    X = np.column_stack([out.theta, out.state_matrix()]) if out.M else np.empty((0, len(names)))
    for j, n in enumerate(names):
        col = X[:, j]
        if col.size >= 10:
            rows.append((n, float(col.mean()), float(col.std(ddof=1)), ess(col)))
        else:
            rows.append((n, float("nan"), float("nan"), float("nan")))
    return rows


def _write_summary(d: Path, rows, title: str) -> None:
    pio.write_table(d / "summary.csv", ["name", "mean", "sd", "ess"], rows)
    lines = [title, f"{'name':<12}{'mean':>14}{'sd':>14}{'ess':>10}"]
    for n, m, s, e in rows:
        lines.append(f"{n:<12}{m:>14.6g}{s:>14.6g}{e:>10.1f}")
    (d / "summary.txt").write_text("\n".join(lines) + "\n")


def write_replication(d: Path, out: ChainOutput) -> list:
    d.mkdir(parents=True, exist_ok=True)
    header = list(out.param_names) + out.state_labels()
    X = np.column_stack([out.theta, out.state_matrix()]) if out.M else np.empty((0, len(header)))
    pio.write_table(d / "draws.csv", header, X.tolist())
    rates = out.update_rates()
    if rates.shape[0] == 1:
        pio.write_table(d / "update_rates.csv", ["t", "rate"],
                        [(t + 1, float(r)) for t, r in enumerate(rates[0])])
    else:
        pio.write_table(d / "update_rates.csv",
                        ["t"] + [f"rate_{c + 1}" for c in range(rates.shape[0])],
                        [[t + 1] + [float(v) for v in rates[:, t]] for t in range(rates.shape[1])])
    rows = _summary_rows(out)
    _write_summary(d, rows, f"posterior summary, {out.M} retained draws")
    total = out.seconds()
    trows = [(k, float(v)) for k, v in out.timings.items()]
    trows += [(f"ess_per_hour:{n}", e * 3600.0 / total if total > 0 else float("nan"))
              for n, _, _, e in rows]
    pio.write_table(d / "timing.csv", ["key", "value"], trows)
    meta = {"failures": out.n_failures, "accepted": out.n_accepted, "retained": out.M,
            "compared": out.n_compared}
    (d / "chain.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n")
    return rows


def _git_version() -> str:
    try:
        r = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                           text=True, cwd=Path(__file__).resolve().parent, timeout=5)
        return r.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def write_manifest(outdir: Path, cfg: RunConfig, seeds, extra=None) -> None:
    files = sorted(p for p in outdir.rglob("*") if p.is_file() and p.name != "manifest.json")
    man = {
        "version": __version__,
        "source": _git_version(),
        "config": dataclasses.asdict(cfg),
        "replication_seeds": list(seeds),
        "files": {str(p.relative_to(outdir)): pio.sha256(p) for p in files},
        "nondeterministic": sorted(str(p.relative_to(outdir)) for p in files
                                   if p.name in NONDETERMINISTIC) + ["manifest.json"],
    }
    if extra:
        man.update(extra)
    (outdir / "manifest.json").write_text(json.dumps(man, indent=1, sort_keys=True) + "\n")


def cmd_run(cfg: RunConfig) -> int:
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.simulate_T is not None:
        truth, x, y = simulate_data(cfg)
        pio.write_observations(outdir / "data.csv", y)
        pio.write_table(outdir / "states_true.csv", [f"x{c + 1}" for c in range(x.shape[0])], x.T.tolist())
        if cfg.theta_true is None:
            cfg.theta_true = ",".join(f"{n}={v!r}" for n, v in zip(
                _shape_model(cfg.model, cfg.simulate_q).param_names,
                _shape_model(cfg.model, cfg.simulate_q).flatten(truth).tolist()))
    else:
        try:
            y = pio.ingest(cfg.data, cfg.model)
        except (OSError, ValueError) as e:
            raise ConfigError(f"{cfg.data}: {e}") from None
    build_model(cfg.model, y, cfg.prior)  # validate before spending time
    seeds = replication_seeds(cfg.seed, cfg.replications)
    jobs = [(cfg, y, s) for s in seeds]
    workers = max(1, int(os.environ.get(WORKERS_ENV, "1")))
    outs, failure = [], None
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                outs = list(ex.map(_one_replication, jobs))
        else:
            for job in jobs:
                outs.append(_one_replication(job))
    except Exception:  # keep partial outputs and a failure record
        failure = traceback.format_exc()
    all_rows = [write_replication(outdir / f"rep{r:03d}", o) for r, o in enumerate(outs)]
    if len(all_rows) > 1:
        avg = []
        for j, (n, *_) in enumerate(all_rows[0]):
            vals = np.array([rows[j][1:] for rows in all_rows], dtype=float)
            avg.append((n, *vals.mean(axis=0).tolist()))
        _write_summary(outdir, avg, f"averages over {len(all_rows)} replications")
    extra = None
    if failure:
        (outdir / "failure.txt").write_text(failure)
        extra = {"failed": True}
    write_manifest(outdir, cfg, seeds, extra)
    if failure:
        log.error("chain failed; partial outputs in %s\n%s", outdir, failure)
        return 3
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.simulate_T is None:
        raise ConfigError("simulate needs T, e.g. --simulate T=500")
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    truth, x, y = simulate_data(cfg)
    pio.write_observations(outdir / "data.csv", y)
    pio.write_table(outdir / "states_true.csv", [f"x{c + 1}" for c in range(x.shape[0])], x.T.tolist())
    shape = _shape_model(cfg.model, cfg.simulate_q)
    pio.write_table(outdir / "theta_true.csv", list(shape.param_names), [shape.flatten(truth).tolist()])
    write_manifest(outdir, cfg, [])
    return 0


def cmd_diagnose(args) -> int:
    header, X = pio.read_table(args.draws)
    X = X[args.burn_in:]
    rows = []
    for j, n in enumerate(header):
        col = X[:, j]
        rows.append((n, float(col.mean()), float(col.std(ddof=1)), ess(col), update_rate(col)))
    lines = [f"{'name':<12}{'mean':>14}{'sd':>14}{'ess':>10}{'update':>9}"]
    lines += [f"{n:<12}{m:>14.6g}{s:>14.6g}{e:>10.1f}{u:>9.3f}" for n, m, s, e, u in rows]
    print("\n".join(lines))
    if args.output:
        pio.write_table(args.output, ["name", "mean", "sd", "ess", "update_rate"], rows)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "diagnose":
            return cmd_diagnose(args)
        cfg = resolve_config(args)
        if args.command == "simulate":
            if cfg.simulate_T is None and cfg.data is None:
                raise ConfigError("simulate needs T, e.g. --simulate T=500")
            return cmd_simulate(cfg)
        cfg.validate()
        return cmd_run(cfg)
    except (ConfigError, pio.DataError, FileNotFoundError) as e:
        print(f"pgpeis: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
