"""Command-line interface.

Usage::

    tiltcrm exact     --preset poisson_dirichlet --alpha 0.5 --q 1 --n 50
    tiltcrm simulate  --preset normalized_generalized_gamma --alpha 0.5 --b 1 \\
                      --n 50 --samples 10000 --algorithm A2 --seed 7 --out a2.csv
    tiltcrm compare   a1.csv a2.csv [--exact exact.csv] [--figure-out fig.csv]
    tiltcrm report    --preset poisson_dirichlet --alpha 0.5 --q 1 --n 50 \\
                      --samples 2000 --algorithm A1,A2,A3,A4
    tiltcrm posterior --alpha 0.5 --theta 1 --b 1 --partition sizes.txt --u 1

Every option except the positional inputs of ``compare`` may also come from a
JSON object passed with ``--config``; keys are the long option names with
dashes replaced by underscores. Command-line flags override the file and
unknown keys are rejected.

CSV files start with ``#`` metadata lines (command, spec, seed, versions)
followed by a header row. Probabilities are written with 9 significant
digits. JSON output uses shortest round-trip float formatting.

Exit codes: 0 success, 2 validation or usage error, 3 numeric failure,
4 comparison FAIL.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Optional

import numpy as np
import scipy

from . import __version__
from .core_math import DEFAULT_QUADRATURE, QuadratureConfig
from .exact import SizeDistribution, exact_size_distribution
from .exceptions import NumericError, TiltCRMError, UsageError, ValidationError
from .harness import ALGORITHMS, RunConfig, run, run_replicates, summarize, two_sample_chi2
from .latent import sample_u
from .partition import Partition
from .posterior import posterior_description, sample_jumps
from .process import (PRESETS, GeneralizedDirichlet, GeneralizedGamma, TiltedSpec,
                      expand_preset)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_FAIL = 4

EXACT_GATE = 4.0
MCMC_GATE = 6.0
CHI2_LEVEL = 1e-3

COMMANDS = ("exact", "simulate", "compare", "report", "posterior")
SPEC_KEYS = ("alpha", "theta", "b", "c", "q", "gamma")
CONFIG_KEYS = {"preset", "family", *SPEC_KEYS, "n", "samples", "burn_in", "seed",
               "algorithm", "out", "format", "batches", "init", "workers", "rel_tol",
               "max_subdivisions", "partition", "u", "jump_samples", "exact", "figure_out",
               "allow_spec_mismatch"}
DEFAULTS = {"format": "csv", "samples": 10000, "burn_in": 0, "seed": 0, "algorithm": "A1",
            "batches": 1, "init": "singletons", "jump_samples": 0}


def _fmt(x: float) -> str:
    return f"{x:.9g}"


# --- configuration ------------------------------------------------------------

def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return data


def _merge(args: argparse.Namespace) -> dict:
    conf = dict(DEFAULTS)
    conf.update(_load_config(args.config))
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            conf[key] = value
    return conf


def build_spec(conf: dict) -> TiltedSpec:
    """Turn ``preset`` or explicit family parameters into a validated spec."""
    given = {k: conf[k] for k in SPEC_KEYS if conf.get(k) is not None}
    preset = conf.get("preset")
    if preset is not None:
        return expand_preset(preset, **given)
    family = conf.get("family")
    if family is None:
        family = "generalized_dirichlet" if "c" in given else "generalized_gamma"
    q, gamma = given.pop("q", 0.0), given.pop("gamma", 0.0)
    try:
        if family == "generalized_gamma":
            if "c" in given:
                raise ValidationError("c applies only to the generalized Dirichlet family")
            if "alpha" not in given or "theta" not in given:
                raise ValidationError("generalized gamma needs --alpha and --theta (or --preset)")
            fam = GeneralizedGamma(given["alpha"], given["theta"], given.get("b", 0.0))
        elif family == "generalized_dirichlet":
            if "alpha" in given or "b" in given:
                raise ValidationError("alpha and b do not apply to the generalized Dirichlet family")
            if "theta" not in given:
                raise ValidationError("generalized Dirichlet needs --theta")
            fam = GeneralizedDirichlet(given["theta"], given.get("c", 1))
        else:
            raise ValidationError(f"unknown family {family!r}")
    except TypeError as exc:
        raise ValidationError(str(exc)) from None
    return TiltedSpec(fam, q=q, gamma=gamma)


def _quadrature(conf: dict) -> QuadratureConfig:
    kw = {}
    if conf.get("rel_tol") is not None:
        kw["relative_tolerance"] = float(conf["rel_tol"])
    if conf.get("max_subdivisions") is not None:
        kw["max_subdivisions"] = int(conf["max_subdivisions"])
    if not kw:
        return DEFAULT_QUADRATURE
    try:
        return QuadratureConfig(**kw)
    except UsageError as exc:
        raise ValidationError(str(exc)) from None


def _require_n(conf: dict) -> int:
    n = conf.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise ValidationError("--n must be a positive integer")
    return n


def _algorithms(conf: dict) -> list:
    raw = conf["algorithm"]
    names = raw if isinstance(raw, list) else str(raw).split(",")
    names = [a.strip().upper() for a in names if a.strip()]
    bad = [a for a in names if a not in ALGORITHMS]
    if bad or not names:
        raise ValidationError(f"algorithm must be among {ALGORITHMS}, got {raw!r}")
    return names


def _run_config(conf: dict, spec: TiltedSpec, algorithm: str) -> RunConfig:
    try:
        return RunConfig(spec, _require_n(conf), int(conf["samples"]), algorithm,
                         burn_in=int(conf["burn_in"]), seed=int(conf["seed"]),
                         init=conf["init"], quadrature=_quadrature(conf))
    except UsageError as exc:
        raise ValidationError(str(exc)) from None


def _metadata(command: str, **fields) -> dict:
    meta = {"command": command, **fields,
            "versions": {"tiltcrm": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__}}
    return meta


# --- output -------------------------------------------------------------------

def _write(text: str, out: Optional[str]) -> None:
    """Write the whole output at once; nothing is written if an error occurred earlier."""
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    if os.path.exists(out) and not os.path.isfile(out):
        # devices and pipes are written in place, never replaced
        with open(out, "w", newline="") as fh:
            fh.write(text)
        return
    tmp = f"{out}.tmp{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, out)


def _csv_text(meta: dict, header: list, rows: list) -> str:
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_text(obj: dict) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def read_table(path: str) -> tuple:
    """Parse a CSV written by this tool into ``(metadata, header, rows)``."""
    meta, lines = {}, []
    try:
        with open(path) as fh:
            for line in fh:
                if line.startswith("# "):
                    key, _, value = line[2:].partition(": ")
                    meta[key] = json.loads(value)
                elif line.strip():
                    lines.append(line)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    reader = list(csv.reader(lines))
    if not reader:
        raise ValidationError(f"{path} has no header row")
    return meta, reader[0], reader[1:]


def _load_output(path: str) -> dict:
    """Load an ``exact`` or ``simulate`` output (CSV or JSON) into a flat record."""
    if path.endswith(".json"):
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read {path}: {exc}") from None
        meta = doc.get("metadata", {})
        dist = doc["size_distribution"]
        rec = {"meta": meta, "p": np.array(dist["probabilities"], dtype=float),
               "spec": dist.get("spec"), "batches": doc.get("batch_summary")}
        return rec
    meta, header, rows = read_table(path)
    cols = {name: i for i, name in enumerate(header)}
    key = "probability" if "probability" in cols else "p_hat"
    if key not in cols:
        raise ValidationError(f"{path}: no probability or p_hat column")
    p = np.array([float(r[cols[key]]) for r in rows])
    batches = None
    if "batch_min" in cols:
        batches = {name: [float(r[cols[name]]) for r in rows]
                   for name in ("batch_min", "batch_max", "batch_q025", "batch_q975")}
    return {"meta": meta, "p": p, "spec": meta.get("spec"), "batches": batches}


# --- commands -----------------------------------------------------------------

def cmd_exact(conf: dict) -> int:
    spec = build_spec(conf)
    n = _require_n(conf)
    dist = exact_size_distribution(spec, n, _quadrature(conf))
    meta = _metadata("exact", spec=spec.to_dict(), n=n)
    if conf["format"] == "json":
        _write(_json_text({"metadata": meta, "size_distribution": dist.to_dict()}), conf.get("out"))
    else:
        rows = [[i, _fmt(p)] for i, p in enumerate(dist.probabilities, start=1)]
        _write(_csv_text(meta, ["i", "probability"], rows), conf.get("out"))
    return EXIT_OK


def _simulate(conf: dict, spec: TiltedSpec, algorithm: str):
    cfg = _run_config(conf, spec, algorithm)
    batches = int(conf["batches"])
    workers = conf.get("workers")
    if batches > 1:
        results = run_replicates(cfg, batches, workers)
    else:
        results = [run(cfg, workers)]
    return cfg, results, summarize(results)


def cmd_simulate(conf: dict) -> int:
    spec = build_spec(conf)
    algs = _algorithms(conf)
    if len(algs) != 1:
        raise ValidationError("simulate takes exactly one algorithm")
    cfg, results, summ = _simulate(conf, spec, algs[0])
    meta = _metadata("simulate", spec=spec.to_dict(), n=cfg.n, algorithm=cfg.algorithm,
                     seed=cfg.seed, num_samples=summ.num_samples, batches=summ.num_batches,
                     burn_in=cfg.burn_in, init=cfg.init)
    dist = SizeDistribution(cfg.n, summ.p_hat, cfg.algorithm, spec, summ.se)
    has_batches = summ.batch_min is not None
    if conf["format"] == "json":
        doc = {"metadata": meta, "config": cfg.to_dict(), "size_distribution": dist.to_dict()}
        if has_batches:
            doc["batch_summary"] = {k: getattr(summ, k).tolist() for k in
                                    ("batch_min", "batch_max", "batch_q025", "batch_q975")}
        if cfg.algorithm == "A4" and len(results) == 1:
            doc["latent_draws"] = results[0].latent_draws.tolist()
        _write(_json_text(doc), conf.get("out"))
        return EXIT_OK
    header = ["i", "p_hat", "se"]
    cols = [summ.p_hat, summ.se]
    if has_batches:
        header += ["batch_min", "batch_max", "batch_q025", "batch_q975"]
        cols += [summ.batch_min, summ.batch_max, summ.batch_q025, summ.batch_q975]
    rows = [[i + 1] + [_fmt(c[i]) for c in cols] for i in range(cfg.n)]
    _write(_csv_text(meta, header, rows), conf.get("out"))
    return EXIT_OK


def _gate(algorithm: str) -> float:
    return EXACT_GATE if algorithm in ("A1", "A2") else MCMC_GATE


def _comparison(exact_p: np.ndarray, sims: list, figure: bool):
    """Build the comparison table; ``sims`` holds (label, algorithm, p_hat, N, batches)."""
    n = exact_p.size
    header = ["i", "probability"]
    cols = [exact_p]
    verdicts = []
    for label, alg, p_hat, total, _ in sims:
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (p_hat - exact_p) / np.sqrt(exact_p * (1.0 - exact_p) / total)
        z = np.where(p_hat == exact_p, 0.0, z)
        gate = _gate(alg)
        ok = bool(np.all(np.abs(z) <= gate))
        verdicts.append({"label": label, "algorithm": alg, "num_samples": total,
                         "gate": gate, "max_abs_z": float(np.max(np.abs(z))),
                         "argmax_i": int(np.argmax(np.abs(z))) + 1,
                         "max_abs_deviation": float(np.max(np.abs(p_hat - exact_p))),
                         "pass": ok})
        header += [f"p_hat_{label}", f"z_{label}"]
        cols += [p_hat, z]
    chi2 = []
    exact_sims = [s for s in sims if s[1] in ("A1", "A2")]
    for a in range(len(exact_sims)):
        for b in range(a + 1, len(exact_sims)):
            la, _, pa, na, _ = exact_sims[a]
            lb, _, pb, nb, _ = exact_sims[b]
            draws_a = np.repeat(np.arange(1, n + 1), np.rint(pa * na).astype(np.int64))
            draws_b = np.repeat(np.arange(1, n + 1), np.rint(pb * nb).astype(np.int64))
            stat, dof, pval = two_sample_chi2(draws_a, draws_b)
            chi2.append({"pair": [la, lb], "statistic": stat, "dof": dof, "p_value": pval,
                         "pass": pval > CHI2_LEVEL})
    rows = [[i + 1] + [_fmt(c[i]) for c in cols] for i in range(n)]
    fig = None
    if figure:
        fig_header = ["i", "probability"]
        fig_cols = [exact_p]
        for label, _, _, _, batches in sims:
            if batches is None:
                continue
            for key in ("batch_min", "batch_max", "batch_q025", "batch_q975"):
                fig_header.append(f"{key}_{label}")
                fig_cols.append(np.asarray(batches[key]))
        fig = (fig_header, [[i + 1] + [_fmt(c[i]) for c in fig_cols] for i in range(n)])
    overall = all(v["pass"] for v in verdicts) and all(c["pass"] for c in chi2)
    return header, rows, verdicts, chi2, overall, fig


def cmd_compare(conf: dict, inputs: list) -> int:
    if not inputs:
        raise UsageError("compare needs at least one simulate output")
    sims, spec_dict, n = [], None, None
    for idx, path in enumerate(inputs):
        rec = _load_output(path)
        meta = rec["meta"]
        if meta.get("command") != "simulate":
            raise UsageError(f"{path} is not a simulate output")
        if spec_dict is None:
            spec_dict, n = rec["spec"], rec["p"].size
        elif rec["spec"] != spec_dict or rec["p"].size != n:
            raise UsageError(f"{path}: spec or n differs from {inputs[0]}")
        label = meta["algorithm"]
        if any(s[0] == label for s in sims):
            label = f"{label}_{idx + 1}"
        sims.append((label, meta["algorithm"], rec["p"], int(meta["num_samples"]),
                     rec["batches"]))
    if conf.get("exact"):
        ex = _load_output(conf["exact"])
        if ex["meta"].get("command") != "exact":
            raise UsageError(f"{conf['exact']} is not an exact output")
        if ex["p"].size != n:
            raise UsageError("exact output has a different n from the simulate outputs")
        if ex["spec"] != spec_dict and not conf.get("allow_spec_mismatch"):
            raise UsageError("exact output and simulate outputs have different specs "
                             "(pass --allow-spec-mismatch for a negative control)")
        exact_p = ex["p"]
    else:
        exact_p = exact_size_distribution(TiltedSpec.from_dict(spec_dict), n,
                                          _quadrature(conf)).probabilities
    header, rows, verdicts, chi2, overall, fig = _comparison(
        exact_p, sims, conf.get("figure_out") is not None)
    meta = _metadata("compare", spec=spec_dict, n=n, inputs=list(inputs))
    verdict = "PASS" if overall else "FAIL"
    if conf["format"] == "json":
        doc = {"metadata": meta, "verdict": verdict, "algorithms": verdicts,
               "chi_square": chi2, "table": {"header": header, "rows": rows}}
        _write(_json_text(doc), conf.get("out"))
    else:
        summary = {"verdict": verdict, "algorithms": verdicts, "chi_square": chi2}
        _write(_csv_text({**meta, **summary}, header, rows), conf.get("out"))
    if fig is not None:
        _write(_csv_text(_metadata("figure", spec=spec_dict, n=n), *fig), conf["figure_out"])
    for v in verdicts:
        print(f"{v['label']}: max|z| = {v['max_abs_z']:.3f} at i={v['argmax_i']} "
              f"(gate {v['gate']:g}) -> {'PASS' if v['pass'] else 'FAIL'}", file=sys.stderr)
    for c in chi2:
        print(f"chi-square {c['pair'][0]} vs {c['pair'][1]}: p = {c['p_value']:.4g} -> "
              f"{'PASS' if c['pass'] else 'FAIL'}", file=sys.stderr)
    print(f"overall: {verdict}", file=sys.stderr)
    return EXIT_OK if overall else EXIT_FAIL


def cmd_report(conf: dict) -> int:
    """Exact probabilities next to simulated means and SEs, rounded to 6 decimals."""
    spec = build_spec(conf)
    n = _require_n(conf)
    exact_p = exact_size_distribution(spec, n, _quadrature(conf)).probabilities
    sims = []
    header = ["i", "probability"]
    cols = [exact_p]
    for alg in _algorithms(conf):
        cfg, _, summ = _simulate(conf, spec, alg)
        sims.append((alg, alg, summ.p_hat, summ.num_samples, None))
        header += [f"mean_{alg}", f"se_{alg}"]
        cols += [summ.p_hat, summ.se]
    _, _, verdicts, chi2, overall, _ = _comparison(exact_p, sims, False)
    rows = [[i + 1] + [f"{c[i]:.6f}" for c in cols] for i in range(n)]
    verdict = "PASS" if overall else "FAIL"
    meta = _metadata("report", spec=spec.to_dict(), n=n, seed=int(conf["seed"]),
                     num_samples=int(conf["samples"]), burn_in=int(conf["burn_in"]))
    if conf["format"] == "json":
        doc = {"metadata": meta, "verdict": verdict, "algorithms": verdicts,
               "chi_square": chi2, "table": {"header": header, "rows": rows}}
        _write(_json_text(doc), conf.get("out"))
    else:
        _write(_csv_text({**meta, "verdict": verdict, "algorithms": verdicts,
                          "chi_square": chi2}, header, rows), conf.get("out"))
    return EXIT_OK if overall else EXIT_FAIL


def read_partition(path: str) -> Partition:
    """Read one line of comma-separated block sizes; blank and ``#`` lines are skipped."""
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ValidationError(f"cannot read partition file {path}: {exc}") from None
    found = None
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if found is not None:
            raise ValidationError(f"{path}:{lineno}: expected a single line of block sizes")
        try:
            sizes = [int(tok) for tok in text.split(",")]
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: block sizes must be integers, "
                                  f"got {text!r}") from None
        if any(s < 1 for s in sizes):
            raise ValidationError(f"{path}:{lineno}: block sizes must be positive")
        found = sizes
    if found is None:
        raise ValidationError(f"{path}:1: no block sizes found")
    return Partition.from_sizes(found)


def cmd_posterior(conf: dict) -> int:
    if conf.get("format", "json") != "json":
        raise ValidationError("posterior output is JSON only")
    spec = build_spec(conf)
    if not conf.get("partition"):
        raise ValidationError("posterior needs --partition FILE")
    p = read_partition(conf["partition"])
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(conf["seed"]))))
    u = conf.get("u")
    drawn = u is None
    if drawn:
        u = sample_u(spec, p, rng, cfg=_quadrature(conf)).value
    elif not (float(u) > 0 and math.isfinite(float(u))):
        raise ValidationError("--u must be positive and finite")
    desc = posterior_description(spec, p, float(u))
    doc = {"metadata": _metadata("posterior", seed=int(conf["seed"]), u_drawn=drawn),
           "posterior": desc.to_dict()}
    m = int(conf["jump_samples"])
    if m > 0:
        doc["jump_draws"] = sample_jumps(spec, p, float(u), rng, size=m).tolist()
    _write(_json_text(doc), conf.get("out"))
    return EXIT_OK


# --- entry point --------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tiltcrm",
                                     description="Normalized tilted CRMs: exact and simulated "
                                                 "block-count distributions.")
    parser.add_argument("--version", action="version", version=f"tiltcrm {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file with option values")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--family", choices=["generalized_gamma", "generalized_dirichlet"])
        for key in ("alpha", "theta", "b", "q", "gamma"):
            p.add_argument(f"--{key}", type=float)
        p.add_argument("--c", type=int)
        p.add_argument("--n", type=int)
        p.add_argument("--samples", type=int, help="datasets (A1/A2) or kept sweeps (A3/A4)")
        p.add_argument("--burn-in", dest="burn_in", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--algorithm", help="A1, A2, A3 or A4 (report: comma list)")
        p.add_argument("--batches", type=int, help="independent replicate batches")
        p.add_argument("--init", choices=["singletons", "one_block"])
        p.add_argument("--workers", type=int, help="worker processes (default $TILTCRM_THREADS)")
        p.add_argument("--rel-tol", dest="rel_tol", type=float)
        p.add_argument("--max-subdivisions", dest="max_subdivisions", type=int)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--format", choices=["csv", "json"])
        if name == "compare":
            p.add_argument("inputs", nargs="*", help="simulate outputs")
            p.add_argument("--exact", help="exact output (computed from the process options if omitted)")
            p.add_argument("--figure-out", dest="figure_out",
                           help="write per-i batch range and quantiles here")
            p.add_argument("--allow-spec-mismatch", dest="allow_spec_mismatch",
                           action="store_const", const=True,
                           help="compare against an exact output for a different spec")
        if name == "posterior":
            p.add_argument("--partition", help="file with one line of comma-separated sizes")
            p.add_argument("--u", type=float, help="latent value (drawn when omitted)")
            p.add_argument("--jump-samples", dest="jump_samples", type=int)
    return parser


def main(argv: Optional[list] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        conf = _merge(args)
        if args.command == "posterior" and args.format is None \
                and "format" not in _load_config(args.config):
            conf["format"] = "json"
        handlers = {"exact": cmd_exact, "simulate": cmd_simulate, "report": cmd_report,
                    "posterior": cmd_posterior}
        if args.command == "compare":
            return cmd_compare(conf, list(args.inputs))
        return handlers[args.command](conf)
    except NumericError as exc:
        print(f"tiltcrm: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (TiltCRMError, ValueError) as exc:
        print(f"tiltcrm: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
