"""Command line experiment runner.

Every subcommand reads an optional JSON config (``{"schema_version": 1,
"model": ..., "parameters": {...}, "tolerances": {...}}``), writes a tidy CSV
table and a JSON verdict into ``--out`` and exits with

    0 pass, 2 tolerance failure, 3 gate rejection, 4 capacity, 5 numerical.

Invalid arguments or configs exit with 1.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import experiments as ex
from .errors import CapacityError, GateError, NumericalError, ParameterError
from .heavy_tail import TailLaw, truncated_moment_ratio
from .levy_noise import DomainBox, characteristic_functional, mass_samples, refine_cloud, sample_cloud, \
    pair_with_test_function
from .pinning import check_gate, homogeneous_Z, make_kernel, mittag_leffler
from .polymer import StableWalk, check_polymer_gate, llt_check
from .stats import THRESHOLDS, empirical_cf, mean_se, non_increasing_within

SCHEMA_VERSION = 1
EXIT_PASS, EXIT_INVALID, EXIT_TOLERANCE, EXIT_GATE, EXIT_CAPACITY, EXIT_NUMERICAL = 0, 1, 2, 3, 4, 5
MODELS = ("pinning", "polymer", "noise", "chaos")

DEFAULTS = {
    "noise-check": {"model": "noise", "gamma": 1.3, "c_plus": 1.0, "a": 1e-3, "clouds": 20000,
                    "theta": [-2.0, 2.0, 21], "refine_levels": [0.1, 0.05], "refine_clouds": 2000},
    "chaos-martingale": {"model": "chaos", "alpha": 0.7, "gamma": 1.5, "h_hat": 0.0, "beta_hat": 0.1,
                         "max_order": 6, "a": [0.5, 0.2, 0.1, 0.05], "replicas": 2000},
    "pinning-converge": {"model": "pinning", "alpha": 0.7, "gamma": 1.5, "h_hat": 0.5, "beta_hat": 0.5,
                         "N": [256, 512, 1024, 2048, 4096], "a": 0.05, "replicas": 1000, "proxy": 1000,
                         "p": 1.2},
    "polymer-converge": {"model": "polymer", "alpha": 1.5, "gamma": 1.4, "beta_hat": 0.5, "A": 4.0,
                         "N": [128, 256, 512], "a": 0.05, "replicas": 500, "proxy": 500, "p": 1.2,
                         "truncation_N": 256, "truncation_A": [2.0, 4.0, 8.0], "truncation_replicas": 250},
    "relevance-scan": {"model": "pinning", "alpha": 0.7, "gamma": 1.5, "h_hat": 0.5,
                       "N": [1024, 2048, 4096, 8192], "replicas": 500, "weak_exponent": 0.25,
                       "strong_beta": 0.5, "polymer_alpha": 1.5, "polymer_gamma": 1.4, "polymer_A": 4.0,
                       "polymer_N": [256, 512, 1024], "polymer_replicas": 250},
    "moment-bounds": {"model": "chaos", "alpha": 0.7, "gamma": 1.5, "p": 1.2, "q": 1.8,
                      "N": [256, 512, 1024], "replicas": 5000, "max_order": 6, "v": 1e-4,
                      "moment_samples": 10 ** 7},
    "llt-check": {"model": "polymer", "alpha": 1.5, "N": [256, 512, 1024, 2048]},
    "oracle-suite": {"model": "chaos", "pinning_configs": 20, "polymer_configs": 10},
}


@dataclass
class ExperimentConfig:
    """Validated experiment configuration; gates are checked on construction."""

    command: str
    parameters: dict
    out: str
    seed: int = 0
    threads: int = 1
    force: bool = False
    tolerances: dict = field(default_factory=dict)

    def __post_init__(self):
        model = self.parameters.get("model")
        if model not in MODELS:
            raise ParameterError(f"model must be one of {MODELS}, got {model!r}")
        unknown = set(self.tolerances) - set(THRESHOLDS)
        if unknown:
            raise ParameterError(f"unknown tolerance keys {sorted(unknown)}")
        self.check_gates()

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, THRESHOLDS[key]))

    def check_gates(self):
        # --force lifts the gate only for the relevance scan
        force = self.force and self.command == "relevance-scan"
        p = self.parameters
        try:
            if p["model"] == "pinning" and "alpha" in p and "gamma" in p:
                check_gate(p["alpha"], p["gamma"], force)
            if p["model"] == "polymer" and "alpha" in p and "gamma" in p:
                check_polymer_gate(p["alpha"], p["gamma"], int(p.get("d", 1)), force)
            if self.command == "relevance-scan":
                check_polymer_gate(p["polymer_alpha"], p["polymer_gamma"], 1, force)
        except GateError as e:
            if self.force:
                raise GateError(f"{e}; --force only enables the relevance-scan subcommand") from None
            raise

    def key(self) -> str:
        blob = json.dumps({"c": self.command, "p": self.parameters, "s": self.seed}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def checkpoint(self) -> ex.Checkpoint:
        return ex.Checkpoint(os.path.join(self.out, "checkpoints", f"{self.command}-{self.key()}"))


def load_config(command: str, path: str | None) -> tuple:
    params = dict(DEFAULTS[command])
    tolerances = {}
    if path:
        with open(path) as fh:
            cfg = json.load(fh)
        if cfg.get("schema_version") != SCHEMA_VERSION:
            raise ParameterError(f"config schema_version must be {SCHEMA_VERSION}")
        unknown = set(cfg.get("parameters", {})) - set(params)
        if unknown:
            raise ParameterError(f"unknown parameters for {command}: {sorted(unknown)}")
        params.update(cfg.get("parameters", {}))
        if "model" in cfg:
            params["model"] = cfg["model"]
        tolerances = dict(cfg.get("tolerances", {}))
    return params, tolerances


# -- output ------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: str, columns: list, rows: list) -> None:
    """RFC-4180 CSV with one timestamp comment line; reals with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# generated {datetime.datetime.now(datetime.timezone.utc).isoformat()}\r\n")
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def write_verdict(cfg: ExperimentConfig, passed: bool, details: dict) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": cfg.command, "seed": cfg.seed,
           "parameters": cfg.parameters, "passed": bool(passed), "details": details}
    with open(os.path.join(cfg.out, f"{cfg.command}.json"), "w") as fh:
        fh.write(ex.to_json(doc))


# -- subcommands -------------------------------------------------------------------------

def run_noise_check(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    g, cp, a = p["gamma"], p["c_plus"], p["a"]
    lo, hi, n = p["theta"]
    theta = np.linspace(lo, hi, int(n))
    dom = DomainBox.unit(1)
    m = mass_samples(1.0, g, (cp,), a, int(p["clouds"]), cfg.seed)[0]
    emp = empirical_cf(m, theta)
    lim = characteristic_functional(1.0, theta, dom, g, cp, 1.0 - cp, 0.0)
    tr = characteristic_functional(1.0, theta, dom, g, cp, 1.0 - cp, a)
    rows = [{"theta": t, "empirical_re": e.real, "empirical_im": e.imag, "limit_re": l.real,
             "limit_im": l.imag, "truncated_re": r.real, "truncated_im": r.imag}
            for t, e, l, r in zip(theta, emp, lim, tr)]
    write_csv(os.path.join(cfg.out, "noise-check.csv"), list(rows[0]), rows)
    # refinement martingale: increments between coupled levels have mean zero
    levels = p["refine_levels"]
    one = lambda x: np.ones(len(x))  # noqa: E731
    inc = []
    for r in range(int(p["refine_clouds"])):
        c0 = sample_cloud(dom, g, cp, 1.0 - cp, levels[0], seed=cfg.seed, key=(r,))
        c1 = refine_cloud(c0, levels[1], seed=cfg.seed, key=(r,))
        inc.append(pair_with_test_function(c1, one, 1.0) - pair_with_test_function(c0, one, 1.0))
    mi, se = mean_se(inc)
    sup = float(np.max(np.abs(emp - lim)))
    mart = abs(mi) <= cfg.tol("martingale_se") * se
    details = {"sup_vs_limit": sup, "sup_vs_truncated": float(np.max(np.abs(emp - tr))),
               "truncation_bias": float(np.max(np.abs(tr - lim))), "mean_pairing": float(m.mean()),
               "refinement_increment_mean": mi, "refinement_increment_se": se, "martingale_ok": mart}
    passed = sup <= cfg.tol("cf_sup") and mart
    write_verdict(cfg, passed, details)
    return passed


def run_chaos_martingale(cfg: ExperimentConfig) -> bool:
    from .pinning import continuum_pinning_chaos
    from .stats import pnorm
    p = cfg.parameters
    levels = list(p["a"])
    dom = DomainBox.unit(1)
    n = int(p["replicas"])

    def one(r):
        cl = sample_cloud(dom, p["gamma"], 1.0, 0.0, levels[0], seed=cfg.seed, key=(r,))
        out = []
        for j, a in enumerate(levels):
            if j:
                cl = refine_cloud(cl, a, seed=cfg.seed, key=(r, j))
            out.append(continuum_pinning_chaos(p["alpha"], p["h_hat"], p["beta_hat"], cl,
                                               int(p["max_order"])).total)
        return out

    ck = cfg.checkpoint()
    chunks = range(0, n, 500)
    phi = np.vstack(ex.map_ordered(lambda s: ck.get(f"chunk{s}", lambda: np.array(
        [one(r) for r in range(s, min(n, s + 500))])), chunks, cfg.threads))
    rows, ok = [], True
    for j, a in enumerate(levels):
        row = {"a": a, "pnorm": pnorm(phi[:, j], 1.2), "mean": float(phi[:, j].mean()),
               "increment_mean": 0.0, "increment_se": 0.0, "cov": 0.0, "cov_se": 0.0}
        if j:
            inc = phi[:, j] - phi[:, j - 1]
            row["increment_mean"], row["increment_se"] = mean_se(inc)
            row["cov"], row["cov_se"] = mean_se((inc - inc.mean()) * (phi[:, j - 1] - phi[:, j - 1].mean()))
            k = cfg.tol("martingale_se")
            ok &= abs(row["increment_mean"]) <= k * row["increment_se"] and abs(row["cov"]) <= k * row["cov_se"]
        rows.append(row)
    write_csv(os.path.join(cfg.out, "chaos-martingale.csv"), list(rows[0]), rows)
    norms = [r["pnorm"] for r in rows]
    spread = max(norms) / min(norms)
    passed = bool(ok and spread < cfg.tol("norm_spread"))
    write_verdict(cfg, passed, {"pnorm_spread": spread})
    return passed


def _ladder_rows(res, p):
    return [{"N": r["N"], "KS": r["KS"], "mean": r["mean"], "median": r["median"],
             f"pnorm_{p}": r["pnorm"], "pnorm_lo": r["pnorm_lo"], "pnorm_hi": r["pnorm_hi"]} for r in res["rows"]]


def run_pinning_converge(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    Ns = [int(n) for n in p["N"]]
    res = ex.pinning_ladder(p["alpha"], p["gamma"], p["h_hat"], p["beta_hat"], Ns, int(p["replicas"]),
                            int(p["proxy"]), p["a"], p["p"], cfg.seed, cfg.threads, cfg.checkpoint())
    rows = _ladder_rows(res, p["p"])
    write_csv(os.path.join(cfg.out, "pinning-converge.csv"), list(rows[0]), rows)
    # homogeneous Mittag-Leffler limits along the same ladder
    k = make_kernel(p["alpha"], max(Ns))
    E = float(mittag_leffler(p["alpha"], p["h_hat"]))
    hom = [{"N": N, "Z_free": homogeneous_Z(k, p["h_hat"] / (N * k.u[N]), N)[0], "limit": E} for N in Ns]
    write_csv(os.path.join(cfg.out, "pinning-homogeneous.csv"), ["N", "Z_free", "limit"], hom)
    ks = [r["KS"] for r in res["rows"]]
    prel = abs(res["rows"][-1]["pnorm"] / res["proxy_pnorm"] - 1.0)
    details = {k_: v for k_, v in res.items() if k_ != "rows"}
    details.update({"monotone": non_increasing_within(ks, cfg.tol("ks_band")), "pnorm_rel": prel})
    passed = details["monotone"] and ks[-1] <= cfg.tol("ks_pinning_final") and prel <= cfg.tol("pnorm_rel")
    write_verdict(cfg, passed, details)
    return bool(passed)


def run_polymer_converge(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    Ns = [int(n) for n in p["N"]]
    res = ex.polymer_ladder(p["alpha"], p["gamma"], p["beta_hat"], p["A"], Ns, int(p["replicas"]),
                            int(p["proxy"]), p["a"], p["p"], cfg.seed, cfg.threads, cfg.checkpoint())
    rows = _ladder_rows(res, p["p"])
    write_csv(os.path.join(cfg.out, "polymer-converge.csv"), list(rows[0]), rows)
    llt = llt_check(StableWalk(p["alpha"]))
    write_csv(os.path.join(cfg.out, "polymer-llt.csv"), ["n", "sup_error"],
              [{"n": n, "sup_error": e} for n, e in zip(llt.ns, llt.errors)])
    tb = ex.truncation_bound(p["alpha"], p["gamma"], p["beta_hat"], int(p["truncation_N"]),
                             tuple(p["truncation_A"]), int(p["truncation_replicas"]), seed=cfg.seed)
    trows = [{"A": float(A), **{k: v for k, v in tb[str(float(A))].items()}} for A in p["truncation_A"]]
    write_csv(os.path.join(cfg.out, "polymer-truncation.csv"), list(trows[0]), trows)
    ks = [r["KS"] for r in res["rows"]]
    mono = non_increasing_within(ks, cfg.tol("ks_band"))
    passed = mono and ks[-1] <= cfg.tol("ks_polymer_final") and all(r["ok"] for r in trows)
    write_verdict(cfg, passed, {"monotone": mono, "proxy_pnorm": res["proxy_pnorm"],
                                "llt": llt.to_dict(), "truncation": tb})
    return bool(passed)


def run_relevance_scan(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    rows = []
    for N in p["N"]:
        r = ex.pinning_relevance(p["alpha"], p["gamma"], p["h_hat"], int(N), int(p["replicas"]),
                                 p["weak_exponent"], p["strong_beta"], cfg.seed)
        com = r["strong"]["change_of_measure"]
        rows.append({"model": "pinning", "N": int(N), "weak_beta_hat": r["weak"]["beta_hat"],
                     "weak_mean": r["weak"]["mean"], "weak_median": r["weak"]["median"],
                     "strong_beta_hat": r["strong"]["beta_hat"], "strong_median": r["strong"]["median"],
                     "P_A": com["P_A"], "P_A_exact": com["P_A_exact"]})
    for N in p["polymer_N"]:
        r = ex.polymer_relevance(p["polymer_alpha"], p["polymer_gamma"], p["polymer_A"], int(N),
                                 int(p["polymer_replicas"]), p["weak_exponent"], p["strong_beta"], cfg.seed)
        rows.append({"model": "polymer", "N": int(N), "weak_beta_hat": r["weak"]["beta_hat"],
                     "weak_mean": r["weak"]["mean"], "weak_median": r["weak"]["median"],
                     "strong_beta_hat": r["strong"]["beta_hat"], "strong_median": r["strong"]["median"],
                     "P_A": float("nan"), "P_A_exact": float("nan")})
    write_csv(os.path.join(cfg.out, "relevance-scan.csv"), list(rows[0]), rows)
    last = {m: [r for r in rows if r["model"] == m][-1] for m in ("pinning", "polymer")}
    passed = (cfg.tol("weak_mean_lo") <= last["pinning"]["weak_mean"] <= cfg.tol("weak_mean_hi")
              and last["pinning"]["strong_median"] <= cfg.tol("strong_median")
              and last["polymer"]["strong_median"] <= cfg.tol("strong_median"))
    write_verdict(cfg, passed, {"final": last})
    return bool(passed)


def run_moment_bounds(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    Ns = [int(n) for n in p["N"]]
    res = ex.moment_bound_shape(p["alpha"], p["gamma"], p["p"], p["q"], 0.0, tuple(Ns), int(p["replicas"]),
                                int(p["max_order"]), cfg.seed)
    rows = []
    for N in Ns:
        d = res[str(N)]
        for k, r, pn, qn in zip(d["orders"], d["ratios"], d["pnorms"], d["qnorms"]):
            rows.append({"N": N, "k": int(k), "pnorm": pn, "qnorm": qn, "ratio": r})
    write_csv(os.path.join(cfg.out, "moment-bounds.csv"), list(rows[0]), rows)
    law = TailLaw(p["gamma"])
    big = truncated_moment_ratio(law, p["p"], 1.0, p["v"], int(p["moment_samples"]), cfg.seed)
    small = truncated_moment_ratio(law, p["q"], 1.0, p["v"], int(p["moment_samples"]), cfg.seed + 1)
    shape_ok = all(r >= cfg.tol("moment_r2") for r in res["r2"]) and \
        max(res["resolution_spread"]) <= cfg.tol("moment_resolution_spread")
    tol = cfg.tol("truncated_moment_rel")
    passed = shape_ok and abs(big - 1) <= tol and abs(small - 1) <= tol
    write_verdict(cfg, passed, {"r2": res["r2"], "resolution_spread": res["resolution_spread"],
                                "big_jump_ratio": big, "small_jump_ratio": small})
    return bool(passed)


def run_llt_check(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    rep = llt_check(StableWalk(p["alpha"]), tuple(int(n) for n in p["N"]))
    write_csv(os.path.join(cfg.out, "llt-check.csv"), ["n", "sup_error"],
              [{"n": n, "sup_error": e} for n, e in zip(rep.ns, rep.errors)])
    passed = rep.errors[-1] <= cfg.tol("llt_sup") and rep.monotone
    write_verdict(cfg, passed, rep.to_dict())
    return bool(passed)


def run_oracle_suite(cfg: ExperimentConfig) -> bool:
    p = cfg.parameters
    tol, etol = cfg.tol("chaos_identity_rel"), cfg.tol("dp_enumeration_rel")
    pin = ex.pinning_chaos_identity(int(p["pinning_configs"]), 12, cfg.seed)
    pol = ex.polymer_chaos_identity(int(p["polymer_configs"]), 8, 8, 2, cfg.seed)
    coarse = ex.continuum_exact_vs_mesh(mesh=256)
    fine = ex.continuum_exact_vs_mesh(mesh=1024)
    rows = [{"oracle": "pinning chaos vs DP", "value": pin["max_rel"], "tolerance": tol,
             "ok": pin["max_rel"] <= tol},
            {"oracle": "polymer chaos vs DP", "value": pol["max_rel_chaos"], "tolerance": tol,
             "ok": pol["max_rel_chaos"] <= tol},
            {"oracle": "polymer DP vs enumeration", "value": pol["max_rel_enumeration"], "tolerance": etol,
             "ok": pol["max_rel_enumeration"] <= etol},
            {"oracle": "continuum exact vs mesh 256", "value": coarse["max_abs"], "tolerance": float("nan"),
             "ok": True},
            {"oracle": "continuum exact vs mesh 1024", "value": fine["max_abs"], "tolerance": coarse["max_abs"],
             "ok": fine["max_abs"] < coarse["max_abs"]}]
    write_csv(os.path.join(cfg.out, "oracle-suite.csv"), list(rows[0]), rows)
    passed = all(r["ok"] for r in rows)
    write_verdict(cfg, passed, {"pinning": pin, "polymer": pol, "mesh_256": coarse, "mesh_1024": fine})
    return bool(passed)


def run_acceptance(args) -> int:
    numbers = args.criteria or list(range(1, 15))
    os.makedirs(args.out, exist_ok=True)
    results = []
    for i in numbers:
        r = ex.CRITERIA[i](scale=args.scale, seed=args.seed)
        print(r.line(), flush=True)
        results.append(r.to_dict())
        with open(os.path.join(args.out, "acceptance.json"), "w") as fh:
            fh.write(ex.to_json(results))
    return EXIT_PASS if all(r["passed"] for r in results) else EXIT_TOLERANCE


COMMANDS = {
    "noise-check": run_noise_check,
    "chaos-martingale": run_chaos_martingale,
    "pinning-converge": run_pinning_converge,
    "polymer-converge": run_polymer_converge,
    "relevance-scan": run_relevance_scan,
    "moment-bounds": run_moment_bounds,
    "llt-check": run_llt_check,
    "oracle-suite": run_oracle_suite,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="levychaos", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=0, help="master seed (unsigned 64-bit)")
    common.add_argument("--threads", type=int, default=None,
                        help="replica-level threads (default: LEVYCHAOS_THREADS or 1)")
    common.add_argument("--out", default="levychaos-out", help="output directory")
    common.add_argument("--force", action="store_true",
                        help="allow gate-violating parameters (relevance-scan only)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run {name}")
    acc = sub.add_parser("acceptance", parents=[common], help="run acceptance criteria")
    acc.add_argument("--criteria", type=int, nargs="*", choices=range(1, 15))
    acc.add_argument("--scale", type=float, default=1.0, help="fraction of the stated replica budgets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 1 << 64:
            raise ParameterError("seed must be an unsigned 64-bit integer")
        if args.command == "acceptance":
            return run_acceptance(args)
        params, tolerances = load_config(args.command, args.config)
        os.makedirs(args.out, exist_ok=True)
        cfg = ExperimentConfig(args.command, params, args.out, args.seed, ex.thread_count(args.threads),
                               args.force, tolerances)
        passed = COMMANDS[args.command](cfg)
        print(f"{args.command}: {'PASS' if passed else 'FAIL'} ({args.out})")
        return EXIT_PASS if passed else EXIT_TOLERANCE
    except GateError as e:
        print(f"gate rejection: {e}", file=sys.stderr)
        return EXIT_GATE
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParameterError, OSError, json.JSONDecodeError) as e:
        print(f"invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
