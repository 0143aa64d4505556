"""Command-line experiment runner.

Subcommands
-----------
design   random instance + graph, weight design, ``eps`` report
table1   batch design statistics (mean/std of ``eps`` and the lower-bound gap)
run      one algorithm on an instance, trace CSV plus summary
oracle   exact optimizer and multipliers of an instance

Every subcommand accepts ``--seed``, ``--out DIR`` and ``--config FILE``.
The config is a JSON object whose keys are option names (dashes or
underscores); explicit flags override it and unknown keys are rejected.

Exit codes: 0 success, 1 algorithm failure, 2 usage or validation error.
"""

import argparse
import concurrent.futures
import csv
import io
import json
import logging
import os
import sys
import time

import numpy as np

from . import dana_c, dana_d, reference
from .agents import run_message_passing
from .exceptions import DanaError, InvalidInput
from .graph import GraphTopology, load_laplacian, random_connected, save_laplacian
from .problem import (FAMILIES, THREE_NODE_DUAL0, load_problem, random_instance, save_problem,
                      three_node_instance)
from .weight_design import BACKENDS, design, unweighted_design

log = logging.getLogger("dana.cli")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
ALGOS = ("dana-d", "dana-d-agents", "dana-c", "dana-c-robust", "dgd")
BUILTIN_INSTANCES = ("three-node",)

# Option defaults live here (not in argparse) so that config values can be
# told apart from flags the user actually typed.
DEFAULTS = {
    "design": dict(seed=0, out=None, n=None, m=None, cost="tight", global_bounds=False,
                   lower_bound=False, backend="cvxpy", hops=1),
    "table1": dict(seed=0, out=None, rows=None, trials=20, backend="cvxpy", hops=1,
                   workers=1),
    "run": dict(seed=0, out=None, algo="dana-d", instance=None, laplacian=None, n=None,
                m=None, cost="sinusoid", q=[0], alpha="theorem1", max_iters=100_000,
                tol=1e-10, h=1e-3, T=None, record_every=1, approx_quadratic=False,
                perturb=[], init_noise=0.0, gains=None, unweighted=False, timing=False),
    "oracle": dict(seed=0, out=None, instance=None, n=None, m=None, cost="box"),
}


class UsageError(Exception):
    """Bad command line or config; mapped to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _row(text):
    try:
        n, m, cost = text.split(":")
        return int(n), int(m), cost
    except ValueError:
        raise argparse.ArgumentTypeError(f"row must look like N:M:COST, got {text!r}")


def _event(text):
    try:
        t, amp = text.split(":")
        return float(t), float(amp)
    except ValueError:
        raise argparse.ArgumentTypeError(f"perturbation must look like T:AMP, got {text!r}")


def _alpha(text):
    if text in dana_d.STEP_POLICIES:
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"alpha must be a number or one of {dana_d.STEP_POLICIES}")


def build_parser():
    parser = _Parser(prog="dana", description="Distributed approximate Newton experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p):
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--config", metavar="FILE")

    def generator(p, costs_help):
        p.add_argument("--n", type=int, help="number of agents")
        p.add_argument("--m", type=int, help="number of edges")
        p.add_argument("--cost", choices=sorted(FAMILIES), help=costs_help)

    p = sub.add_parser("design", help="design weights for a random instance")
    common(p)
    generator(p, "instance family (default tight)")
    p.add_argument("--global-bounds", action="store_true", default=None,
                   help="also design with network-wide Hessian bounds")
    p.add_argument("--lower-bound", action="store_true", default=None,
                   help="also compute the sparsity lower bound eps_A")
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--hops", type=int)

    p = sub.add_parser("table1", help="batch design statistics")
    common(p)
    p.add_argument("--rows", type=_row, nargs="+", metavar="N:M:COST")
    p.add_argument("--trials", type=int)
    p.add_argument("--backend", choices=BACKENDS)
    p.add_argument("--hops", type=int)
    p.add_argument("--workers", type=int, help="process pool size (1 = serial)")

    p = sub.add_parser("run", help="run one algorithm and write its trace")
    common(p)
    p.add_argument("--algo", choices=ALGOS)
    p.add_argument("--instance", help=f"instance JSON or one of {BUILTIN_INSTANCES}")
    p.add_argument("--laplacian", help="Laplacian JSON (default: design one)")
    generator(p, "family used when no instance file is given (default sinusoid)")
    p.add_argument("--q", type=int, nargs="+", help="truncation orders, one run each")
    p.add_argument("--alpha", type=_alpha, help="step size or policy")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--h", type=float, help="Euler step (continuous time)")
    p.add_argument("--T", type=float, help="horizon (continuous time)")
    p.add_argument("--record-every", type=int)
    p.add_argument("--approx-quadratic", action="store_true", default=None)
    p.add_argument("--perturb", type=_event, nargs="*", metavar="T:AMP")
    p.add_argument("--init-noise", type=float,
                   help="robust flow: uniform noise added to the initial x")
    p.add_argument("--gains", type=json.loads,
                   help='robust flow gains as JSON, e.g. \'{"rho": 30}\'')
    p.add_argument("--unweighted", action="store_true", default=None,
                   help="use the post-scaled unweighted Laplacian instead of designing")
    p.add_argument("--timing", action="store_true", default=None,
                   help="keep the wall-clock column in traces")

    p = sub.add_parser("oracle", help="exact optimizer of an instance")
    common(p)
    p.add_argument("--instance", help=f"instance JSON or one of {BUILTIN_INSTANCES}")
    generator(p, "family used when no instance file is given (default box)")
    return parser


def _coerce(key, value):
    """Convert config values to the types the flags would produce."""
    if key == "rows":
        return [tuple(r) if not isinstance(r, str) else _row(r) for r in value]
    if key == "perturb":
        return [tuple(e) if not isinstance(e, str) else _event(e) for e in value]
    if key == "q" and not isinstance(value, list):
        return [value]
    if key == "alpha" and isinstance(value, str):
        return _alpha(value)
    return value


def resolve_config(args):
    """Merge defaults < config file < flags into a plain dict."""
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        if not isinstance(data, dict):
            raise UsageError("config must be a JSON object")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        data.pop("command", None)
        unknown = sorted(set(data) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {cmd}: {unknown}")
        try:
            cfg.update({k: _coerce(k, v) for k, v in data.items()})
        except (argparse.ArgumentTypeError, TypeError) as exc:
            raise UsageError(str(exc))
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise UsageError("missing required option(s): "
                         + ", ".join("--" + k.replace("_", "-") for k in missing))


def _outdir(cfg):
    out = cfg["out"]
    if out:
        os.makedirs(out, exist_ok=True)
    return out


def _write(out, name, text):
    if out:
        with open(os.path.join(out, name), "w") as fh:
            fh.write(text)


def _generate(cfg):
    _require(cfg, "n", "m")
    g = random_connected(cfg["n"], cfg["m"], seed=cfg["seed"])
    p = random_instance(cfg["n"], cfg["cost"], seed=cfg["seed"])
    return g, p


def _load_instance(cfg):
    """Return ``(problem, graph or None)`` from a file, a builtin or the generator."""
    name = cfg.get("instance")
    if name == "three-node":
        return three_node_instance(), GraphTopology.path(3)
    if name:
        try:
            return load_problem(name), None
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"cannot read instance {name}: {exc}")
    return _generate(cfg)[::-1]


# ---------------------------------------------------------------- design


def cmd_design(cfg):
    g, p = _generate(cfg)
    out = _outdir(cfg)
    res = design(g, p.delta, p.Delta, backend=cfg["backend"],
                 lower_bound=cfg["lower_bound"], hops=cfg["hops"])
    report = res.to_dict()
    if cfg["global_bounds"]:
        glob = design(g, p.delta, p.Delta, mode="global", backend=cfg["backend"])
        report["epsilon_global"] = glob.epsilon
        if glob.epsilon < res.epsilon:
            log.warning("global-bound design has smaller eps (%.4f) than local (%.4f)",
                        glob.epsilon, res.epsilon)
    text = json.dumps(report, indent=2)
    _write(out, "design.json", text)
    if out:
        save_laplacian(res.L_star, os.path.join(out, "laplacian.json"))
        save_problem(p, os.path.join(out, "instance.json"))
    summary = {k: report.get(k) for k in ("n", "epsilon", "beta", "eps_pre", "eps_A",
                                          "epsilon_global") if k in report}
    summary["formulation"] = res.diagnostics.get("formulation")
    print(json.dumps(summary))
    return EXIT_OK


# ---------------------------------------------------------------- table1


def trial_seed(seed, row_index, trial):
    """Independent per-trial seed derived from the base seed."""
    return int(np.random.SeedSequence([seed, row_index, trial]).generate_state(1)[0])


def _table1_trial(task):
    n, m, cost, seed, backend, hops = task
    g = random_connected(n, m, seed=seed)
    p = random_instance(n, cost, seed=seed)
    res = design(g, p.delta, p.Delta, backend=backend, lower_bound=True, hops=hops)
    return res.epsilon, res.eps_A


TABLE1_COLUMNS = ("n", "m", "cost", "trials", "eps_mean", "eps_std", "gap_mean", "gap_std",
                  "eps_A_mean")


def table1_stats(rows, trials, seed=0, backend="cvxpy", hops=1, workers=1):
    """Per-row mean and sample std of ``eps`` and ``eps - eps_A``.

    Trials are independent; results are collected in trial order whatever
    the pool size, so the output depends on ``seed`` only.
    """
    if trials < 2:
        raise UsageError("trials must be at least 2")
    tasks = [(n, m, cost, trial_seed(seed, r, t), backend, hops)
             for r, (n, m, cost) in enumerate(rows) for t in range(trials)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_table1_trial, tasks))
    else:
        results = [_table1_trial(t) for t in tasks]
    stats = []
    for r, (n, m, cost) in enumerate(rows):
        chunk = np.array(results[r * trials:(r + 1) * trials], dtype=float)
        eps, eps_a = chunk[:, 0], chunk[:, 1]
        gap = eps - eps_a
        stats.append(dict(n=n, m=m, cost=cost, trials=trials,
                          eps_mean=float(eps.mean()), eps_std=float(eps.std(ddof=1)),
                          gap_mean=float(gap.mean()), gap_std=float(gap.std(ddof=1)),
                          eps_A_mean=float(eps_a.mean())))
    return stats


def stats_csv(stats):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, TABLE1_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in stats:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def cmd_table1(cfg):
    _require(cfg, "rows")
    for n, m, cost in cfg["rows"]:
        if cost not in FAMILIES:
            raise UsageError(f"unknown cost family {cost!r}")
    out = _outdir(cfg)
    stats = table1_stats(cfg["rows"], cfg["trials"], cfg["seed"], cfg["backend"],
                         cfg["hops"], cfg["workers"])
    text = stats_csv(stats)
    _write(out, "table1.csv", text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------- run


def _laplacian_for(cfg, p, g):
    if cfg["laplacian"]:
        try:
            return load_laplacian(cfg["laplacian"])
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise UsageError(f"cannot read Laplacian {cfg['laplacian']}: {exc}")
    if g is None:
        raise UsageError("--laplacian is required with an instance file")
    if cfg["unweighted"]:
        return unweighted_design(g, p.delta, p.Delta).L_star
    return design(g, p.delta, p.Delta).L_star


def _trace_text(trace, timing):
    if timing or "elapsed_s" not in trace.columns:
        return trace.to_csv()
    rows = list(csv.reader(io.StringIO(trace.to_csv())))
    drop = rows[0].index("elapsed_s")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow(row[:drop] + row[drop + 1:])
    return buf.getvalue()


def _run_discrete(cfg, p, L, q, sol):
    base = p.without_box() if p.has_box else p
    x_star = sol.x
    if cfg["algo"] == "dgd":
        eps = dana_d.laplacian_epsilon(base, L)
        alpha = dana_d.resolve_step(cfg["alpha"], eps, base.n, 0)
        x, k, trace = reference.run_dgd(base, L, alpha, max_iters=cfg["max_iters"],
                                        tol=cfg["tol"], x_star=x_star)
        return trace, dict(iterations=k, alpha=alpha, epsilon=eps,
                           converged=bool(trace.last("grad_norm") <= cfg["tol"]))
    runner = run_message_passing if cfg["algo"] == "dana-d-agents" else dana_d.run_matrix_form
    res = runner(base, L, q, cfg["alpha"], max_iters=cfg["max_iters"], tol=cfg["tol"],
                 x_star=x_star, record_every=cfg["record_every"])
    summary = dict(iterations=res.n_iter, alpha=res.alpha, epsilon=res.epsilon,
                   converged=res.converged, direction_rounds=res.info["direction_rounds"],
                   rounds_per_iter=res.rounds_per_iter)
    if "breaches" in res.info:
        summary.update(messages=res.info["messages"], breaches=len(res.info["breaches"]))
    return res.trace, summary


def _first_below(values, index, tol):
    hits = np.flatnonzero(np.asarray(values) <= tol)
    return float(np.asarray(index)[hits[0]]) if hits.size else None


def cmd_run(cfg):
    p, g = _load_instance(cfg)
    L = _laplacian_for(cfg, p, g)
    if L.n != p.n:
        raise InvalidInput(f"Laplacian has n={L.n} but the instance has n={p.n}")
    out = _outdir(cfg)
    algo = cfg["algo"]
    qs = cfg["q"] if algo != "dgd" else [0]
    summaries = []
    for q in qs:
        start = time.perf_counter()
        if algo in ("dana-d", "dana-d-agents", "dgd"):
            sol = reference.oracle(p.without_box() if p.has_box else p)
            trace, summary = _run_discrete(cfg, p, L, q, sol)
            summary["iters_to_1e-6"] = _first_below(trace["obj_gap"], trace["iter"], 1e-6)
        elif algo == "dana-c":
            lam0 = THREE_NODE_DUAL0 if cfg["instance"] == "three-node" else None
            res = dana_c.integrate(p, L, q, cfg["h"], cfg["T"] or 50.0, lam0=lam0,
                                   approx_quadratic=cfg["approx_quadratic"],
                                   record_every=cfg["record_every"])
            trace = res.trace
            summary = dict(t=res.t, kkt=res.kkt, x=res.x.tolist(),
                           max_vq_increase=float(np.max(np.diff(res.vq), initial=0.0)))
        else:
            rng = np.random.default_rng(cfg["seed"])
            x_init = p.x0 + rng.uniform(-cfg["init_noise"], cfg["init_noise"], p.n)
            try:
                gains = dana_c.RobustGains(**(cfg["gains"] or {}))
            except TypeError as exc:
                raise UsageError(f"bad gains: {exc}")
            res = dana_c.integrate_robust(p, L, q=q, h=cfg["h"], T=cfg["T"] or 100.0,
                                          gains=gains, perturbations=cfg["perturb"],
                                          seed=cfg["seed"], x_init=x_init,
                                          record_every=cfg["record_every"])
            trace = res.trace
            summary = dict(final_eq_violation=float(res.eq_violation[-1]),
                           final_err_to_opt=float(res.err_to_opt[-1]),
                           injections=res.injections)
        summary.update(algo=algo, q=q, elapsed_s=time.perf_counter() - start)
        summaries.append(summary)
        suffix = f"_q{q}" if len(qs) > 1 else ""
        _write(out, f"trace{suffix}.csv", _trace_text(trace, cfg["timing"]))
        print(json.dumps({k: v for k, v in summary.items() if k != "x"}, default=float))
    if out:
        save_laplacian(L, os.path.join(out, "laplacian.json"))
        _write(out, "summary.json", json.dumps(summaries, indent=2, default=float))
    return EXIT_OK


# ---------------------------------------------------------------- oracle


def oracle_report(sol):
    names = {reference.FREE: "free", reference.LOWER: "lower", reference.UPPER: "upper"}
    return {"x_star": sol.x.tolist(), "lambda_star": sol.lam.tolist(), "nu_star": sol.nu,
            "active_set": [names[int(s)] for s in sol.active], "f_star": sol.f_star,
            "method": sol.method}


def cmd_oracle(cfg):
    p, _ = _load_instance(cfg)
    out = _outdir(cfg)
    text = json.dumps(oracle_report(reference.oracle(p)), indent=2)
    _write(out, "oracle.json", text)
    print(text)
    return EXIT_OK


COMMANDS = {"design": cmd_design, "table1": cmd_table1, "run": cmd_run, "oracle": cmd_oracle}


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidInput as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DanaError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
