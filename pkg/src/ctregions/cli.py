"""Command-line front end: ``ctregions <command> [--config ...]``."""

import argparse
import csv
import io
import json
import os
import sys
import time

import numpy as np

from . import partition as part
from .config import load_config
from .dtmpqp import (MAX_NODES, condense, dimension_sensitivity, largest_region_law, solve_box_qp,
                     solve_explicit)
from .errors import (BudgetError, ConfigError, CtRegionsError, InsufficientSamplesError,
                     ModelViolationError)
from .model import REGION_IDS
from .render import render_ct, render_dt
from .simulate import detect_arc_sequences, shooting_gain_oracle
from .switchfit import fit_region
from .tpbvp import free_gain

EXIT_OK, EXIT_ERROR, EXIT_CONFIG, EXIT_BUDGET, EXIT_FAILED, EXIT_SAMPLES = 0, 1, 2, 3, 4, 5


class Run:
    """Output directory, config hash and the markdown report of one command."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.out = cfg.out_dir
        os.makedirs(self.out, exist_ok=True)
        self.lines = [f"# {command} run report", "",
                      f"- config hash: `{cfg.hash}`",
                      "- effective tolerances: " + ", ".join(
                          f"{k}={v:.1e}" for k, v in cfg.effective_tolerances.items()), ""]
        self.failed = []

    def path(self, name):
        return os.path.join(self.out, name)

    def write(self, name, text):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)

    def write_json(self, name, doc):
        doc = dict(doc, config_hash=self.cfg.hash)
        self.write(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def write_csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"# config_hash={self.cfg.hash}"])
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
        self.write(name, buf.getvalue())

    def md(self, *lines):
        self.lines.extend(lines)

    def fail(self, what):
        self.failed.append(what)

    def finish(self):
        self.md("", "## Status", "")
        if self.failed:
            self.md(*[f"- FAILED: {f}" for f in self.failed])
        else:
            self.md("- all checks passed")
        self.write(f"{self.command}_report.md", "\n".join(self.lines) + "\n")
        return EXIT_FAILED if self.failed else EXIT_OK


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def _table(header, rows):
    out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def _partition(cfg, run, record=True):
    sys_ = cfg.lti()
    p = part.compute_partition(sys_, strict=False)
    for h in p.hyperplanes:
        print(h.describe(4))
    if record and p.violations:
        run.fail(f"{len(p.violations)} of {len(p.probes)} probed cells have no single-switch optimum")
    return sys_, p


def cmd_partition(cfg):
    run = Run(cfg, "partition")
    sys_, p = _partition(cfg, run)
    run.write("partition.json", p.to_json({"config_hash": cfg.hash}))
    run.md("## Hyperplanes", "", *[f"- `{h.describe(4)}`" for h in p.hyperplanes], "",
           "## Regions", "",
           *_table(["id", "arc sequence", "sign pattern (l1 l2 l3 l4)"],
                   [(r.region_id, r.arc.value, r.pattern) for r in p.regions]), "",
           "Upper = control at +u_max (sigma <= -u_max); Lower = control at -u_max.", "",
           "## Cell probes", "",
           *_table(["cell", "expected", "oracle", "violation"],
                   [("".join("+" if s > 0 else "-" for s in pr.cell), pr.expected.value,
                     pr.observed.value if pr.observed else "none",
                     f"{pr.violation:.4f}") for pr in p.probes]), "")

    ss = part.verify_single_switch(sys_, cfg.grid, tol=cfg.tol("oracle"))
    run.write_json("single_switch.json", {"grid": cfg.grid, **ss.summary()})
    run.write_csv("single_switch.csv",
                  [f"x0{i + 1}" for i in range(sys_.n)]
                  + ["oracle_arc", "crossings", "oracle_violation"],
                  [(*x, a.value if a else "none", int(c), v)
                   for x, a, c, v in zip(ss.points, ss.arcs, ss.crossings, ss.oracle_violation)])
    run.md("## Single-switch check", "",
           f"- grid {cfg.grid}^{sys_.n}: {len(ss.points)} points, "
           f"{len(ss.points) - len(ss.inconsistent)} with a single-switch optimum, "
           f"{len(ss.violations)} with more than one band crossing", "")
    if not ss.ok:
        run.fail(f"single-switch check: {len(ss.violations)} violating grid points")
    print(f"single-switch check: {len(ss.violations)} of {len(ss.points)} grid points "
          f"cross the band more than once")

    ep = part.verify_endpoint_condition(sys_, p, cfg.endpoint_samples, seed=cfg.seed)
    summ = ep.summary()
    run.write_json("endpoint.json", {"regions": summ, "step": ep.step})
    run.md("## Endpoint condition", "",
           *_table(["region", "samples", "passed", "expected argmin", "median argmin"],
                   [(rid, s["samples"], s["passed"],
                     "-" if s["expected_argmin"] is None else f"{s['expected_argmin']:.4f}",
                     f"{s['median_argmin']:.4f}") for rid, s in summ.items()]), "")
    if not ep.ok:
        run.fail("endpoint condition")
    for rid, s in summ.items():
        print(f"endpoint {rid}: {s['passed']}/{s['samples']} samples pass")
    return run.finish()


def cmd_switchfit(cfg):
    run = Run(cfg, "switchfit")
    sys_, p = _partition(cfg, run, record=False)
    rows = []
    for r in p.regions:
        if not r.arc.transitional:
            continue
        fit = fit_region(sys_, p, r.region_id, cfg.samples, cfg.seed, cfg.degree)
        run.write(f"fit_{r.region_id}.json", fit.to_json({"config_hash": cfg.hash}))
        run.write(f"samples_{r.region_id}.csv", f"# config_hash={cfg.hash}\n" + fit.samples_csv())
        rows.append((r.region_id, f"{fit.r_squared:.4f}", f"{fit.t_s_min:.4f}",
                     f"{fit.t_s_max:.4f}", fit.samples))
        print(f"{r.region_id}: R^2 = {fit.r_squared:.4f}, t_s in "
              f"[{fit.t_s_min:.4f}, {fit.t_s_max:.4f}] s ({fit.samples} samples)")
    header = ["region", "r_squared", "t_s_min", "t_s_max", "samples"]
    run.write_csv("switchfit_summary.csv", header, rows)
    run.md("## Switching-time fits", "", *_table(header, rows))
    return run.finish()


def _check_budget(cfg):
    big = [n for n in cfg.N if n > MAX_NODES]
    if big:
        raise BudgetError(f"N = {big} exceeds the enumeration budget of {MAX_NODES} nodes")


def _dt_solutions(cfg, sys_):
    return {N: solve_explicit(sys_, N, volume_min=cfg.tol("volume_min")) for N in cfg.N}


def cmd_dtcompare(cfg):
    _check_budget(cfg)
    run = Run(cfg, "dtcompare")
    sys_ = cfg.lti()
    p = part.compute_partition(sys_, strict=False)
    sols = _dt_solutions(cfg, sys_)
    counts = [("continuous-time", "-", len(p.regions))]
    counts += [("discrete-time", N, len(s.regions)) for N, s in sols.items()]
    run.write_csv("region_counts.csv", ["formulation", "N", "regions"], counts)
    run.md("## Region counts", "", *_table(["formulation", "N", "regions"], counts), "")
    for N, sol in sols.items():
        best, K = largest_region_law(sol)
        n = K.shape[1]
        run.write_json(f"dt_N{N}_regions.json", {
            "N": N, "T_s": sol.problem.T_s, "patterns_tested": sol.patterns_tested,
            "regions": [{"pattern": r.pattern_text, "volume": r.volume,
                         "gains": r.gains.tolist(), "offsets": r.offsets.tolist(),
                         "halfspaces": [{"normal": g.tolist(), "offset": float(b)}
                                        for g, b in r.halfspaces]} for r in sol.regions],
            "dimension_sensitivity": [{"volume_threshold": t, "regions": c}
                                      for t, c in dimension_sensitivity(sol)]})
        run.write_csv(f"dt_N{N}_largest_gains.csv",
                      ["k"] + [f"K_k{i + 1}" for i in range(n)] + ["offset"],
                      [(k, *K[k], best.offsets[k]) for k in range(N)])
        run.md(f"## Largest region, N = {N} (pattern {best.pattern_text}, "
               f"volume {best.volume:.4f})", "",
               *_table(["k"] + [f"K_k{i + 1}" for i in range(n)],
                       [(k, *(f"{v:.4f}" for v in K[k])) for k in range(N)]), "",
               "Region count by full-dimensionality threshold: " + ", ".join(
                   f"{t:.0e} -> {c}" for t, c in dimension_sensitivity(sol)), "")
        if sys_.n == 3:
            render_dt(sol, (sys_.theta_lo, sys_.theta_hi), run.out, tag=f"dt_N{N}",
                      config_hash=cfg.hash)
    print(" / ".join(str(c[2]) for c in counts))
    return run.finish()


def cmd_render(cfg):
    _check_budget(cfg)
    run = Run(cfg, "render")
    sys_, p = _partition(cfg, run, record=False)
    box = (sys_.theta_lo, sys_.theta_hi)
    if sys_.n != 3:
        raise ConfigError("cube-face figures need a three-state system")
    res = render_ct(p, box, run.out, tag="ct", config_hash=cfg.hash)
    files = [os.path.basename(x) for x in res.paths]
    for N, sol in _dt_solutions(cfg, sys_).items():
        r = render_dt(sol, box, run.out, tag=f"dt_N{N}", config_hash=cfg.hash)
        files += [os.path.basename(x) for x in r.paths]
    run.md("## Figures", "", *[f"- {f}" for f in files])
    for f in files:
        print(os.path.join(run.out, f))
    return run.finish()


def cmd_verify(cfg):
    run = Run(cfg, "verify")
    sys_, p = _partition(cfg, run)
    results = {}

    K = free_gain(sys_, sys_.t_f).K_f
    Ks = shooting_gain_oracle(sys_, sys_.t_f)
    rel = float(np.linalg.norm(K - Ks) / np.linalg.norm(K))
    results["gain_vs_shooting"] = {"relative_error": rel, "pass": rel <= 1e-6}

    X = part.theta_grid(sys_, cfg.grid)
    det = detect_arc_sequences(sys_, X, tol=cfg.tol("oracle"))
    ids, on_b = part.classify_many(p, X, cfg.tol("boundary_band"))
    agree = np.array([a is not None and REGION_IDS[a] == i for a, i in zip(det.arcs, ids)])
    frac = float(agree.mean())
    off_band = int(np.count_nonzero(~agree & ~on_b))
    results["classification"] = {"agreement": frac, "disagreements_off_band": off_band,
                                  "pass": frac >= 0.995 and off_band == 0}

    ss = part.verify_single_switch(sys_, X, detection=det)
    results["single_switch"] = dict(ss.summary(), **{"pass": ss.ok})

    ep = part.verify_endpoint_condition(sys_, p, cfg.endpoint_samples, seed=cfg.seed)
    results["endpoint"] = {"regions": ep.summary(), "pass": ep.ok}

    if sys_.n == 3:
        rng = np.random.default_rng(cfg.seed)
        worst, uncovered = 0.0, 0
        sols = _dt_solutions(cfg, sys_) if max(cfg.N) <= MAX_NODES else {}
        for N, sol in sols.items():
            H, F = condense(sol.problem)
            Xr = rng.uniform(sys_.theta_lo, sys_.theta_hi, size=(1000, sys_.n))
            for x in Xr:
                hits = sol.locate(x)
                if not hits:
                    uncovered += 1
                    continue
                u, _ = solve_box_qp(H, F.T @ x, sys_.u_max)
                worst = max(worst, float(np.max(np.abs(hits[0].law(x) - u))))
        results["dt_law_vs_qp"] = {"max_abs_error": worst, "uncovered": uncovered,
                                   "pass": worst <= 1e-6 and uncovered == 0}

    run.write_json("verify.json", results)
    run.md("## Oracle checks", "",
           *_table(["check", "pass"], [(k, "yes" if v["pass"] else "no") for k, v in results.items()]))
    for k, v in results.items():
        print(f"{k}: {'PASS' if v['pass'] else 'FAIL'}")
        if not v["pass"]:
            run.fail(k)
    return run.finish()


COMMANDS = {
    "partition": cmd_partition,
    "switchfit": cmd_switchfit,
    "dtcompare": cmd_dtcompare,
    "render": cmd_render,
    "verify": cmd_verify,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="ctregions",
                                 description="Critical regions of input-bounded LQ optimal control.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="TOML run configuration (default: shipped instance)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--tol", type=float, help="multiplier applied to every tolerance")
    ap.add_argument("--seed", type=int, help="sampling seed (overrides the config)")
    ap.add_argument("--grid", type=int, help="points per axis of the verification grid")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config).with_overrides(
            out_dir=args.out, tol_mult=args.tol, seed=args.seed, grid=args.grid)
        status = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(f"budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ModelViolationError as exc:
        print(f"model violation: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except InsufficientSamplesError as exc:
        print(f"insufficient samples: {exc} (accepted {exc.accepted}, required {exc.required}, "
              f"drawn {exc.drawn})", file=sys.stderr)
        return EXIT_SAMPLES
    except CtRegionsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"[{args.command}] finished in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
