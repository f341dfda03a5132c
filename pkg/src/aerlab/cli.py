"""Command-line front end.

Every subcommand writes ``<out>/<subcommand>/report.json`` (and CSV tables
with ``--format csv|both``).  Exit codes: 0 when every check passes, 1 when
a mathematical check fails, 2 on usage or input errors.
"""
from __future__ import annotations

import argparse
import os
import sys
import time
from contextlib import nullcontext
from fractions import Fraction
from pathlib import Path

from . import __version__
from . import generators as gen
from . import groupmix as gm
from . import homogeneity as hom
from . import report as rep
from . import stabilizer as stab
from . import vcnet
from .graph import FiniteGraph, GraphError, Measure, check_axioms, read_edge_list

DEFAULT_OUT = "aerlab_out"
RANDOM_GENERATORS = {"torus-packing", "sprinkle"}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.replace(";", ",").split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a rational number, got {text!r}")


def _parse_spec(spec: str) -> tuple[str, dict]:
    """``"cycle:n=24,w=1"`` -> ``("cycle", {"n": "24", "w": "1"})``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise UsageError(f"bad generator parameter {item!r} in {spec!r}")
        params[key.strip()] = val.strip()
    return name.strip(), params


def _num(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def build_instance(kind: str, params: dict, seed: int | None) -> gen.GeneratedInstance:
    """Dispatch a generator by name; random generators need ``seed``."""
    p = {k: _num(v) if k not in ("space", "group", "x") else v for k, v in params.items()}
    if kind in RANDOM_GENERATORS and seed is None:
        raise UsageError(f"generator {kind!r} is randomised and needs --seed")
    try:
        if kind == "cycle":
            return gen.cycle_interval(int(p["n"]), int(p.get("w", 1)))
        if kind == "line":
            return gen.interval_line(int(p["n"]), int(p.get("w", 1)))
        if kind == "torus-packing":
            return gen.torus_packing(int(p.get("dim", 2)), float(p.get("len", 8.0)),
                                     float(p["eps"]), seed)
        if kind == "sprinkle":
            return gen.sprinkle(p.get("space", "torus"), int(p["n"]), seed,
                                dim=int(p.get("dim", 2)), L=float(p.get("len", 8.0)))
        if kind == "complete":
            g = FiniteGraph.complete(int(p["n"]))
            return gen.GeneratedInstance(g, Measure.build(g), {"generator": "complete", "params": p})
        if kind == "identity":
            g = FiniteGraph.identity(int(p["n"]))
            return gen.GeneratedInstance(g, Measure.build(g), {"generator": "identity", "params": p})
        if kind == "heisenberg":
            G, X = gen.heisenberg_ball(int(p.get("bound", 1)), int(p["modulus"]))
            inst = gen.cayley_relation(G, gm.symmetric_hull(G, X))
            inst.provenance["params"] = p
            return inst
        if kind == "cayley":
            G = _group(str(params["group"]))
            X = [int(x) % G.order for x in str(params.get("x", "")).split(";") if x]
            return gen.cayley_relation(G, X)
    except KeyError as exc:
        raise UsageError(f"generator {kind!r} needs parameter {exc.args[0]!r}") from None
    raise UsageError(f"unknown generator {kind!r}")


def _group(text: str) -> gm.FiniteGroup:
    """``cyclic20``, ``sl2_5``, ``heis13`` style group names."""
    for prefix, ctor in (("cyclic", gm.cyclic_group), ("sl2_", gm.sl2_group), ("heis", gm.heisenberg_group)):
        if text.startswith(prefix):
            return ctor(int(text[len(prefix):]))
    raise UsageError(f"unknown group {text!r} (use cyclicN, sl2_P or heisQ)")


def load_input(args, spec_attr="gen", dir_attr="instance") -> gen.GeneratedInstance:
    spec = getattr(args, spec_attr, None)
    directory = getattr(args, dir_attr, None)
    edges = getattr(args, "edges", None) if spec_attr == "gen" else None
    given = [x for x in (spec, directory, edges) if x]
    if len(given) != 1:
        raise UsageError("give exactly one input: --gen SPEC, --instance DIR or --edges FILE")
    if spec:
        kind, params = _parse_spec(spec)
        inst = build_instance(kind, params, args.seed)
    elif directory:
        inst = gen.load_instance(directory)
    else:
        g, mu = read_edge_list(edges, args.weights, args.mode or "global")
        inst = gen.GeneratedInstance(g, mu, {"generator": "edge-list", "params": {"path": str(edges)}})
    if getattr(args, "mode", None) == "local" and inst.measure.mode != "local":
        inst.measure = Measure.build(inst.graph, inst.measure.weights, "local")
    return inst


def _add_input(p, weights=True):
    p.add_argument("--gen", help="generator spec, e.g. cycle:n=24,w=1 or sprinkle:n=500,len=8")
    p.add_argument("--instance", help="instance directory written by 'generate'")
    p.add_argument("--edges", help="edge-list file ('n m' header then one edge per line)")
    if weights:
        p.add_argument("--weights", help="per-vertex weights file (with --edges)")
    p.add_argument("--mode", choices=["global", "local"], default=None, help="measure normalisation")


def _add_globals(p, suppress: bool):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--out", default=d if suppress else os.environ.get("AERLAB_OUT", DEFAULT_OUT),
                   help="output directory (default $AERLAB_OUT or ./aerlab_out)")
    p.add_argument("--seed", type=_u64, default=d, help="RNG seed (required by randomised runs)")
    p.add_argument("--threads", type=int, default=d if suppress else 1,
                   help="cap on BLAS/worker threads")
    p.add_argument("--format", choices=["json", "csv", "both"], default=d if suppress else "json")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aerlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"aerlab {__version__}")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        sp = sub.add_parser(name, help=help_)
        _add_globals(sp, suppress=True)
        return sp

    p = add("generate", "build an instance directory")
    p.add_argument("family", choices=["cycle", "line", "torus-packing", "sprinkle", "complete",
                                      "identity", "heisenberg", "cayley"])
    p.add_argument("--n", type=int)
    p.add_argument("--w", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--len", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--space", choices=["torus", "sphere2"])
    p.add_argument("--modulus", type=int)
    p.add_argument("--bound", type=int)
    p.add_argument("--group")
    p.add_argument("--x", help="Cayley generating set, ';'-separated element indices")
    p.add_argument("--name", help="subdirectory name (default: the family)")

    p = add("axioms", "check doubling, measure and weak Fubini axioms")
    _add_input(p)
    p.add_argument("--exact-threshold", type=int, default=24)
    p.add_argument("--max-k", type=int)
    p.add_argument("--max-varpi", type=_fraction)
    p.add_argument("--max-kappa", type=_fraction)

    p = add("metric", "stabilizer metric and its commensurability checks")
    _add_input(p)
    p.add_argument("--normalizer", default="fubini_squared",
                   help="fubini_squared, exact_scan or a positive number")
    p.add_argument("--ms", type=_ints, default=[2, 3, 4])
    p.add_argument("--mass-ms", type=_ints, default=[2, 3])
    p.add_argument("--scale", type=_fraction, default=Fraction(1, 4))
    p.add_argument("--doubling-sample", type=int, help="sampled centres (needs --seed)")
    p.add_argument("--no-smoothing", action="store_true")

    p = add("homog", "local statistics and homogeneity levels")
    _add_input(p)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--embed", choices=list(hom.MODES), default="induced")
    p.add_argument("--varpi", type=float)
    p.add_argument("--sequence", nargs="+", metavar="SPEC",
                   help="several generator specs; emits an eps-versus-n curve")

    p = add("closeness", "compare LS ranges of two instances")
    p.add_argument("--a", required=True, help="generator spec or instance directory")
    p.add_argument("--b", required=True, help="generator spec or instance directory")
    p.add_argument("--seed-b", type=_u64, help="seed for the second instance (default --seed + 1)")
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--embed", choices=list(hom.MODES), default="induced")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--varpi", type=float)

    p = add("vc", "VC dimension, shatter function, eps-nets and packing curves")
    p.add_argument("--system", choices=["arcs", "neighborhoods"], default="arcs")
    p.add_argument("--n", type=int, default=20, help="cycle length for --system arcs")
    p.add_argument("--w", type=int, default=1)
    _add_input(p)
    p.add_argument("--cap", type=int, default=vcnet.VC_CAP)
    p.add_argument("--k", type=int, default=3, help="shatter function argument")
    p.add_argument("--net", type=int, help="eps-net resolution n (needs --seed)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--packing", type=_ints, help="resolutions for a packing curve of the stabilizer metric")

    p = add("mixing", "convolution mixing, stabilizers and word maps")
    p.add_argument("--family", choices=["sl2", "cyclic"], default="sl2")
    p.add_argument("--primes", type=_ints, help="primes for the sl2 family")
    p.add_argument("--params", type=_ints, help="moduli for the cyclic family")
    p.add_argument("--density", default="default", help="default or const")
    p.add_argument("--stab", action="store_true", help="also report Stab(f*f)")
    p.add_argument("--tol", type=_fraction, default=Fraction(0))
    p.add_argument("--word", help="word map to push forward, e.g. abAB")
    p.add_argument("--group", help="group for --word, e.g. sl2_3")
    p.add_argument("--samples", type=int, help="Monte Carlo tuples for --word (needs --seed)")

    p = add("expand", "expansion radius of a polynomial map over F_p^2")
    p.add_argument("--primes", type=_ints, default=[101, 211, 401])
    p.add_argument("--map", nargs=2, default=["y", "x + y**2"], metavar=("FX", "FY"))
    p.add_argument("--curve", default="y - x**2")
    p.add_argument("--cap", type=int, default=50)

    p = add("replay", "re-run a report's embedded configuration and compare")
    p.add_argument("report")
    return parser


# ---------------------------------------------------------------------------
# subcommands; each returns (result, passed, tables) with tables a list of
# (filename, header, rows)


def cmd_generate(args):
    params = {k: getattr(args, k) for k in ("n", "w", "dim", "len", "eps", "space", "modulus",
                                            "bound", "group", "x") if getattr(args, k) is not None}
    inst = build_instance(args.family, {k: str(v) for k, v in params.items()}, args.seed)
    inst.graph.audit()
    d = gen.save_instance(inst, Path(args.out) / "generate" / (args.name or args.family))
    # relative to --out so reports do not depend on where the output tree lives
    result = {"directory": d.relative_to(Path(args.out)).as_posix(), "n": inst.graph.n, "edges": len(inst.graph.edges()),
              "provenance": inst.provenance}
    return result, True, []


def cmd_axioms(args):
    inst = load_input(args)
    r = check_axioms(inst.graph, inst.measure, args.exact_threshold, args.max_k,
                     args.max_varpi, args.max_kappa)
    result = {"n": inst.graph.n, "measure_mode": inst.measure.mode, "k_lower": r.k_lower,
              "k_upper": r.k_upper, "varpi": r.varpi, "kappa": r.kappa, "theta": r.theta,
              "connected": r.connected, "passes": r.passes, "components": r.components,
              "normalized_input": r.normalized_input, "provenance": inst.provenance}
    return result, r.ok(), []


def _normalizer(args, inst):
    if args.normalizer in ("fubini_squared",):
        return "fubini_squared"
    if args.normalizer == "exact_scan":
        v = stab.theta_norm(inst.graph, inst.measure, "exact_scan")
        if v == float("inf"):
            raise UsageError("exact_scan normaliser undefined: no pair at graph distance 5")
        return v
    try:
        v = Fraction(args.normalizer)
    except ValueError:
        raise UsageError(f"bad --normalizer {args.normalizer!r}") from None
    if v <= 0:
        raise UsageError("--normalizer must be positive")
    return v


def cmd_metric(args):
    inst = load_input(args)
    if args.doubling_sample is not None and args.seed is None:
        raise UsageError("--doubling-sample is randomised and needs --seed")
    metric = stab.StabilizerMetric(inst.graph, inst.measure, normalizer=_normalizer(args, inst))
    if args.no_smoothing:
        out = {"claim1": stab.verify_claim1(metric)}
        per = [stab.verify_sm_power(metric, m) for m in args.ms]
        out["sm_power"] = {"pass": all(r["pass"] for r in per), "per_m": per}
        out["pass"] = out["claim1"]["pass"] and out["sm_power"]["pass"]
    else:
        out = stab.commensurability_report(metric, ms=tuple(args.ms), mass_ms=tuple(args.mass_ms),
                                           scales=(args.scale,), doubling_sample=args.doubling_sample,
                                           seed=args.seed or 0)
    out["theta_norm"] = metric.theta_norm
    out["normalizer"] = metric.normalizer_mode
    out["n"] = inst.graph.n
    out["provenance"] = inst.provenance
    tables = [("distances.csv", ["u", "v", "d0", "d", "dR"], stab.distance_rows(metric))]
    return out, bool(out["pass"]), tables


def _ls_table(g, m, embed, varpi):
    patterns, ls, _ = hom.local_stats_matrix(g, m, embed, varpi)
    header = ["vertex"] + [p.key for p in patterns]
    return header, ([a] + row for a, row in enumerate(ls.tolist()))


def cmd_homog(args):
    if args.sequence:
        curve = []
        for spec in args.sequence:
            kind, params = _parse_spec(spec)
            inst = build_instance(kind, params, args.seed)
            r = hom.homogeneity_epsilon(inst.graph, args.m, args.embed, args.varpi, inst.measure)
            curve.append({"spec": spec, "n": inst.graph.n, "eps_exact": r.eps_exact,
                          "eps_ae": r.eps_ae, "varpi": r.varpi})
        rows = [(c["n"], c["eps_exact"], c["eps_ae"]) for c in curve]
        return {"m": args.m, "mode": args.embed, "curve": curve}, True, \
            [("eps_curve.csv", ["n", "eps_exact", "eps_ae"], rows)]
    inst = load_input(args)
    r = hom.homogeneity_epsilon(inst.graph, args.m, args.embed, args.varpi, inst.measure)
    result = r.to_dict()
    result["n"] = inst.graph.n
    result["provenance"] = inst.provenance
    header, rows = _ls_table(inst.graph, args.m, args.embed, r.varpi)
    return result, True, [("local_stats.csv", header, rows)]


def _load_side(text: str, seed):
    if Path(text).is_dir():
        return gen.load_instance(text)
    kind, params = _parse_spec(text)
    return build_instance(kind, params, seed)


def cmd_closeness(args):
    seed_b = args.seed_b if args.seed_b is not None else (None if args.seed is None else args.seed + 1)
    a = _load_side(args.a, args.seed)
    b = _load_side(args.b, seed_b)
    close, haus, gap = hom.sequence_closeness(a.graph, b.graph, args.m, args.embed, args.eps, args.varpi)
    result = {"close": close, "hausdorff": haus, "gap": gap, "eps": args.eps, "m": args.m,
              "mode": args.embed, "seed_b": seed_b,
              "provenance": [a.provenance, b.provenance]}
    return result, bool(close), []


def cmd_vc(args):
    tables = []
    if args.system == "arcs":
        ss = vcnet.arcs_system(args.n, args.w)
        has_input = args.gen or args.instance or args.edges
        inst = load_input(args) if has_input else gen.cycle_interval(args.n, args.w)
    else:
        inst = load_input(args)
        ss = vcnet.SetSystem.neighborhoods(inst.graph)
    vc, at_least = vcnet.vc_dimension(ss, args.cap)
    shat, estimate = vcnet.shatter_function(ss, args.k, seed=args.seed or 0)
    sauer = vcnet.sauer_shelah_bound(args.k, vc)
    result = {"system": ss.source, "ground": ss.ground, "members": len(ss.members),
              "vc": vc, "at_least": at_least, "k": args.k, "shatter": shat,
              "shatter_estimate": estimate, "sauer_shelah_bound": sauer,
              "sauer_shelah_ok": shat <= sauer or at_least}
    passed = result["sauer_shelah_ok"]
    if args.net is not None:
        if args.seed is None:
            raise UsageError("--net draws random samples and needs --seed")
        trials = []
        for t in range(args.trials):
            r = vcnet.epsilon_net(ss, inst.measure, max(vc, 1), args.net, seed=args.seed + t)
            trials.append({"seed": args.seed + t, "verified": r.verified, "attempts": r.attempts})
        result["net"] = {"n": args.net, "d": max(vc, 1), "N": vcnet.net_size(max(vc, 1), args.net),
                         "trials": trials, "failures": sum(not t["verified"] for t in trials)}
        passed = passed and result["net"]["failures"] == 0
    if args.packing:
        metric = stab.StabilizerMetric(inst.graph, inst.measure)
        curve = vcnet.packing_curve_metric(metric, args.packing)
        result["packing"] = {"resolutions": curve.resolutions, "counts": curve.counts,
                             "slope": curve.slope, "intercept": curve.intercept}
        tables.append(("packing.csv", ["n", "count"], curve.rows()))
    return result, bool(passed), tables


def cmd_mixing(args):
    tables = []
    if args.word:
        if not args.group:
            raise UsageError("--word needs --group")
        if args.samples is not None and args.seed is None:
            raise UsageError("Monte Carlo word pushforward needs --seed")
        G = _group(args.group)
        F, info = gm.word_pushforward(G, args.word, samples=args.samples, seed=args.seed)
        FF = gm.convolve(G, F, F)
        result = {"group": G.name, "word": args.word, "info": info,
                  "F_identity": F.values[G.identity],
                  "l1_F": gm.l1_distance_to_uniform(G, F),
                  "l1_FF": gm.l1_distance_to_uniform(G, FF),
                  "fiber_profile": {str(k): v for k, v in gm.fiber_profile(F).items()}}
        tables.append(("pushforward.csv", ["index", "value"], enumerate(F.values)))
        return result, True, tables
    params = args.primes if args.family == "sl2" else args.params
    if not params:
        raise UsageError("--primes (sl2) or --params (cyclic) is required")
    rows = gm.mixing_experiment(args.family, params, args.density)
    result = {"family": args.family, "rows": rows}
    dists = [r.l1_dist for r in rows]
    passed = True
    if args.family == "sl2" and args.density == "default":
        passed = all(a > b for a, b in zip(dists, dists[1:]))
        result["strictly_decreasing"] = passed
    if args.stab:
        stabs = []
        for param in params:
            G = gm.sl2_group(param) if args.family == "sl2" else gm.cyclic_group(param)
            f = gm.trace_density(G, param) if args.family == "sl2" else gm.interval_density(G, param)
            if args.density == "const":
                f = gm.constant(G)
            s = gm.stabilizer_of(G, gm.convolve(G, f, f), args.tol)
            stabs.append({"param": param, "size": len(s.elements), "index": s.index,
                          "is_subgroup": s.is_subgroup})
        result["stabilizers"] = stabs
        passed = passed and all(s["is_subgroup"] for s in stabs)
    tables.append(("mixing.csv", ["param", "density", "l1_dist", "runtime_ms"],
                   ((r.param, r.density, r.l1_dist, r.runtime_ms) for r in rows)))
    return result, bool(passed), tables


def cmd_expand(args):
    per, tables = [], []
    for p in args.primes:
        t0 = time.perf_counter()
        r = gm.expansion_radius(p, args.map, args.curve, args.cap)
        per.append({"p": p, "max_attained": r.max_attained, "exceeded": r.exceeded,
                    "histogram": {str(k): v for k, v in r.histogram.items()},
                    "runtime_ms": round(1000 * (time.perf_counter() - t0), 3)})
        tables.append((f"xi_p{p}.csv", ["index", "value"], enumerate(r.xi.ravel().tolist())))
    maxes = [x["max_attained"] for x in per]
    nondecreasing = all(a <= b for a, b in zip(maxes, maxes[1:]))
    result = {"map": args.map, "curve": args.curve, "cap": args.cap, "per_prime": per,
              "nondecreasing": nondecreasing}
    return result, nondecreasing, tables


COMMANDS = {"generate": cmd_generate, "axioms": cmd_axioms, "metric": cmd_metric,
            "homog": cmd_homog, "closeness": cmd_closeness, "vc": cmd_vc,
            "mixing": cmd_mixing, "expand": cmd_expand}


def _config(args, argv) -> dict:
    skip = {"out"}
    cfg = {k: rep.jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["argv"] = _strip_out(argv)
    return cfg


def _strip_out(argv) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == "--out":
            skip = True
        elif not a.startswith("--out="):
            out.append(a)
    return out


def _thread_limit(n):
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - optional
        return nullcontext()
    return threadpool_limits(limits=max(1, n))


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        return replay(args.report, args.out)
    out = Path(args.out) / args.command
    try:
        with _thread_limit(args.threads):
            result, passed, tables = COMMANDS[args.command](args)
    except (UsageError, GraphError, gm.GroupError, KeyError) as exc:
        print(f"aerlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"aerlab {args.command}: error: {exc}", file=sys.stderr)
        return 2
    report = rep.make_report(args.command, _config(args, argv), result, passed)
    if args.format in ("json", "both") or not tables:
        rep.write_json(out / "report.json", report)
    if args.format in ("csv", "both"):
        for name, header, rows in tables:
            rep.write_csv(out / name, header, rows)
    print(f"{args.command}: {'pass' if passed else 'FAIL'} -> {out}")
    return 0 if passed else 1


def replay(path, out) -> int:
    """Re-run the embedded argv into a scratch directory and compare reports."""
    old = rep.read_report(path)
    argv = list(old["config"]["argv"])
    scratch = Path(out) / "replay"
    code = run(["--out", str(scratch)] + argv)
    new = rep.read_report(scratch / old["command"] / "report.json")
    same = rep.strip_timing(new) == rep.strip_timing(old)
    print(f"replay: {'identical' if same else 'DIFFERENT'} (exit {code})")
    return 0 if same else 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
