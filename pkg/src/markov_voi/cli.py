"""Command-line entry point: ``markov-voi {generate,aggregate,sweep,select}``.

Exit codes: 0 success, 2 bad input, 3 numerical non-convergence.
"""
import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from .aggregation import build_reduced, harden, relevance_information
from .annealing import AnnealConfig, run_hierarchy, select_group_count
from .correction import CorrectionConfig, multinomial_error_model
from .errors import MarkovVoIError, NoConvergenceError
from .markov import NcdSpec, entropy_bits, generate_ncd
from .optimizer import OptimizerConfig, divergence_term, run_fixed_point

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


def _int_list(text):
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from err


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("shared options")
    g.add_argument("--tol", type=float, default=1e-9, help="partition convergence tolerance")
    g.add_argument("--max-iters", type=int, default=10_000)
    g.add_argument("--g-max", type=int, default=2, help="error series truncation order")
    g.add_argument("--sample-count", type=int, default=None,
                   help="transitions behind the estimates (default 50 n^2)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out-dir", default=".")
    return p


def build_parser():
    parser = argparse.ArgumentParser(prog="markov-voi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()

    gen = sub.add_parser("generate", parents=[common], help="write a random NCD chain")
    gen.add_argument("--states", type=int, default=None)
    gen.add_argument("--blocks", type=_int_list, default=None, help="e.g. 2,2,2,3")
    gen.add_argument("--epsilon", type=float, default=0.0)
    gen.add_argument("--out", default="chain.csv", help="matrix file name inside --out-dir")

    corr = argparse.ArgumentParser(add_help=False)
    c = corr.add_argument_group("correction options")
    c.add_argument("--init-scale", choices=("beta", "unit"), default="beta")
    c.add_argument("--joint-rho", action="store_true",
                   help="weight the bottleneck error sum by p(state, group) instead of p(state | group)")

    agg = sub.add_parser("aggregate", parents=[common, corr], help="solve at one beta and m")
    agg.add_argument("chain")
    agg.add_argument("--groups", type=int, required=True)
    agg.add_argument("--beta", type=float, required=True)
    agg.add_argument("--corrected", action="store_true", help="use the error-corrected updates")

    sw = sub.add_parser("sweep", parents=[common, corr], help="anneal and build the hierarchy")
    sw.add_argument("chain", nargs="?")
    sw.add_argument("--manifest", default=None, help="replay a previous sweep manifest")
    sw.add_argument("--beta-min", type=float, default=None)
    sw.add_argument("--beta-max", type=float, default=None)
    sw.add_argument("--beta-factor", type=float, default=1.05)
    sw.add_argument("--max-groups", type=int, default=None)
    sw.add_argument("--split-trials", type=int, default=5, help="probe directions per group")
    sw.add_argument("--corrected-updates", action="store_true",
                    help="drive the sweep with the error-corrected updates")
    sw.add_argument("--trials", type=int, default=1, help="independent annealing repetitions")

    sel = sub.add_parser("select", parents=[common], help="pick the group count")
    sel.add_argument("hierarchy")
    return parser


def _correction(args):
    return CorrectionConfig(g_max=args.g_max, sample_count=args.sample_count,
                            init_scale=args.init_scale, rho_as_tau=not args.joint_rho)


def _out(args, name):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def _config_of(args):
    skip = {"out_dir", "manifest", "func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _manifest(args, inputs, outputs, started):
    return mio.RunManifest(args.command, inputs, {k: str(v) for k, v in outputs.items()},
                           _config_of(args), __version__, time.perf_counter() - started)


def cmd_generate(args, started):
    blocks = args.blocks
    if blocks is None:
        if args.states is None:
            raise MarkovVoIError("give --blocks or --states")
        blocks = [args.states]
    if args.states is not None and args.states != sum(blocks):
        raise MarkovVoIError(f"--states {args.states} but blocks sum to {sum(blocks)}")
    spec = NcdSpec(tuple(blocks), args.epsilon, args.seed)
    model = generate_ncd(spec)
    path = _out(args, args.out)
    mio.write_chain(path, model, spec)
    g = model.gamma
    print(f"n={model.n} gamma min={g.min():.6g} max={g.max():.6g} "
          f"entropy={entropy_bits(g):.6g} bits")
    _manifest(args, {}, {"matrix": path, "sidecar": mio.sidecar_path(path)}, started).write(
        _out(args, "generate_manifest.json"))
    return EXIT_OK


def cmd_aggregate(args, started):
    model = mio.load_chain(args.chain)
    if not 1 <= args.groups <= model.n:
        raise MarkovVoIError(f"--groups must lie in [1, {model.n}]")
    config = OptimizerConfig(args.beta, args.max_iters, args.tol)
    psi0 = np.random.default_rng(args.seed).dirichlet(np.ones(args.groups), size=model.n)
    correction = error_model = None
    if args.corrected:
        correction = _correction(args)
        error_model = multinomial_error_model(model, correction.resolved_count(model.n))
    state = run_fixed_point(model, psi0, config, correction, error_model)
    phi = build_reduced(state.theta, state.psi, model.gamma)
    bundle = mio.result_bundle(state, args.beta, divergence_term(model, state),
                               relevance_information(state.relevance), phi)
    bundle["converged"] = state.converged
    outputs = {"bundle": _out(args, "bundle.json"), "partition": _out(args, "partition.csv"),
               "trace": _out(args, "trace.csv")}
    mio.write_json(outputs["bundle"], bundle)
    mio.write_matrix(outputs["partition"], harden(state.psi))
    mio.write_trace(outputs["trace"], state)
    _manifest(args, {"chain": args.chain}, outputs, started).write(
        _out(args, "aggregate_manifest.json"))
    if not state.converged:
        print(f"no convergence within {args.max_iters} updates", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _sweep_once(model, args, seed, prefix):
    anneal = AnnealConfig(beta_min=args.beta_min, beta_max=args.beta_max,
                          beta_factor=args.beta_factor, max_groups=args.max_groups,
                          trials_per_split=args.split_trials, seed=seed)
    correction = _correction(args)
    hierarchy = run_hierarchy(
        model, anneal, OptimizerConfig(0.0, args.max_iters, args.tol),
        correction if args.corrected_updates else None,
        report=correction)
    outputs = {"hierarchy": _out(args, prefix + "hierarchy.json"),
               "curve": _out(args, prefix + "curve.csv"),
               "correction": _out(args, prefix + "correction.json")}
    mio.write_hierarchy(outputs["hierarchy"], hierarchy)
    mio.write_curve(outputs["curve"], hierarchy)
    mio.write_json(outputs["correction"], mio.correction_report(
        hierarchy, correction.g_max, correction.resolved_count(model.n)))
    return hierarchy, outputs


def cmd_sweep(args, started):
    if args.manifest:
        manifest = mio.RunManifest.read(args.manifest)
        if manifest.command != "sweep":
            raise MarkovVoIError(f"{args.manifest} is a {manifest.command!r} manifest")
        replay = dict(manifest.config)
        replay.pop("command", None)
        vars(args).update(replay)
    if not args.chain:
        raise MarkovVoIError("sweep needs a chain file or --manifest")
    if args.trials < 1:
        raise MarkovVoIError("--trials must be positive")
    model = mio.load_chain(args.chain)

    outputs, summary, converged = {}, [], True
    if args.trials == 1:
        seeds = [args.seed]
    else:
        seeds = [int(s) for s in np.random.SeedSequence(args.seed).generate_state(args.trials)]
    for t, seed in enumerate(seeds):
        prefix = "" if args.trials == 1 else f"trial{t:03d}_"
        hierarchy, outs = _sweep_once(model, args, seed, prefix)
        outputs.update({prefix + k: v for k, v in outs.items()})
        sel = select_group_count(hierarchy)
        summary.append({"trial": t, "seed": seed, "m_star": sel.m_star, "flags": sel.flags})
        converged &= all(lv.converged for lv in hierarchy)
    if args.trials > 1:
        outputs["trials"] = _out(args, "trials.json")
        mio.write_json(outputs["trials"], summary)
    for row in summary:
        print(f"trial {row['trial']}: m* = {row['m_star']}"
              + (f" ({', '.join(row['flags'])})" if row["flags"] else ""))
    _manifest(args, {"chain": args.chain}, outputs, started).write(
        _out(args, "sweep_manifest.json"))
    if not converged:
        print("some levels did not converge (flagged in the hierarchy)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_select(args, started):
    hierarchy = mio.read_hierarchy(args.hierarchy)
    sel = select_group_count(hierarchy)
    report = {"m_star": sel.m_star, "beta_critical": sel.level.beta_critical,
              "beta_star_crossing_m": sel.beta_star_crossing_m, "flags": sel.flags}
    print(json.dumps(report))
    path = _out(args, "selection.json")
    mio.write_json(path, report)
    _manifest(args, {"hierarchy": args.hierarchy}, {"selection": path}, started).write(
        _out(args, "select_manifest.json"))
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "aggregate": cmd_aggregate, "sweep": cmd_sweep,
            "select": cmd_select}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    started = time.perf_counter()
    try:
        return COMMANDS[args.command](args, started)
    except NoConvergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MarkovVoIError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
