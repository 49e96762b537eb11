"""``spikecap`` command line.

Exit codes: 0 success, 1 Monte-Carlo mismatch (``mc-check`` only),
2 validation failure, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import __version__, core_it
from . import io as sio
from .capacity_solver import (
    SLACK_TOL,
    Coding,
    ensemble_mi,
    grid_capacity,
    hard_decoder,
    monte_carlo_mi,
    particle_capacity,
    with_certificate,
)
from .errors import ConvergenceError, QuadratureError, ValidationError
from .neuron_channel import DEFAULT_TAIL_TOL, CountChannelConfig, GammaChannel
from .tuning import StimulusDistribution, build_tuning_curve, mean_response, verify_tuning_mi

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_INVALID = 2
EXIT_NONCONVERGED = 3


# it ---------------------------------------------------------------------

def _report(args, quantity: str, value, extra: dict | None = None) -> dict:
    out = {"quantity": quantity, "value": value}
    if extra:
        out.update(extra)
    out["provenance"] = sio.provenance(_resolved(args))
    return out


def cmd_it(args) -> int:
    sub = args.it_command
    extra = None
    if sub == "entropy":
        value = core_it.entropy(sio.read_pmf(args.pmf, renormalize=args.renormalize))
        print(f"entropy = {value:.6f} bits")
    elif sub == "mi":
        value = core_it.mutual_information(sio.read_joint(args.joint, renormalize=args.renormalize))
        print(f"mutual information = {value:.6f} bits")
    elif sub == "kl":
        p = sio.read_pmf(args.p, renormalize=args.renormalize)
        q = sio.read_pmf(args.q, renormalize=args.renormalize)
        value = core_it.kl_divergence(p, q)
        print(f"KL divergence = {value:.6f} bits")
    elif sub == "bsc":
        value = core_it.bsc_capacity(args.p)
        print(f"BSC capacity = {value:.6f} bits per use")
        if args.message_bits is not None:
            if value <= 0:
                raise ValidationError("p=0.5 has zero capacity: no finite code length")
            uses = args.message_bits / value
            extra = {"message_bits": args.message_bits, "channel_uses": uses}
            print(f"{args.message_bits} message bits need at least {uses:.1f} channel uses")
    elif sub == "ba":
        ch = sio.read_channel(args.channel)
        value, pmf = core_it.blahut_arimoto(ch, tol=args.tol)
        extra = {"input": sio.pmf_to_dict(pmf)}
        print(f"capacity = {value:.6f} bits per use")
        print("optimal input: " + ", ".join(f"{lab}={p:.6f}" for lab, p in zip(pmf.labels, pmf.probs)))
    else:  # pragma: no cover - argparse restricts the choices
        raise ValidationError(f"unknown it subcommand {sub!r}")
    if args.out:
        sio.write_json(args.out, _report(args, sub, value, extra))
    return EXIT_OK


# capacity -----------------------------------------------------------------

def _channel(args, coding: Coding):
    base = GammaChannel(args.kappa, args.a0, args.b0)
    if coding is Coding.RATE:
        return CountChannelConfig(base, args.delta, args.tail_tol)
    return base


def cmd_capacity(args) -> int:
    coding = Coding(args.coding)
    channel = _channel(args, coding)
    prov = sio.provenance(_resolved(args))
    status = EXIT_OK
    try:
        if args.method == "grid":
            sol = grid_capacity(channel, coding, grid_n=args.grid_n, tol=args.ba_tol,
                                probe_n=args.probe_n, slack_tol=args.slack_tol)
        else:
            sol = particle_capacity(channel, coding, tol=args.slack_tol, probe_n=args.probe_n,
                                    max_outer=args.max_outer, threads=args.threads)
    except ConvergenceError as exc:
        if not hasattr(exc.best, "ensemble"):
            raise
        sol = exc.best
        status = EXIT_NONCONVERGED
        print(f"error: {exc}", file=sys.stderr)
    doc = sio.solution_to_dict(sol, prov)
    doc["uncertified"] = not sol.certified
    if args.out:
        sio.write_json(args.out, doc)
    if args.kkt_csv and sol.certificate is not None and sol.certificate.grid.size:
        sio.write_kkt_csv(args.kkt_csv, sol.certificate, prov)
    tag = "certified" if sol.certified else "UNCERTIFIED"
    print(f"capacity = {sol.capacity_per_use:.6f} bits per use, "
          f"{sol.capacity_bps:.3f} bits/s ({tag})")
    print("support (theta, weight): " + ", ".join(
        f"({t:.6g}, {w:.4f})" for t, w in zip(sol.ensemble.points, sol.ensemble.weights)))
    if sol.certificate is not None:
        c = sol.certificate
        print(f"KKT: max violation {c.max_violation:.3g}, support gap {c.at_support_gap:.3g}, "
              f"slack {c.slack_tol:g}")
    return status


# tuning -------------------------------------------------------------------

def cmd_tuning(args) -> int:
    sol = sio.read_solution(args.solution)
    if sol.certified:
        # trust but verify: the file's certificate is recomputed from its ensemble
        sol = with_certificate(sol, slack_tol=sol.certificate.slack_tol)
    if not sol.certified:
        raise ValidationError(
            f"{args.solution}: solution is not KKT-certified; refusing to build a tuning curve"
        )
    stim = StimulusDistribution.parse(args.stimulus)
    increasing = {"auto": None, "increasing": True, "decreasing": False}[args.direction]
    curve = build_tuning_curve(sol, stim, increasing_theta=increasing)
    mi, gap = verify_tuning_mi(curve, stim, sol.channel, sol.coding)
    kappa = sol.channel.kappa
    delta = getattr(sol.channel, "delta", None)
    prov = sio.provenance(_resolved(args))
    resp = [float(mean_response(curve, x, kappa, delta)) for x in curve.breakpoints[1:]]
    if args.out_csv:
        rows = [(float(x), float(t), r) for x, t, r in zip(curve.breakpoints[:-1], curve.levels, resp)]
        sio.write_csv(args.out_csv, ["x_break", "level_theta", "mean_response"], rows, prov)
    if args.staircase_csv:
        xs, th = curve.staircase(args.samples)
        mr = mean_response(curve, xs, kappa, delta)
        sio.write_csv(args.staircase_csv, ["x", "theta", "mean_response"],
                      zip(map(float, xs), map(float, th), map(float, mr)), prov)
    if args.out_json:
        sio.write_json(args.out_json, {
            "coding": curve.coding.value,
            "stimulus": stim.to_dict(),
            "breakpoints": curve.breakpoints.tolist(),
            "levels": curve.levels.tolist(),
            "weights": curve.weights.tolist(),
            "mean_response": resp,
            "mi_bits": mi,
            "capacity_per_use_bits": sol.capacity_per_use,
            "gap_bits": gap,
            "provenance": prov,
        })
    print("breakpoints: " + ", ".join(f"{x:.6g}" for x in curve.breakpoints))
    print("levels (theta): " + ", ".join(f"{t:.6g}" for t in curve.levels))
    print(f"composed MI = {mi:.9f} bits, capacity = {sol.capacity_per_use:.9f} bits, "
          f"gap = {gap:.3g} bits")
    return EXIT_OK


# decode / mc-check --------------------------------------------------------

def cmd_decode(args) -> int:
    sol = sio.read_solution(args.solution)
    part = hard_decoder(sol)
    print("region boundaries: " + ", ".join(f"{b:.6g}" for b in part.boundaries))
    print("region owners: " + ", ".join(str(o) for o in part.owners))
    print(f"hard-decision rate = {part.hard_rate:.6f} bits, "
          f"soft capacity = {sol.capacity_per_use:.6f} bits")
    if part.degenerate:
        print("points never decoded: " + ", ".join(map(str, part.degenerate)))
    if args.out:
        sio.write_json(args.out, {
            "coding": sol.coding.value,
            "boundaries": list(part.boundaries),
            "owners": list(part.owners),
            "induced_channel": part.induced_channel.rows.tolist(),
            "hard_rate_bits": part.hard_rate,
            "capacity_per_use_bits": sol.capacity_per_use,
            "degenerate": list(part.degenerate),
            "provenance": sio.provenance(_resolved(args)),
        })
    return EXIT_OK


def cmd_mc_check(args) -> int:
    sol = sio.read_solution(args.solution)
    exact = ensemble_mi(sol.ensemble, sol.channel, sol.coding)
    est, se = monte_carlo_mi(sol.ensemble, sol.channel, sol.coding,
                             n_samples=args.n, seed=args.seed)
    z = (est - exact) / se if se > 0 else (0.0 if est == exact else math.inf)
    ok = abs(z) <= args.sigmas
    print(f"quadrature MI = {exact:.6f} bits, Monte-Carlo = {est:.6f} +- {se:.2g} "
          f"({z:+.2f} SE): {'agree' if ok else 'MISMATCH'}")
    if args.out:
        sio.write_json(args.out, {
            "ensemble_mi_bits": exact, "monte_carlo_mi_bits": est, "std_error": se,
            "z_score": z, "agree": ok,
            "provenance": sio.provenance(_resolved(args), seed=args.seed),
        })
    return EXIT_OK if ok else EXIT_MISMATCH


# parser -------------------------------------------------------------------

def _resolved(args) -> dict:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikecap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spikecap {__version__}")
    parser.add_argument("--config", help="JSON file supplying defaults for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    p_it = sub.add_parser("it", help="entropy, mutual information, KL, BSC and Blahut-Arimoto")
    it_sub = p_it.add_subparsers(dest="it_command", required=True)
    for name, helptext in [("entropy", "entropy of a PMF"), ("mi", "mutual information of a joint PMF"),
                           ("kl", "KL divergence D(p||q)"), ("bsc", "binary symmetric channel capacity"),
                           ("ba", "Blahut-Arimoto capacity of a channel matrix")]:
        sp = it_sub.add_parser(name, help=helptext)
        sp.add_argument("--out", help="write a JSON report here")
        if name in ("entropy", "mi", "kl"):
            sp.add_argument("--renormalize", action="store_true",
                            help="rescale probabilities that do not sum to 1")
        if name == "entropy":
            sp.add_argument("--pmf", required=True)
        elif name == "mi":
            sp.add_argument("--joint", required=True)
        elif name == "kl":
            sp.add_argument("--p", required=True)
            sp.add_argument("--q", required=True)
        elif name == "bsc":
            sp.add_argument("--p", type=float, required=True, help="crossover probability")
            sp.add_argument("--message-bits", type=float,
                            help="also report the channel uses needed for this many bits")
        else:
            sp.add_argument("--channel", required=True)
            sp.add_argument("--tol", type=float, default=1e-10)
        sp.set_defaults(func=cmd_it)

    p_cap = sub.add_parser("capacity", help="capacity of the gamma ISI channel")
    p_cap.add_argument("coding", choices=[c.value for c in Coding])
    p_cap.add_argument("--kappa", type=float, default=1.0)
    p_cap.add_argument("--a0", type=float, default=0.003, help="smallest mean ISI (s)")
    p_cap.add_argument("--b0", type=float, default=0.03, help="largest mean ISI (s)")
    p_cap.add_argument("--delta", type=float, default=0.1, help="counting window (s), rate coding")
    p_cap.add_argument("--tail-tol", type=float, default=DEFAULT_TAIL_TOL)
    p_cap.add_argument("--method", choices=["particle", "grid"], default="particle")
    p_cap.add_argument("--grid-n", type=_positive_int, default=2001)
    p_cap.add_argument("--ba-tol", type=float, default=1e-6)
    p_cap.add_argument("--slack-tol", type=float, default=SLACK_TOL)
    p_cap.add_argument("--probe-n", type=_positive_int, default=1001)
    p_cap.add_argument("--max-outer", type=_positive_int, default=60)
    p_cap.add_argument("--threads", type=_positive_int, default=1)
    p_cap.add_argument("--out", help="solution JSON")
    p_cap.add_argument("--kkt-csv", help="probe curve CSV (theta, info_density_bits)")
    p_cap.set_defaults(func=cmd_capacity)

    p_tun = sub.add_parser("tuning", help="optimal staircase tuning curve from a solution")
    p_tun.add_argument("--solution", required=True)
    p_tun.add_argument("--stimulus", default="uniform:0,1",
                       help="uniform:LO,HI | beta:A,B[,LO,HI] | piecewise:X0,X1,..;D0,D1,..")
    p_tun.add_argument("--direction", choices=["auto", "increasing", "decreasing"], default="auto",
                       help="theta ordering along x (auto: rate decreasing, temporal increasing)")
    p_tun.add_argument("--out-csv", help="one row per interval")
    p_tun.add_argument("--out-json")
    p_tun.add_argument("--staircase-csv", help="densely sampled curve for plotting")
    p_tun.add_argument("--samples", type=_positive_int, default=501)
    p_tun.set_defaults(func=cmd_tuning)

    p_dec = sub.add_parser("decode", help="hard-decision (MAP) regions of a solution")
    p_dec.add_argument("--solution", required=True)
    p_dec.add_argument("--out")
    p_dec.set_defaults(func=cmd_decode)

    p_mc = sub.add_parser("mc-check", help="Monte-Carlo check of a solution's mutual information")
    p_mc.add_argument("--solution", required=True)
    p_mc.add_argument("--n", type=_positive_int, default=1_000_000)
    p_mc.add_argument("--seed", type=int, default=0)
    p_mc.add_argument("--sigmas", type=float, default=3.0)
    p_mc.add_argument("--out")
    p_mc.set_defaults(func=cmd_mc_check)
    return parser


def _subparser(parser, names):
    """Walk down the subcommand tree along ``names``."""
    node = parser
    for name in names:
        actions = [a for a in node._actions if isinstance(a, argparse._SubParsersAction)]
        if not actions or name not in actions[0].choices:
            return node
        node = actions[0].choices[name]
    return node


def _required_flags(parser):
    """Yield every required option of ``parser`` and its subcommands."""
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield from _required_flags(child)
        elif action.required and action.option_strings:
            yield action


def _parse(argv):
    parser = build_parser()
    # first pass only locates --config and the subcommand; required flags
    # may still come from the file
    required = list(_required_flags(parser))
    for action in required:
        action.required = False
    args = parser.parse_args(argv)
    for action in required:
        action.required = True
    if not args.config:
        return parser.parse_args(argv)
    path = Path(args.config)
    try:
        config = json.loads(path.read_text())
    except FileNotFoundError:
        raise ValidationError(f"{path}: no such config file") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(config, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    leaf = _subparser(parser, [args.command] + ([args.it_command] if args.command == "it" else []))
    known = {a.dest for a in leaf._actions}
    config = {k.replace("-", "_"): v for k, v in config.items()}
    unknown = sorted(set(config) - known)
    if unknown:
        raise ValidationError(f"{path}: unknown config field '{unknown[0]}' for '{args.command}'")
    # values from the file become defaults, so explicit flags still win
    for action in leaf._actions:
        if action.dest in config:
            action.required = False
    leaf.set_defaults(**config)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = _parse(argv)
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, QuadratureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
