"""Command-line scenario runner.

Usage::

    qdirsim feasibility|simulate|attack|tradeoff --config <path-or-name>
            [--out <dir>] [--seed <u64>] [--events <n>]

Exit status is 0 on success, 1 on any error and 2 when ``feasibility``
finds the scenario infeasible.  Attack verdicts are reported in the JSON
output, not in the exit status.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

import numpy as np
import scipy
from scipy import stats

from . import __version__
from . import scenario as scn
from .adversary import (
    blocking_attack,
    ensemble_statistics_attack,
    inject_noise,
    photon_angles_histogram,
)
from .errors import QdirsimError
from .measurement import recoil_direction, sample_events
from .metrics import (
    event_contrast,
    state_contrast,
    tradeoff_scan,
    tradeoff_summary,
    write_tradeoff_csv,
    write_tradeoff_json,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
ATTACKS = ("blocking", "ensemble")
# bump when a default that changes outputs is altered
DEFAULTS_VERSION = 1


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _u64(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser():
    parser = _Parser(prog="qdirsim", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"qdirsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True,
                        help="scenario file, or the name of a bundled scenario")
    common.add_argument("--out", help="output directory (default: run.output_dir)")
    common.add_argument("--seed", type=_u64, help="override run.seed")
    common.add_argument("--events", type=int, help="override run.n_events")
    sub.add_parser("feasibility", parents=[common], help="check the image-scale conditions")
    sim = sub.add_parser("simulate", parents=[common], help="sample a detection record")
    sim.add_argument("--debug", action="store_true", help="add the is_noise column to events.csv")
    attack = sub.add_parser("attack", parents=[common], help="run an attack on direction privacy")
    attack.add_argument("name", help=f"one of {', '.join(ATTACKS)}")
    sub.add_parser("tradeoff", parents=[common], help="sweep the receiver aperture")
    return parser


def _load(args):
    cfg = scn.load(args.config)
    cfg = cfg.replace_run(seed=args.seed, n_events=args.events, output_dir=args.out)
    out = Path(cfg.run.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, scn.Scenario(cfg), out


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _manifest(out, command, cfg, outputs):
    _write_json(out / "manifest.json", {
        "command": command,
        "scenario": cfg.name,
        "config_sha256": scn.config_hash(cfg),
        "seed": cfg.run.seed,
        "n_events": cfg.run.n_events,
        "outputs": sorted(outputs),
        "versions": {
            "qdirsim": __version__,
            "defaults": DEFAULTS_VERSION,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    })


def _print(payload):
    print(json.dumps(payload, indent=2, sort_keys=True))


def cmd_feasibility(args):
    cfg, sc, out = _load(args)
    verdict = sc.feasibility()
    payload = {"scenario": cfg.name, **verdict.to_dict()}
    _write_json(out / "feasibility.json", payload)
    _manifest(out, "feasibility", cfg, ["feasibility.json"])
    _print(payload)
    return EXIT_OK if verdict.feasible else EXIT_INFEASIBLE


def simulate(sc):
    """Event record (signal plus any transmitter noise) and its summary."""
    cfg = sc.config
    run = cfg.run
    events = sample_events(sc.state, sc.channel, run.n_events, run.seed, sc.arrival, sc.p_z)
    events = inject_noise(events, sc.noise_policy(), run.seed, grid=sc.grid, p_z=sc.p_z)
    pairs, singles = events.pairs, events.singles
    detected = sc.channel.prepare(sc.state, sc.p_z)
    summary = {
        "scenario": cfg.name,
        "channel": sc.channel.kind,
        "n_events": len(events),
        "n_pairs": len(pairs),
        "n_singles": len(singles),
        "n_noise": int(np.count_nonzero(events.is_noise)),
        "contrast": state_contrast(detected, sc.image),
        "event_contrast": None,
        "recoil_angle": None,
        "recoil_stderr": None,
        "marginal_uniformity_p": None,
    }
    if len(pairs) >= 2:
        if sc.channel.kind == "wide_acceptance_biphoton" and len(sc.image.dot_positions) >= 2:
            summary["event_contrast"] = event_contrast(pairs.y_rel, sc.image)
        recoil = recoil_direction(pairs, sc.p_z)
        summary["recoil_angle"], summary["recoil_stderr"] = recoil.angle, recoil.stderr
    if sc.channel.kind != "wide_acceptance_biphoton":
        # biphoton pairs record (q_sum, y_rel) only, not single-photon momenta
        hist = photon_angles_histogram(events, sc.grid)
        summary["marginal_uniformity_p"] = float(stats.chisquare(hist).pvalue)
    return events, summary


def cmd_simulate(args):
    cfg, sc, out = _load(args)
    events, summary = simulate(sc)
    events.to_csv(out / "events.csv", debug=args.debug)
    _write_json(out / "summary.json", summary)
    _manifest(out, "simulate", cfg, ["events.csv", "summary.json"])
    _print(summary)
    return EXIT_OK


def run_attack(sc, name):
    run = sc.config.run
    if name == "blocking":
        return blocking_attack(sc.state, sc.geometry, sc.mask_width, run.n_events, run.seed,
                               run.blocking_threshold)
    events = sample_events(sc.state, sc.single_photon_channel(), run.n_events, run.seed,
                           sc.arrival, sc.p_z)
    events = inject_noise(events, sc.noise_policy(), run.seed, grid=sc.grid, p_z=sc.p_z)
    return ensemble_statistics_attack(events, run.window, grid=sc.grid, p_z=sc.p_z,
                                      significance=run.significance)


def cmd_attack(args):
    if args.name not in ATTACKS:
        raise ValueError(f"unknown attack {args.name!r}; valid attacks: {', '.join(ATTACKS)}")
    cfg, sc, out = _load(args)
    report = run_attack(sc, args.name)
    payload = {"scenario": cfg.name, **report.to_dict()}
    fname = f"attack_{args.name}.json"
    _write_json(out / fname, payload)
    _manifest(out, f"attack {args.name}", cfg, [fname])
    _print(payload)
    return EXIT_OK


def cmd_tradeoff(args):
    cfg, sc, out = _load(args)
    reports = tradeoff_scan(sc, cfg.run.cutoffs, cfg.run.n_events, cfg.run.seed)
    write_tradeoff_csv(reports, out / "tradeoff.csv")
    write_tradeoff_json(reports, out / "tradeoff.json")
    _manifest(out, "tradeoff", cfg, ["tradeoff.csv", "tradeoff.json"])
    s = tradeoff_summary(reports)
    if reports:
        print(f"{cfg.name}: {s['n_points']} cutoffs, contrast {s['min_contrast']:.3f}"
              f"..{s['max_contrast']:.3f}, identifiability boundary: "
              f"{s['identifiability_boundary'] if s['identifiability_boundary'] is not None else 'none'}")
    else:
        print(f"{cfg.name}: empty sweep")
    return EXIT_OK


COMMANDS = {
    "feasibility": cmd_feasibility,
    "simulate": cmd_simulate,
    "attack": cmd_attack,
    "tradeoff": cmd_tradeoff,
}


def _origin(exc):
    """Module of the innermost package frame that raised ``exc``."""
    module = "qdirsim"
    for frame, _ in traceback.walk_tb(exc.__traceback__):
        name = frame.f_globals.get("__name__", "")
        if name.startswith("qdirsim"):
            module = name
    return module


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (QdirsimError, ValueError, OSError) as exc:
        print(f"qdirsim: error [{_origin(exc)}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
