"""Command-line front end.

Exit codes: 0 success, 1 usage/config errors (unknown probe, model, or
malformed config), 2 hypothesis violations, 3 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import report, zoo
from .errors import ConfigError, HypothesisViolationError, \
    NumericalFailureError

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _floats(text: str):
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _ints(text: str):
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _add_common(p, model_required=True):
    if model_required:
        p.add_argument("--model", required=True, help="zoo model name")
    p.add_argument("--x0", type=_floats, default=None,
                   help="start point, comma separated")
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--paths", type=int, default=None, dest="n_paths")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None,
                   help="path-parallel threads (default: "
                        "HYPOFLOW_THREADS or 1)")
    p.add_argument("--out", default=None, help="write JSON envelope here "
                                               "(CSV sidecars alongside)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypoflow",
                description="Degenerate-SDE laboratory: flows, covariance "
                            "spectra, rank conditions, gradient and "
                            "continuity probes")
    sub = p.add_subparsers(dest="cmd", required=True)

    sp = sub.add_parser("check", help="rank condition at a point")
    _add_common(sp)
    sp.add_argument("--point", type=_floats, default=None)
    sp.add_argument("--j0", type=int, default=None)
    sp.add_argument("--tol", type=float, default=None)

    sp = sub.add_parser("constants", help="ball nondegeneracy constants")
    _add_common(sp)
    sp.add_argument("--R", type=float, default=None)
    sp.add_argument("--samples", type=int, default=None)
    sp.add_argument("--j0", type=int, default=None)

    sp = sub.add_parser("simulate", help="integrate sample paths")
    _add_common(sp)

    sp = sub.add_parser("malliavin", help="covariance matrices and spectra")
    _add_common(sp)

    sp = sub.add_parser("tail", help="small-eigenvalue tail probe")
    _add_common(sp)
    sp.add_argument("--eps", type=_floats, required=True,
                    help="descending eps grid, e.g. 1e-2,1e-3,1e-4")
    sp.add_argument("--directions", type=int, default=None)

    sp = sub.add_parser("moments", help="inverse determinant moments")
    _add_common(sp)
    sp.add_argument("--p", type=_floats, required=True)
    sp.add_argument("--schedule", type=_ints, required=True)

    sp = sub.add_parser("gradient", help="semigroup gradient estimate")
    _add_common(sp)
    sp.add_argument("--f", default=None, help="test function name")
    sp.add_argument("--xi", type=_floats, default=None)
    sp.add_argument("--estimator",
                    choices=("malliavin", "pathwise", "fd"), default=None)
    sp.add_argument("--fd-h", type=float, default=None, dest="fd_h")

    sp = sub.add_parser("feller", help="continuity-in-start-point probe")
    _add_common(sp)
    sp.add_argument("--f", default=None)
    sp.add_argument("--radii", type=_floats, required=True)
    sp.add_argument("--l", type=float, default=10.0)
    sp.add_argument("--direction", type=_floats, default=None)

    sp = sub.add_parser("zoo", help="list built-in models")
    sp.add_argument("action", nargs="?", choices=("list",),
                    default="list")
    sp.add_argument("--out", default=None)

    sp = sub.add_parser("validate", help="schema-check a config file")
    sp.add_argument("config", help="path to a JSON config")
    return p


_SKIP_KEYS = {"cmd", "out", "action"}


def _config_from_args(args) -> dict:
    cfg = {"probe": args.cmd}
    for key, value in vars(args).items():
        if key in _SKIP_KEYS or value is None:
            continue
        cfg[key] = value
    return cfg


def _summarize(env: report.ReportEnvelope) -> str:
    payload = env.payload
    probe = env.config["probe"]
    if probe == "zoo":
        lines = []
        for row in payload["models"]:
            facts = row["expected"]
            lines.append(f"{row['name']:22s} j0={facts.get('j0')} "
                         f"spans={facts.get('spans')} "
                         f"degenerate_noise={not facts.get('noise_full_rank')}"
                         f"  -- {row['citation']}")
        return "\n".join(lines)
    keys = [k for k in ("numerical_rank", "spans", "modulus", "c", "R1",
                        "R3", "C0", "value", "stderr", "slope", "det_M",
                        "lambda_min_max", "intercept", "exit_freq",
                        "explosion_rate", "stability_ratios")
            if k in payload]
    body = ", ".join(f"{k}={payload[k]}" for k in keys)
    return f"{probe}: {body}" if body else f"{probe}: done"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.cmd == "validate":
        try:
            config = json.loads(open(args.config).read())
        except (OSError, json.JSONDecodeError) as exc:
            print(f"cannot read config: {exc}", file=sys.stderr)
            return 1
        diags = report.validate_config(config)
        if diags:
            for d in diags:
                print(d)
            return 1
        print("config valid")
        return 0

    cfg = _config_from_args(args)
    try:
        env = report.run(cfg, out=getattr(args, "out", None))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HypothesisViolationError as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return 2
    except NumericalFailureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    print(_summarize(env))
    if env.csv_paths:
        print("csv:", ", ".join(env.csv_paths))
    return 0


if __name__ == "__main__":
    sys.exit(main())
