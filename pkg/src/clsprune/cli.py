"""Command-line front end.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import cost, diagnostics, scoring, selection, simulator, trace
from .errors import ClsPruneError, InvalidConfig

log = logging.getLogger("clsprune")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _budgets(text: str) -> list[int]:
    try:
        out = [_positive(part) for part in text.split(",") if part.strip()]
    except argparse.ArgumentTypeError as exc:
        raise argparse.ArgumentTypeError(f"bad budget list {text!r}: {exc}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty budget list")
    return out


def _k_range(text: str) -> list[int]:
    lo, sep, hi = text.partition("..")
    try:
        a, b = (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None
    if a < 1 or b < a:
        raise argparse.ArgumentTypeError(f"bad K range {text!r}")
    return list(range(a, b + 1))


def _emit(text: str, path: str | None) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_score(args) -> int:
    tr = trace.read_trace(args.trace).require(trace.Role.ENCODER)
    if args.layer is not None:
        result = scoring.encoder_layer_importance(tr, args.layer)
    else:
        result = scoring.encoder_ensemble_importance(tr, args.k, args.ensemble)
    _emit(result.to_json(), args.out)
    return EXIT_OK


def cmd_prune(args) -> int:
    scores = scoring.ImportanceScore.from_json(Path(args.scores).read_text(encoding="utf-8"))
    plan = selection.make_prune_plan(scores, args.keep, args.after_layer)
    _emit(plan.to_json(), args.out)
    return EXIT_OK


def cmd_diag(args) -> int:
    enc = trace.read_trace(args.enc).require(trace.Role.ENCODER)
    dec = trace.read_trace(args.dec).require(trace.Role.DECODER)
    report = diagnostics.consistency_report(enc, dec, args.budgets, args.k, args.ensemble)
    sweep = None
    if args.k_sweep is not None:
        sweep = diagnostics.k_sweep(enc, dec, args.budgets, args.k_sweep, args.ensemble)
    if args.out_csv:
        _emit(report.to_csv(), args.out_csv)
    _emit(diagnostics.report_json(report, sweep), args.out_json)
    return EXIT_OK


def cmd_sim(args) -> int:
    try:
        cfg = simulator.SimConfig(
            seed=args.seed,
            n_visual=args.tokens,
            width=args.width,
            heads=args.heads,
            enc_layers=args.enc_layers,
            dec_layers=args.dec_layers,
            outputs=args.outputs,
            planted=args.planted,
            gamma=args.gamma,
        )
    except InvalidConfig as exc:
        raise UsageError(str(exc)) from None
    out = simulator.simulate(cfg)
    dest = Path(args.out)
    dest.mkdir(parents=True, exist_ok=True)
    trace.write_trace(out.encoder_trace, dest / "enc.vtct")
    trace.write_trace(out.decoder_trace, dest / "dec.vtct")
    _emit(json.dumps(out.sidecar(), indent=2), str(dest / "sim.json"))
    log.info("wrote %s", dest)
    return EXIT_OK


def cmd_cost(args) -> int:
    try:
        dims = cost.ModelDims(
            d=args.d,
            ffn=args.ffn,
            layers=args.layers,
            n_text=args.text,
            n_vis_full=args.full,
            n_vis_kept=args.keep,
            prune_layer=args.after_layer,
        )
    except InvalidConfig as exc:
        raise UsageError(str(exc)) from None
    _emit(cost.cost_json(dims), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="clsprune", description="CLS-attention visual token pruning toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("score", help="importance scores from an encoder trace")
    s.add_argument("--trace", required=True)
    s.add_argument("--k", type=_positive, default=scoring.DEFAULT_K, help="layers in the ensemble (default 3)")
    s.add_argument("--ensemble", choices=[e.value for e in scoring.EnsembleFn], default="avg")
    s.add_argument("--layer", type=int, help="score a single encoder layer instead of an ensemble")
    s.add_argument("--out")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("prune", help="top-U selection from a score file")
    s.add_argument("--scores", required=True)
    s.add_argument("--keep", type=_positive, required=True)
    s.add_argument("--after-layer", type=_positive, help="prune after this LLM layer instead of before the LLM")
    s.add_argument("--out")
    s.set_defaults(func=cmd_prune)

    s = sub.add_parser("diag", help="encoder/decoder consistency report")
    s.add_argument("--enc", required=True)
    s.add_argument("--dec", required=True)
    s.add_argument("--budgets", type=_budgets, default=[64, 128])
    s.add_argument("--k", type=_positive, default=scoring.DEFAULT_K)
    s.add_argument("--ensemble", choices=[e.value for e in scoring.EnsembleFn], default="avg")
    s.add_argument("--k-sweep", type=_k_range, help="range A..B of ensemble sizes to aggregate")
    s.add_argument("--out-csv")
    s.add_argument("--out-json")
    s.set_defaults(func=cmd_diag)

    s = sub.add_parser("sim", help="generate traces with the toy simulator")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tokens", type=int, default=576)
    s.add_argument("--planted", type=int, default=64)
    s.add_argument("--gamma", type=float, default=4.0)
    s.add_argument("--width", type=int, default=64)
    s.add_argument("--heads", type=int, default=4)
    s.add_argument("--enc-layers", type=int, default=8)
    s.add_argument("--dec-layers", type=int, default=4)
    s.add_argument("--outputs", type=int, default=8)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("cost", help="prefill FLOPs and KV size before/after pruning")
    s.add_argument("--d", type=_positive, required=True)
    s.add_argument("--ffn", type=_positive, required=True)
    s.add_argument("--layers", type=_positive, required=True)
    s.add_argument("--text", type=_non_negative, required=True)
    s.add_argument("--full", type=_non_negative, required=True)
    s.add_argument("--keep", type=_non_negative, required=True)
    s.add_argument("--after-layer", type=_non_negative, default=0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_cost)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"clsprune {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ClsPruneError, OSError) as exc:
        print(f"clsprune {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
