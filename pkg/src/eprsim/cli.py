"""Command line entry point: ``python -m eprsim <command>`` or ``eprsim <command>``.

Angles are given in degrees on the command line and converted to radians
immediately. Directions are written ``THETA,PHI`` (polar, azimuth).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from contextlib import contextmanager
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import bell, correlations
from .correlations import MeasurementSetting, TableNorm
from .ensemble import (
    EventBatch,
    Model,
    RunConfig,
    Sampler,
    estimate_correlation,
    expected_correlation,
    run,
    thin,
)
from .netharness import roles
from .netharness.local import READY_PREFIX
from .qlinalg import ContractError, Direction

EVENT_COLUMNS = (
    "pair_id", "axis_x", "axis_y", "axis_z", "branch",
    "a_theta_deg", "a_phi_deg", "b_theta_deg", "b_phi_deg", "outcome_a", "outcome_b",
)


# -- output ----------------------------------------------------------------------

def fmt_float(x: float) -> str:
    return format(x, ".17g")


def _json_value(v):
    if isinstance(v, float):
        return None if math.isnan(v) else v
    return v


def _csv_value(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else fmt_float(v)
    if v is None:
        return ""
    return str(v)


def write_records(rows: Iterable[dict], fmt: str, out, columns: Sequence[str] | None = None) -> None:
    """Write rows as csv (with header) or json-lines from one code path."""
    rows = iter(rows)
    first = next(rows, None)
    if first is None:
        if fmt == "csv" and columns:
            out.write(",".join(columns) + "\n")
        return
    columns = list(columns or first.keys())
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(columns)
        for row in _chain(first, rows):
            w.writerow([_csv_value(row[c]) for c in columns])
    else:
        for row in _chain(first, rows):
            # repr of a float is its shortest exact round-trip form
            out.write(json.dumps({c: _json_value(row[c]) for c in columns}, allow_nan=False) + "\n")


def _chain(first, rest) -> Iterator:
    yield first
    yield from rest


@contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


# -- argument parsing ------------------------------------------------------------

def parse_direction(text: str) -> Direction:
    try:
        theta, phi = (math.radians(float(v)) for v in text.split(","))
    except ValueError:
        raise ValueError(f"expected THETA,PHI in degrees, got {text!r}") from None
    return Direction.from_polar(theta, phi)


def _direction_arg(text: str) -> Direction:
    try:
        return parse_direction(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _address_arg(text: str) -> roles.Address:
    try:
        return roles.parse_address(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _angles_arg(text: str) -> list[float]:
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("expected four comma-separated angles a,a',b,b'")
    return vals


def _add_common(p: argparse.ArgumentParser, *, seed=True, pairs=True, model=True, sampler=True, out=True) -> None:
    if seed:
        p.add_argument("--seed", type=int, default=1, help="64-bit seed; fully determines a run")
    if pairs:
        p.add_argument("--pairs", type=int, default=100_000, help="number of pairs")
    if model:
        p.add_argument("--model", choices=[m.value for m in Model], default=Model.DISENTANGLED.value,
                       help="pair model")
    if sampler:
        p.add_argument("--sampler", default="isotropic",
                       help="hidden-axis distribution: isotropic, planar or fixed:THETA,PHI (degrees)")
    if out:
        p.add_argument("--format", choices=["csv", "jsonl"], default="csv", help="output format")
        p.add_argument("--out", default=None, help="output path (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eprsim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="closed-form correlations and coincidence tables over a theta_ab sweep")
    _add_common(p, seed=False, pairs=False, model=False, sampler=False)
    p.add_argument("--model", choices=["entangled", "disentangled", "both"], default="both",
                   help="which models' coincidence probabilities to emit")
    p.add_argument("--normalization", choices=[TableNorm.RAW.value, TableNorm.PER_PAIRS.value],
                   default=TableNorm.PER_PAIRS.value, help="normalization of the disentangled table")
    p.add_argument("--theta-start", type=float, default=0.0, help="first theta_ab in degrees")
    p.add_argument("--theta-stop", type=float, default=180.0, help="last theta_ab in degrees (inclusive)")
    p.add_argument("--theta-step", type=float, default=1.0, help="sweep step in degrees")
    p.add_argument("--theta", type=float, nargs="+", default=None, help="explicit theta_ab list; overrides the sweep")

    p = sub.add_parser("simulate", help="Monte Carlo event generation with a correlation estimate")
    _add_common(p)
    p.add_argument("--theta-ab", type=float, default=None,
                   help="planar shortcut: a at azimuth 0, b at azimuth THETA_AB (degrees)")
    p.add_argument("--setting-a", default=None, help="setting a as THETA,PHI in degrees")
    p.add_argument("--setting-b", default=None, help="setting b as THETA,PHI in degrees")
    p.add_argument("--thin", type=float, default=None,
                   help="keep each event with this probability (0.25 emulates raw normalization)")
    p.add_argument("--summary-out", default=None, help="write the summary JSON here instead of stdout")

    p = sub.add_parser("chsh", help="CHSH value at fixed planar angles or by grid scan")
    _add_common(p, seed=False, pairs=False, model=False, sampler=False)
    p.add_argument("--model", choices=["entangled", "disentangled"], default="entangled",
                   help="entangled, or disentangled normalized to pairs")
    p.add_argument("--angles", type=_angles_arg, default=[0.0, 90.0, 45.0, 135.0],
                   help="planar azimuths a,a',b,b' in degrees")
    p.add_argument("--scan", type=int, default=None, metavar="N", help="scan an N-point azimuth grid per arm")

    p = sub.add_parser("net-source", help="stream particle frames to two detectors")
    _add_common(p, model=False, out=False)
    p.add_argument("--connect", type=_address_arg, action="append", required=True,
                   help="detector address host:port; give twice, wing A first")

    p = sub.add_parser("net-detector", help="measure particles locally and forward outcomes")
    p.add_argument("--wing", choices=["A", "B"], required=True, help="which arm this detector serves")
    p.add_argument("--setting", type=_direction_arg, required=True, help="THETA,PHI in degrees")
    p.add_argument("--listen", type=_address_arg, default=("127.0.0.1", 0), help="host:port to accept the source")
    p.add_argument("--connect", type=_address_arg, required=True, help="collector host:port")
    p.add_argument("--seed", type=int, default=1, help="seed shared with the source; keys the outcome draws")
    p.add_argument("--capture", default=None, help="copy every inbound byte to this file")

    p = sub.add_parser("net-collector", help="join detector results by pair id")
    p.add_argument("--listen", type=_address_arg, default=("127.0.0.1", 0), help="host:port to accept detectors")
    p.add_argument("--mismatch", action="store_true", help="join pair i of wing A with pair i+1 of wing B")
    p.add_argument("--capacity", type=int, default=1 << 22, help="join buffer capacity")
    p.add_argument("--timeout", type=float, default=None, help="give up if the run has not finished after this many seconds")
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")

    p = sub.add_parser("report", help="summary of the prefactor ladder, detection bookkeeping and CHSH values")
    p.add_argument("--theta-ab", type=float, default=0.0, help="planar angle in degrees")
    p.add_argument("--out", default=None, help="output path (default stdout)")
    return parser


# -- commands --------------------------------------------------------------------

def analytic_rows(thetas_deg: Sequence[float], model: str, normalization: TableNorm) -> Iterator[dict]:
    for deg in thetas_deg:
        s = MeasurementSetting.planar(0.0, math.radians(deg))
        row = {
            "theta_ab_deg": float(deg),
            "E_entangled": correlations.corr_entangled(s),
            "E_disentangled_raw": correlations.corr_disentangled_planar(s, TableNorm.RAW),
            "E_disentangled_per_pairs": correlations.corr_disentangled_planar(s, TableNorm.PER_PAIRS),
            "E_disentangled_isotropic": correlations.ensemble_corr_isotropic(s),
        }
        if model in ("entangled", "both"):
            t = correlations.coincidence_entangled(s)
            row.update(zip(("ent_pp", "ent_pm", "ent_mp", "ent_mm"), t.as_tuple()))
        if model in ("disentangled", "both"):
            t = correlations.coincidence_disentangled_planar(s, normalization)
            row.update(zip(("dis_pp", "dis_pm", "dis_mp", "dis_mm"), t.as_tuple()))
        yield row


def cmd_analytic(args) -> int:
    if args.theta is not None:
        thetas = args.theta
    else:
        if args.theta_step <= 0:
            raise _Usage("--theta-step must be positive")
        n = int(math.floor((args.theta_stop - args.theta_start) / args.theta_step + 1e-9)) + 1
        thetas = [args.theta_start + k * args.theta_step for k in range(max(n, 0))]
    with _output(args.out) as out:
        write_records(analytic_rows(thetas, args.model, TableNorm(args.normalization)), args.format, out)
    return 0


class _Usage(Exception):
    pass


def config_from_args(args) -> RunConfig:
    errors = []
    if args.pairs < 1:
        errors.append(f"--pairs must be >= 1 (got {args.pairs})")
    if not 0 <= args.seed < 1 << 64:
        errors.append(f"--seed must be an unsigned 64-bit integer (got {args.seed})")
    sampler = None
    try:
        sampler = Sampler.parse(args.sampler)
    except (ValueError, ContractError) as exc:
        errors.append(f"--sampler: {exc}")
    a = b = None
    if args.theta_ab is not None and (args.setting_a or args.setting_b):
        errors.append("--theta-ab cannot be combined with --setting-a/--setting-b")
    elif args.theta_ab is not None:
        a, b = Direction.planar(0.0), Direction.planar(math.radians(args.theta_ab))
    else:
        for name, text in (("--setting-a", args.setting_a), ("--setting-b", args.setting_b)):
            if text is None:
                errors.append(f"{name} (or --theta-ab) is required")
                continue
            try:
                d = parse_direction(text)
            except (ValueError, ContractError) as exc:
                errors.append(f"{name}: {exc}")
                continue
            a, b = (d, b) if name == "--setting-a" else (a, d)
    if args.thin is not None and not 0 < args.thin <= 1:
        errors.append(f"--thin must be in (0, 1] (got {args.thin})")
    if errors:
        raise _Usage("; ".join(errors))
    return RunConfig(args.pairs, args.seed, Model(args.model), sampler, MeasurementSetting(a, b))


def event_rows(batches, settings: MeasurementSetting) -> Iterator[dict]:
    a_th, a_ph = math.degrees(settings.a.theta), math.degrees(settings.a.phi)
    b_th, b_ph = math.degrees(settings.b.theta), math.degrees(settings.b.phi)
    for batch in batches:
        ax = batch.axis.tolist()
        for pid, (x, y, z), br, oa, ob in zip(batch.pair_id.tolist(), ax, batch.branch.tolist(),
                                              batch.outcome_a.tolist(), batch.outcome_b.tolist()):
            yield {"pair_id": pid, "axis_x": x, "axis_y": y, "axis_z": z, "branch": br,
                   "a_theta_deg": a_th, "a_phi_deg": a_ph, "b_theta_deg": b_th, "b_phi_deg": b_ph,
                   "outcome_a": oa, "outcome_b": ob}


def cmd_simulate(args) -> int:
    config = config_from_args(args)
    batches, est = run(config)
    if args.thin is not None:
        rng = np.random.default_rng(config.seed)
        batches = [thin(b, args.thin, rng) for b in batches]
        kept = sum(len(b) for b in batches)
        merged = EventBatch(*(np.concatenate([getattr(b, f) for b in batches])
                              for f in ("pair_id", "axis", "branch", "outcome_a", "outcome_b")),
                            settings=config.settings)
        est = estimate_correlation(merged) if kept >= 2 else est
    expected = expected_correlation(config)
    summary = {
        "model": config.model.value,
        "sampler": config.sampler.label(),
        "seed": config.seed,
        "pairs": config.n_pairs,
        "events": sum(len(b) for b in batches),
        "theta_ab_deg": math.degrees(config.settings.theta_ab),
        "E": est.value,
        "std_error": est.std_error,
        "n": est.n,
        "expected": expected,
        "within_3sigma": est.within(expected),
    }
    if args.out is not None:
        with _output(args.out) as out:
            write_records(event_rows(batches, config.settings), args.format, out, EVENT_COLUMNS)
    with _output(args.summary_out) as out:
        out.write(json.dumps(summary) + "\n")
    return 0


def _chsh_e(model: str):
    if model == "entangled":
        return bell.entangled_correlation
    return bell.disentangled_per_pairs_correlation


def chsh_row(r: bell.ChshResult) -> dict:
    s = r.setting
    return {
        "a_deg": math.degrees(s.a.phi) % 360, "a_prime_deg": math.degrees(s.a_prime.phi) % 360,
        "b_deg": math.degrees(s.b.phi) % 360, "b_prime_deg": math.degrees(s.b_prime.phi) % 360,
        "e_ab": r.e_ab, "e_ab_prime": r.e_abp, "e_a_prime_b": r.e_apb, "e_a_prime_b_prime": r.e_apbp,
        "s_value": r.s_value, "abs_s": abs(r.s_value),
    }


def cmd_chsh(args) -> int:
    e = _chsh_e(args.model)
    if args.scan is not None:
        if args.scan < 4:
            raise _Usage("--scan needs at least 4 angles per arm")
        result = bell.chsh_scan(e, args.scan)
    else:
        result = bell.chsh(e, bell.ChshSetting.planar(*(math.radians(t) for t in args.angles)))
    with _output(args.out) as out:
        write_records([dict(model=args.model, **chsh_row(result))], args.format, out)
    return 0


def _announce(addr) -> None:
    print(f"{READY_PREFIX}{roles.format_address(addr)}", flush=True)


def cmd_net_source(args) -> int:
    if len(args.connect) != 2:
        raise _Usage("--connect must be given exactly twice (wing A, then wing B)")
    if args.pairs < 0:
        raise _Usage("--pairs must be >= 0")
    try:
        report = roles.run_source(args.pairs, Sampler.parse(args.sampler), args.seed,
                                  {"A": args.connect[0], "B": args.connect[1]})
    except roles.SourceError as exc:
        print(json.dumps({"error": str(exc), "sent": exc.sent}), flush=True)
        return 1
    print(json.dumps({"pairs": report.n_pairs, "sent": report.sent}), flush=True)
    return 0


def cmd_net_detector(args) -> int:
    capture = open(args.capture, "wb") if args.capture else None
    try:
        report = roles.run_detector(args.wing, args.setting, args.listen, args.connect, args.seed,
                                    capture=capture, ready=_announce)
    finally:
        if capture is not None:
            capture.close()
    print(json.dumps(vars(report)), flush=True)
    return 0


def cmd_net_collector(args) -> int:
    report = roles.run_collector(args.listen, mismatch=args.mismatch, capacity=args.capacity,
                                 ready=_announce, timeout=args.timeout)
    with _output(args.out) as out:
        out.write(json.dumps(report.to_dict()) + "\n")
    return 0


def report_dict(theta_ab_deg: float) -> dict:
    s = MeasurementSetting.planar(0.0, math.radians(theta_ab_deg))
    z = Direction(0.0, 0.0, 1.0)
    det = correlations.detection_report(s)
    std = bell.ChshSetting.planar(*(math.radians(t) for t in (0, 90, 45, 135)))
    return {
        "theta_ab_deg": theta_ab_deg,
        "E_entangled": correlations.corr_entangled(s),
        "pair_product_aligned": correlations.pair_product_fixed_axis(MeasurementSetting(z, z), z),
        "E_isotropic_average": correlations.ensemble_corr_isotropic(s),
        "E_planar_raw": correlations.corr_disentangled_planar(s, TableNorm.RAW),
        "E_planar_per_pairs": correlations.corr_disentangled_planar(s, TableNorm.PER_PAIRS),
        "raw_coincidence_sum": det.raw_sum,
        "per_channel_scale": det.per_channel_scale,
        "entangled_coincidence_sum": det.entangled_sum,
        "chsh_entangled": bell.chsh(bell.entangled_correlation, std).s_value,
        "chsh_disentangled_per_pairs": bell.chsh(bell.disentangled_per_pairs_correlation, std).s_value,
        "notes": det.notes + [
            "CHSH: the entangled value 2*sqrt(2) ~ 2.828 exceeds the local bound 2; "
            "the disentangled value sqrt(2) does not.",
        ],
    }


def cmd_report(args) -> int:
    with _output(args.out) as out:
        out.write(json.dumps(report_dict(args.theta_ab), indent=2) + "\n")
    return 0


COMMANDS = {
    "analytic": cmd_analytic,
    "simulate": cmd_simulate,
    "chsh": cmd_chsh,
    "net-source": cmd_net_source,
    "net-detector": cmd_net_detector,
    "net-collector": cmd_net_collector,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        parser.error(str(exc))
    return 2
