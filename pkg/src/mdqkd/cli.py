"""Command-line entry point: ``mdqkd <command> ...``."""
import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from mdqkd import emulator, estimation
from mdqkd.errors import ValidationError
from mdqkd.orchestrator import analysis, report
from mdqkd.orchestrator.config import AdversarySpec, load_config
from mdqkd.orchestrator.protocol import run_protocol
from mdqkd.orchestrator.units import PAIRS


def parse_adversary(text):
    """``QKD_A1:leak_raw_key,CP_A2:silent+garbage_rbs``; ``honest`` or empty for none."""
    qkd = cp = ""
    for part in filter(None, (p.strip() for p in text.split(","))):
        if part == "honest":
            continue
        device, sep, behaviour = part.partition(":")
        if not sep:
            raise ValidationError(f"adversary entry {part!r} lacks ':<behaviour>'")
        if device.startswith("QKD_") and not qkd:
            qkd = f"{device[4:]}:{behaviour}"
        elif device.startswith("CP_") and not cp:
            cp = f"{device[3:]}:{behaviour}"
        else:
            raise ValidationError(f"adversary entry {part!r} is unknown or repeated")
    try:
        return AdversarySpec.parse(qkd, cp)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def parse_losses(text):
    """``start:stop:step`` (stop inclusive) or a comma list."""
    if ":" in text:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ValidationError("loss step must be positive")
        return list(np.round(np.arange(start, stop + step / 2, step), 9))
    return [float(x) for x in text.split(",")]


def cmd_simulate(args):
    cfg = load_config(args.params)
    if not cfg.synthetic:
        raise ValidationError("simulate needs a synthetic parameter file")
    src = cfg.source if args.rounds is None else replace(cfg.source, n_rounds=args.rounds)
    tables = []
    for j in PAIRS:
        log = emulator.generate_rounds(src, cfg.channel, args.seed, stream=j,
                                       method=cfg.generation)
        tables.append(emulator.aggregate(log, emulator.sift_masks(log)))
    emulator.save_counts(args.out, src, tables)
    print(f"wrote {args.out}: N = {src.n_rounds}, Z counts "
          + ", ".join(str(t.z_count) for t in tables))


def cmd_ingest(args):
    src, tables = emulator.load_counts(args.file)
    print(f"N = {src.n_rounds}")
    for j, t in enumerate(tables, start=1):
        print(f"pair {j}: z_count = {t.z_count}, qber_z = {float(t.qber_z()):.6f}")


def cmd_estimate(args):
    src, tables = emulator.load_counts(args.counts)
    budget = estimation.SecurityBudget(args.eps_sec, args.t_ev)
    rep = estimation.compose_report(tables, src, budget, args.rate, args.block,
                                    analysis.auth_cost())
    print("[summary]")
    for k, v in rep.as_dict().items():
        print(f"{k} = {v}")
    return 1 if rep.aborted else 0


def cmd_run(args):
    cfg = load_config(args.config)
    over = {}
    if args.adversary is not None:
        over["adversary"] = parse_adversary(args.adversary)
    if args.transport:
        over["transport"] = args.transport
    if args.seed is not None:
        over["seed"] = args.seed
    cfg = cfg.with_(**over)
    result = run_protocol(cfg)
    s_e = None
    if not result.aborted and not cfg.adversary.honest:
        s_e = analysis.eve_view(result)
    report.write_report(result, args.report, s_e=s_e)
    key_bits = 0 if result.aborted else len(result.s_a)
    print(f"verdict = {result.verdict}; key bits = {key_bits}; report in {args.report}")
    return 1 if result.aborted else 0


def cmd_rate_curve(args):
    cfg = load_config(args.config)
    print("loss_db  K_dishonest  K_honest")
    for loss, k_d, k_h in analysis.rate_curve(cfg, parse_losses(args.losses)):
        print(f"{loss:7.2f}  {k_d:.4e}  {k_h:.4e}")


def cmd_demo_otp(args):
    with open(args.image, "rb") as fh:
        image = fh.read()
    s_a, s_b = report.read_key(args.run, "s_a"), report.read_key(args.run, "s_b")
    if s_a is None or s_b is None:
        raise ValidationError(f"{args.run} holds no keys (aborted run?)")
    out = analysis.demo_otp(image, s_a, s_b, report.read_key(args.run, "s_e"))
    out_dir = args.out or args.run
    os.makedirs(out_dir, exist_ok=True)
    for name in ("ciphertext", "bob_plain", "eve_plain"):
        if out[name] is not None:
            with open(os.path.join(out_dir, f"{name}.bin"), "wb") as fh:
                fh.write(out[name])
    print(f"bob_plain == image: {out['bob_plain'] == bytes(image)}")
    if out["eve_plain"] is not None:
        print(f"eve_plain chi2 = {out['eve_chi2']:.2f}, p = {out['eve_p_value']:.4g}")


def build_parser():
    p = argparse.ArgumentParser(prog="mdqkd")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="emulate both pairs and write a counts file")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--rounds", type=int)
    s.add_argument("--params", required=True, help="synthetic scenario file")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("ingest", help="validate a counts file")
    s.add_argument("file")
    s.set_defaults(fn=cmd_ingest)

    s = sub.add_parser("estimate", help="key-length report from a counts file")
    s.add_argument("--counts", required=True)
    s.add_argument("--eps-sec", type=float, default=1e-8)
    s.add_argument("--t-ev", type=int, default=64)
    s.add_argument("--rate", type=float, default=0.81)
    s.add_argument("--block", type=int, default=1 << 16)
    s.set_defaults(fn=cmd_estimate)

    s = sub.add_parser("run", help="full protocol run")
    s.add_argument("--config", required=True)
    s.add_argument("--adversary", help="e.g. QKD_A1:leak_raw_key,CP_A2:silent")
    s.add_argument("--transport", choices=("bus", "socket"))
    s.add_argument("--seed", type=int)
    s.add_argument("--report", required=True, help="output directory")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("rate-curve", help="analytic key rate against channel loss")
    s.add_argument("--config", required=True)
    s.add_argument("--losses", default="10:40:2")
    s.set_defaults(fn=cmd_rate_curve)

    s = sub.add_parser("demo-otp", help="one-time-pad an image with a run's keys")
    s.add_argument("--image", required=True)
    s.add_argument("--run", required=True, help="report directory of a completed run")
    s.add_argument("--out", help="output directory (default: the run directory)")
    s.set_defaults(fn=cmd_demo_otp)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args) or 0
    except (ValidationError, OSError) as exc:
        print(f"mdqkd: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
