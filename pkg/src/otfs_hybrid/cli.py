"""Command line entry point: ``sweep``, ``selftest`` and ``plotdata``."""

from __future__ import annotations

import argparse
import logging
import sys
from collections import defaultdict
from pathlib import Path

from . import harness

log = logging.getLogger("otfs_hybrid")


def _floats(text: str) -> list[float]:
    """Comma list or start:stop:step range (stop inclusive)."""
    if ":" in text:
        a, b, s = (float(x) for x in text.split(":"))
        out, v = [], a
        while v <= b + 1e-9:
            out.append(round(v, 10))
            v += s
        return out
    return [float(x) for x in text.split(",") if x]


def _sweep(args) -> int:
    cfg = harness.SimConfig.from_yaml(args.config)
    cfg = cfg.replace(seed=args.seed, workers=args.workers, frames=args.frames, receiver=args.receiver,
                      detector=args.detector, channel=args.channel, coding=args.coding, csi=args.csi,
                      frame=args.frame, snr_db=args.snr, velocities=args.speed)
    log.info("sweep: %s %s %s/%s, %d SNR x %d speeds", cfg.channel, cfg.frame, cfg.receiver, cfg.detector,
             len(cfg.snr_db), len(cfg.velocities))

    def progress(rec):
        log.info("v=%g km/h snr=%g dB: OTFS raw %.3g coded %.3g | OFDM raw %.3g coded %.3g (%d frames)",
                 rec.velocity_kmh, rec.snr_db, rec.otfs_raw_ber, rec.otfs_coded_ber, rec.ofdm_raw_ber,
                 rec.ofdm_coded_ber, rec.frames)

    records = harness.run_sweep(cfg, progress)
    path = harness.emit_results(records, args.out, args.format)
    log.info("wrote %d records to %s", len(records), path)
    return 0


def _selftest(args) -> int:
    from .selftest import run_all
    failures = 0
    for name, ok, detail in run_all():
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
        failures += not ok
    return 1 if failures else 0


def _plotdata(args) -> int:
    """One whitespace table per curve: SNR then BER columns."""
    records = harness.load_results(args.results)
    curves = defaultdict(list)
    for r in records:
        curves[(r.channel, r.velocity_kmh, r.frame, r.receiver, r.detector, r.csi, r.coding)].append(r)
    out = open(args.out, "w") if args.out else sys.stdout
    try:
        for key, recs in curves.items():
            out.write("# channel=%s speed=%g frame=%s receiver=%s detector=%s csi=%s coding=%s\n" % key)
            out.write("# snr_db otfs_raw ofdm_raw otfs_coded ofdm_coded\n")
            for r in sorted(recs, key=lambda r: r.snr_db):
                out.write(f"{r.snr_db:g} {r.otfs_raw_ber:.6g} {r.ofdm_raw_ber:.6g} "
                          f"{r.otfs_coded_ber:.6g} {r.ofdm_coded_ber:.6g}\n")
            out.write("\n\n")
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="otfs-hybrid", description="Hybrid OTFS/OFDM link-level simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="run a Monte-Carlo BER sweep")
    s.add_argument("--config", type=Path, help="YAML config (default: bundled settings)")
    s.add_argument("--out", type=Path, default=Path("results.csv"))
    s.add_argument("--format", choices=["csv", "json"])
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--frames", type=int, help="frame budget per point")
    s.add_argument("--snr", type=_floats, help="e.g. 14,18,22 or 14:26:2")
    s.add_argument("--speed", type=_floats, help="km/h, same syntax as --snr")
    s.add_argument("--receiver", choices=harness.RECEIVERS)
    s.add_argument("--detector", choices=harness.DETECTORS)
    s.add_argument("--channel", help="EPA, EVA, ETU or a CSV profile path")
    s.add_argument("--coding", choices=["none", "ldpc"])
    s.add_argument("--csi", choices=["perfect", "estimated"])
    s.add_argument("--frame", choices=["hybrid", "standalone"])
    s.set_defaults(func=_sweep)

    t = sub.add_parser("selftest", help="quick numerical self checks")
    t.set_defaults(func=_selftest)

    d = sub.add_parser("plotdata", help="turn a results file into per-curve tables")
    d.add_argument("results", type=Path)
    d.add_argument("--out", type=Path)
    d.set_defaults(func=_plotdata)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("error: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
