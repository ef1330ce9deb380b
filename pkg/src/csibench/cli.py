"""Command-line front end: simulated scans, loopbacks, calibration, analysis."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import clocking
from .capture import read_capture, write_capture
from .csikit import (
    CsiError,
    build_distortion_template,
    classify_distortion,
    DistortionTemplate,
    estimate_cfo_sfo,
    remove_distortion,
    stitch,
)
from .echoprobe import ScanPlan, expand_range, run_scan
from .impairments import PRESETS, load_profile
from .measure import csi_frame_from_record, record_from_rx, run_loopback
from .phy.frame import FrameConfig, FrameError, Guard
from .phy.rx import DecodeError
from .simnet import VirtualLink


class UsageError(ValueError):
    pass


def _resolve_profile(name: str):
    if name in PRESETS:
        return PRESETS[name]
    path = Path(name)
    if not path.exists():
        raise UsageError(f"profile {name!r} is neither a preset nor a readable file")
    return load_profile(path)


def _parse_range(spec: str) -> tuple:
    try:
        return tuple(expand_range(spec))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def cmd_scan(args) -> int:
    plan = ScanPlan(
        cf_points=_parse_range(args.cf),
        sf_points=_parse_range(args.sf),
        repeat=args.repeat,
        delay_us=args.delay,
        mcs=args.mcs,
        n_ess=args.ness,
        txcm=args.txcm,
        rxcm=args.rxcm,
        retry_limit=args.retries,
    )
    profile = _resolve_profile(args.profile)
    link = VirtualLink.symmetric(
        profile, latency_us=args.latency, loss_prob=args.loss, seed=args.seed
    )
    report, local, remote = run_scan(
        plan, link, fidelity=args.fidelity, nic_profiles=(profile, profile)
    )
    out = Path(args.out)
    write_capture(local, out.with_suffix(".csi"))
    write_capture(remote, out.with_suffix(".remote.csi"))
    out.with_suffix(".report.json").write_text(report.to_json())
    print(
        f"scan complete: {report.n_records} round-trip records, "
        f"{len(report.failures)} failures, "
        f"max round-trip {report.max_roundtrip_us():.1f} us, "
        f"virtual duration {report.duration_us / 1e6:.3f} s"
    )
    print(f"wrote {out.with_suffix('.csi')}, {out.with_suffix('.remote.csi')}, "
          f"{out.with_suffix('.report.json')}")
    return 0


def cmd_loopback(args) -> int:
    profile = _resolve_profile(args.profile)
    records = []
    for i in range(args.frames):
        payload = bytes((args.seed + i + j) % 256 for j in range(args.payload_len))
        cfg = FrameConfig.make(
            args.mode,
            mcs=args.mcs,
            guard=Guard.SHORT if args.short_gi else Guard.LONG,
            payload=payload,
            scrambler_seed=(args.seed + i) % 127 + 1,
            n_ess=args.ness,
            half_band=args.half_band,
        )
        res = run_loopback(cfg, profile, sample_rate=args.sf, seed=args.seed, stream=i)
        records.append(
            record_from_rx(res, timestamp_us=i * 1000, cf_hz=args.cf, sf_hz=args.sf
                           or cfg.nominal_rate, cfg=cfg)
        )
    write_capture(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def cmd_calibrate(args) -> int:
    records = read_capture(args.infile)
    frames = [csi_frame_from_record(r, args.tx_id, args.rx_id) for r in records]
    template = build_distortion_template(frames)
    template.save(args.out)
    kind = classify_distortion(template)
    print(
        f"template over {template.n_frames} frames, shape class {kind.value}, "
        f"saved to {args.out}"
    )
    return 0


def cmd_clean(args) -> int:
    records = read_capture(args.infile)
    template = DistortionTemplate.load(args.template)
    out_records = []
    for rec in records:
        frame = csi_frame_from_record(rec, args.tx_id, args.rx_id)
        cleaned = remove_distortion(frame, template)
        rec.csi = cleaned.values
        out_records.append(rec)
    write_capture(out_records, args.out)
    print(f"cleaned {len(out_records)} records into {args.out}")
    return 0


def cmd_stitch(args) -> int:
    records = read_capture(args.infile)
    frames = [csi_frame_from_record(r, args.tx_id, args.rx_id) for r in records]
    result = stitch(frames)
    lines = ["freq_hz,value,series_id"]
    for f, v in result["wideband"]:
        lines.append(f"{f:.3f},{20 * np.log10(abs(v)):.6f},mag_db")
    for f, v in result["wideband"]:
        lines.append(f"{f:.3f},{np.angle(v):.6f},phase_rad")
    Path(args.out).write_text("\n".join(lines) + "\n")
    res = result["overlap_residual"]
    print(
        f"stitched {len(result['wideband'])} tones; overlap residual "
        f"{res['mag_db_rms']:.4f} dB / {res['phase_rad_rms']:.4f} rad -> {args.out}"
    )
    return 0


def cmd_cfosfo(args) -> int:
    records = read_capture(args.infile)
    lines = ["record,cfo_preamble_hz,cfo_residual_hz,cfo_total_hz,sfo_ppm,residual_rms,n_symbols"]
    for i, rec in enumerate(records):
        if rec.n_data_symbols < 2:
            continue
        frame = csi_frame_from_record(rec)
        est = estimate_cfo_sfo(rec.data_csi, frame.grid, rec.sym_duration)
        total = rec.cfo_hz + est.cfo_hz
        lines.append(
            f"{i},{rec.cfo_hz:.3f},{est.cfo_hz:.3f},{total:.3f},"
            f"{est.sfo_ppm:.4f},{est.residual_rms:.6f},{est.n_symbols}"
        )
    body = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(body)
        print(f"wrote {len(lines) - 1} estimates to {args.out}")
    else:
        print(body, end="")
    return 0


def cmd_clock(args) -> int:
    if args.bw is None and args.cf is None:
        raise UsageError("clock needs --bw and/or --cf")
    if args.bw is not None:
        quad = clocking.quad_for_bandwidth(args.bw)
        clocks = clocking.derived_clocks(quad)
        print(
            f"quad (DIV_INT, REF_DIV, CLK_SEL, HT20_40) = "
            f"({quad.div_int}, {quad.ref_div}, {quad.clk_sel}, {quad.ht20_40})"
        )
        print(f"f_pll      {clocks.f_pll:.3f} Hz")
        print(f"f_digi_bb  {clocks.f_digi_bb:.3f} Hz")
        print(f"f_rx_adc   {clocks.f_rx_adc:.3f} Hz")
        print(f"f_tx_dac   {clocks.f_tx_dac:.3f} Hz")
        print(f"bandwidth  {clocks.bandwidth:.3f} Hz")
    if args.cf is not None:
        band = clocking.Band.BAND_5G if args.band == "5g" else clocking.Band.BAND_2G4
        q = clocking.quantize_carrier(args.cf, band)
        print(f"carrier grid step {q.step:.6f} Hz")
        print(f"lower  {q.lower:.3f} Hz")
        print(f"upper  {q.upper:.3f} Hz")
        print(f"chosen {q.chosen:.3f} Hz")
    return 0


def cmd_info(args) -> int:
    records = read_capture(args.infile)
    print(f"{args.infile}: {len(records)} records")
    for i, rec in enumerate(records):
        print(
            f"  [{i}] t={rec.timestamp_us}us cf={rec.cf_hz}Hz sf={rec.sf_hz}Hz "
            f"mode={rec.channel_mode.value}{' half' if rec.half_band else ''} "
            f"mcs={rec.mcs} seed={rec.seed} tones={len(rec.tone_indices)} "
            f"data_syms={rec.n_data_symbols} cfo={rec.cfo_hz:.3f}Hz "
            f"evm={rec.evm_db:.2f}dB"
        )
    return 0


def export_plotdata(records, kind: str) -> str:
    """CSV rows (subcarrier_or_freq, value, series_id) for plotting."""
    lines = ["subcarrier_or_freq,value,series_id"]
    if kind in ("mag", "phase"):
        for i, rec in enumerate(records):
            frame = csi_frame_from_record(rec)
            vals = frame.magnitude_db() if kind == "mag" else frame.phase_detrended()
            for k, v in zip(frame.grid.indices, vals):
                lines.append(f"{k},{v:.6f},{i}")
    elif kind == "template":
        frames = [csi_frame_from_record(r) for r in records]
        template = build_distortion_template(frames)
        for k, v in zip(template.indices, template.mag_db):
            lines.append(f"{k},{v:.6f},mag_db")
        for k, v in zip(template.indices, template.phase_rad):
            lines.append(f"{k},{v:.6f},phase_rad")
    elif kind == "stitched":
        frames = [csi_frame_from_record(r) for r in records]
        result = stitch(frames)
        for f, v in result["wideband"]:
            lines.append(f"{f:.3f},{20 * np.log10(abs(v)):.6f},mag_db")
        for f, v in result["wideband"]:
            lines.append(f"{f:.3f},{np.angle(v):.6f},phase_rad")
    else:
        raise UsageError(f"unknown export kind {kind!r}")
    return "\n".join(lines) + "\n"


def cmd_export(args) -> int:
    records = read_capture(args.infile)
    Path(args.out).write_text(export_plotdata(records, args.kind))
    print(f"exported {args.kind} data to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="csibench",
        description="Wi-Fi CSI measurement workbench over a simulated link",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="round-trip CSI scan over carrier/bandwidth grid")
    p.add_argument("--cf", required=True, help="carrier range start:step:stop in Hz")
    p.add_argument("--sf", required=True, help="bandwidth range start:step:stop in Hz")
    p.add_argument("--repeat", type=int, default=1)
    p.add_argument("--delay", type=float, default=5e3, help="spacing between exchanges, us")
    p.add_argument("--mcs", type=int, default=0)
    p.add_argument("--ness", type=int, default=0)
    p.add_argument("--txcm", type=int, default=1, help="transmit chain bitmask")
    p.add_argument("--rxcm", type=int, default=1, help="receive chain bitmask")
    p.add_argument("--mode", choices=["initiator", "responder", "pair"], default="pair",
                   help="accepted for interface parity; one process simulates both ends")
    p.add_argument("--profile", default="tracked")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--loss", type=float, default=0.0)
    p.add_argument("--latency", type=float, default=5.0, help="one-way link latency, us")
    p.add_argument("--retries", type=int, default=5)
    p.add_argument("--fidelity", choices=["phy", "protocol"], default="phy")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("loopback", help="single-link Tx/Rx frames through a profile")
    p.add_argument("--mode", default="ht20", choices=["nonht", "ht20", "ht40+", "ht40-"])
    p.add_argument("--mcs", type=int, default=0)
    p.add_argument("--short-gi", action="store_true")
    p.add_argument("--ness", type=int, default=0)
    p.add_argument("--half-band", action="store_true")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--payload-len", type=int, default=100)
    p.add_argument("--cf", type=float, default=2.412e9)
    p.add_argument("--sf", type=float, default=None, help="sample rate override, Hz")
    p.add_argument("--profile", default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_loopback)

    p = sub.add_parser("calibrate", help="build a distortion template from a capture")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tx-id", default="tx")
    p.add_argument("--rx-id", default="rx")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("clean", help="remove a stored distortion template")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--tx-id", default="tx")
    p.add_argument("--rx-id", default="rx")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("stitch", help="merge overlapping channels into wideband CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tx-id", default="tx")
    p.add_argument("--rx-id", default="rx")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_stitch)

    p = sub.add_parser("cfosfo", help="per-packet CFO/SFO estimates from data-CSI trains")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_cfosfo)

    p = sub.add_parser("clock", help="clocking math: bandwidth quads, carrier grid")
    p.add_argument("--bw", type=float, default=None)
    p.add_argument("--cf", type=float, default=None)
    p.add_argument("--band", choices=["2g4", "5g"], default="5g")
    p.set_defaults(func=cmd_clock)

    p = sub.add_parser("info", help="dump a capture file")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("export", help="plot-ready CSV from a capture")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--kind", choices=["mag", "phase", "template", "stitched"], required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (DecodeError, CsiError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    except (UsageError, FrameError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
