"""Command-line client for the scenario runner and the HTTP service.

The CLI is a thin layer: it builds the same scenario mapping the service
accepts, runs it in-process by default, or forwards it to a running
service when --server is given.  Failures print one machine-readable JSON
record on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from . import harness, presets
from .config import load_scenario
from .errors import PonqkdError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ponqkd",
        description="Key-rate analysis and signal-chain simulation for a "
        "point-to-multipoint CV-QKD access network",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_args(p, waveform: bool):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="TOML scenario file")
        src.add_argument("--preset", choices=presets.preset_names(), help="named preset")
        p.add_argument("--seed", type=int, default=None, help="root seed (unsigned 64-bit)")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument(
            "--format",
            choices=("csv", "summary", "both"),
            default="both",
            help="which output files to write",
        )
        p.add_argument("--server", default=None, help="base URL of a running service")
        if waveform:
            p.add_argument("--frames", type=int, default=None, help="number of frames")
            p.add_argument("--frame-symbols", type=int, default=None, help="quantum symbols per frame")

    kr = sub.add_parser("keyrate", help="model-only security evaluation")
    add_scenario_args(kr, waveform=False)

    sim = sub.add_parser("simulate", help="waveform Monte Carlo through the full chain")
    add_scenario_args(sim, waveform=True)

    sw = sub.add_parser("sweep", help="feeder-length sweep (model-only)")
    add_scenario_args(sw, waveform=False)
    sw.add_argument("--start-km", type=float, default=0.0)
    sw.add_argument("--stop-km", type=float, default=40.0)
    sw.add_argument("--points", type=int, default=41)

    pr = sub.add_parser("presets", help="preset utilities")
    pr_sub = pr.add_subparsers(dest="presets_command", required=True)
    pr_sub.add_parser("list", help="list available presets")

    srv = sub.add_parser("serve", help="run the HTTP service")
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--port", type=int, default=8000)
    return parser


def _scenario_from_args(args, model_only: bool) -> harness.ScenarioConfig:
    if args.config:
        cfg = load_scenario(args.config)
    else:
        cfg = harness.preset_scenario(args.preset)
    overrides = {"model_only": model_only}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        overrides["n_frames"] = args.frames
    if getattr(args, "frame_symbols", None) is not None:
        overrides["frame_symbols"] = args.frame_symbols
    return dataclasses.replace(cfg, **overrides)


def _formats(args):
    return ("csv", "summary") if args.format == "both" else (args.format,)


def _scenario_mapping(cfg: harness.ScenarioConfig, model_only: bool) -> dict:
    """Mapping accepted by the service endpoints (inline, no preset ref)."""
    out = {
        "schema_version": harness.SCHEMA_VERSION,
        "name": cfg.name,
        "seed": cfg.seed,
        "n_frames": cfg.n_frames,
        "frame_symbols": cfg.frame_symbols,
        "calibration_symbols": cfg.calibration_symbols,
        "protocol": dataclasses.asdict(cfg.protocol),
        "users": [dataclasses.asdict(u) for u in cfg.users],
        "waveform": dataclasses.asdict(cfg.waveform),
        "dsp": dataclasses.asdict(cfg.dsp),
    }
    if cfg.topology is not None:
        topo = dataclasses.asdict(cfg.topology)
        topo["drop_lengths_km"] = list(topo["drop_lengths_km"])
        out["topology"] = topo
    if cfg.user_templates:
        out["user_templates"] = [dataclasses.asdict(t) for t in cfg.user_templates]
    return out


def _remote_table(server: str, endpoint: str, payload: dict, client=None) -> harness.ResultTable:
    import httpx

    owned = client is None
    client = client or httpx.Client(base_url=server, timeout=None)
    try:
        resp = client.post(endpoint, json=payload)
        if resp.status_code != 200:
            raise PonqkdError(f"server returned {resp.status_code}: {resp.text}")
        data = resp.json()
    finally:
        if owned:
            client.close()
    rows = tuple(harness.ResultRow(**r) for r in data["rows"])
    per_user = {int(k): v for k, v in data["per_user"].items()}
    return harness.ResultTable(
        data["scenario"], data["mode"], data["seed"], rows, per_user, data["network"]
    )


def _print_table(table: harness.ResultTable):
    print(f"scenario {table.scenario} ({table.mode}, seed {table.seed})")
    for u in sorted(table.per_user):
        info = table.per_user[u]
        print(
            f"  user {u}: SKR {info['mean_skr_bps'] / 1e6:.4f} Mbps, "
            f"SNR {info['mean_snr']:.4f}, chi {info['mean_chi_be']:.5f} bits"
        )
    print(f"  network mean SKR: {table.mean_skr_bps / 1e6:.4f} Mbps")


def main(argv=None, *, http_client=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name in presets.preset_names():
                fanout, feeder, loss = presets.CAMPAIGNS[name]
                print(f"{name}: 1x{fanout} splitter, {feeder:g} km feeder, {loss:g} dB mean loss")
            return 0

        if args.command == "serve":
            import uvicorn

            from .service import app

            uvicorn.run(app, host=args.host, port=args.port)
            return 0

        if args.command in ("keyrate", "simulate"):
            model_only = args.command == "keyrate"
            cfg = _scenario_from_args(args, model_only)
            if args.server:
                payload = {k: v for k, v in _scenario_mapping(cfg, model_only).items()}
                table = _remote_table(args.server, f"/{args.command}", payload, http_client)
            else:
                table = harness.run_scenario(cfg)
            _print_table(table)
            if args.out:
                for path in harness.emit_outputs(table, args.out, _formats(args)):
                    print(f"wrote {path}")
            return 0

        if args.command == "sweep":
            cfg = _scenario_from_args(args, model_only=True)
            rows = harness.run_sweep(cfg, args.start_km, args.stop_km, args.points)
            table = harness.run_model_scenario(cfg)
            print(f"sweep {cfg.name}: {len(rows)} points, "
                  f"{rows[0].skr_bps / 1e6:.3f} -> {rows[-1].skr_bps / 1e6:.3f} Mbps")
            if args.out:
                for path in harness.emit_outputs(table, args.out, _formats(args), sweep_rows=rows):
                    print(f"wrote {path}")
            return 0

        raise PonqkdError(f"unknown command {args.command!r}")
    except PonqkdError as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1
    except OSError as exc:
        record = {"error": {"type": "OSError", "message": str(exc), "path": getattr(exc, "filename", None)}}
        print(json.dumps(record, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
