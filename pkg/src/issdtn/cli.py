"""Command line front end.

    issdtn run-experiment e1 --out results/
    issdtn run-experiment e2
    issdtn run-emulation e3 --loss 0.10
    issdtn serve --port 8700
    issdtn export-db --store issdtn.db --out dump/

run-experiment drives the virtual-clock engine and writes a metrics
document plus the per-bundle trace CSV; run-emulation exercises the
loopback socket harness in wall-clock time.
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

from .config import SystemConfig, KeySettings
from .security import (derive_key, encrypted_size, pcb_encrypt, pib_create,
                       sha256_hex)
from .simengine import (E5_COUNTS, build_e1, build_e4, build_e5, load_profile,
                        run_scenario, ScenarioSpec, SimulationEngine)
from .store import BundleStore, _TABLES

E2_SIZES = (64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384)


def _write_result(out_dir: Path, name: str, metrics: dict,
                  trace_csv: str | None) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    doc_path = out_dir / f"{name}.metrics.json"
    doc_path.write_text(json.dumps(metrics, indent=2) + "\n",
                        encoding="utf-8")
    if trace_csv is not None:
        (out_dir / f"{name}.trace.csv").write_text(trace_csv,
                                                   encoding="utf-8")
    return doc_path


def _summary_line(m: dict) -> str:
    lat = m["latency"]
    return (f"{m['scenario']}: {m['delivered']}/{m['injected']} delivered"
            f" ({m['delivery_ratio']:.0%}), mean hops {m['mean_hops']:.2f},"
            f" median latency {lat['median_s']:.1f}s,"
            f" p95 {lat['p95_s']:.1f}s, max {lat['max_s']:.1f}s,"
            f" retrans {m['retransmissions']}, naks {m['naks']},"
            f" wall {m['wall_time_s']:.2f}s")


def security_bench(sizes=E2_SIZES, repeats: int = 50,
                   keys: KeySettings | None = None) -> dict:
    """Per-size encrypt+sign cost and ciphertext growth, post warm-up."""
    key = derive_key(keys or KeySettings())
    rows = []
    payload = b"w" * 256
    for _ in range(5):  # warm the cipher machinery before timing
        pcb = pcb_encrypt(payload, key)
        pib_create(sha256_hex(pcb.ciphertext.encode("ascii")), key)
    for size in sizes:
        payload = b"m" * size
        times = []
        enc_len = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            pcb = pcb_encrypt(payload, key)
            pib_create(sha256_hex(pcb.ciphertext.encode("ascii")), key)
            times.append((time.perf_counter() - t0) * 1000.0)
            enc_len = len(pcb.ciphertext)
        assert enc_len == encrypted_size(size)
        rows.append({
            "plaintext_bytes": size,
            "encrypted_bytes": enc_len,
            "overhead_pct": round(100.0 * (enc_len - size) / size, 1),
            "median_ms": round(statistics.median(times), 4),
            "max_ms": round(max(times), 4),
        })
    return {"scenario": "e2", "repeats": repeats, "rows": rows}


def _bench_csv(doc: dict) -> str:
    header = "plaintext_bytes,encrypted_bytes,overhead_pct,median_ms,max_ms"
    lines = [header]
    for r in doc["rows"]:
        lines.append(f"{r['plaintext_bytes']},{r['encrypted_bytes']},"
                     f"{r['overhead_pct']},{r['median_ms']},{r['max_ms']}")
    return "\n".join(lines) + "\n"


def cmd_run_experiment(args) -> int:
    out_dir = Path(args.out)
    if args.name == "e2":
        doc = security_bench()
        path = _write_result(out_dir, "e2", doc, _bench_csv(doc))
        print(f"{'size':>8} {'encrypted':>10} {'overhead':>9} {'median':>9}")
        for r in doc["rows"]:
            print(f"{r['plaintext_bytes']:>8} {r['encrypted_bytes']:>10}"
                  f" {r['overhead_pct']:>8.1f}% {r['median_ms']:>7.3f}ms")
        print(f"wrote {path}")
        return 0

    cfg = SystemConfig()
    if args.config:
        spec = ScenarioSpec.from_doc(
            json.loads(Path(args.config).read_text(encoding="utf-8")))
        specs = [spec]
    elif args.name == "e1":
        specs = [build_e1(cfg, seed=args.seed)]
    elif args.name == "e4":
        specs = [build_e4(cfg, seed=args.seed)]
    else:  # e5 sweep, one run per bundle count
        counts = [args.count] if args.count else list(E5_COUNTS)
        specs = [build_e5(cfg, count=n, seed=args.seed) for n in counts]

    failures = 0
    for spec in specs:
        result = run_scenario(spec, cfg)
        metrics = result.metrics.as_dict()
        path = _write_result(out_dir, spec.name, metrics, result.trace_csv)
        print(_summary_line(metrics))
        print(f"wrote {path}")
        if metrics["delivery_ratio"] < 1.0 and metrics["injected"]:
            failures += 1
    return 1 if failures else 0


def cmd_run_emulation(args) -> int:
    from . import netemu  # sockets and threads; import only when used

    out_dir = Path(args.out)
    if args.name == "e3":
        levels = [args.loss] if args.loss is not None \
            else list(netemu.E3_LOSS_LEVELS)
        results = []
        for i, loss in enumerate(levels):
            port = 0 if args.base_port == 0 else args.base_port + i
            row = netemu.run_loss_level(loss, count=args.count or 10,
                                        port=port, seed=args.seed)
            results.append(row)
            print(f"loss {loss:.0%}: {row['delivered']}/{row['count']}"
                  f" delivered, {row['sends']} sends,"
                  f" {row['retransmissions']} retrans, {row['naks']} naks")
        doc = {"scenario": "e3", "levels": results}
        path = _write_result(out_dir, "e3", doc, None)
        print(f"wrote {path}")
        return 0 if all(r["delivery_ratio"] == 1.0 for r in results) else 1

    if args.name == "e8":
        row = netemu.run_e8(port=args.base_port, count=args.count or 20,
                            loss=args.loss if args.loss is not None else 0.10)
        path = _write_result(out_dir, "e8", row, None)
        print(f"{row['delivered']}/{row['count']} delivered over"
              f" {row['sends']} sends at {row['loss_rate']:.0%} loss")
        print(f"wrote {path}")
        return 0 if row["delivery_ratio"] == 1.0 else 1

    row = netemu.run_e7(port=args.base_port,
                        down_remaining_s=args.duration or 20.0)
    path = _write_result(out_dir, "e7", row, None)
    print(f"raw transfer: {row['raw_delivered']}/{row['raw_attempted']}"
          f" during blackout; custody transfer delivered="
          f"{row['dtn_delivered']} after holding {row['dtn_held_s']:.1f}s")
    print(f"wrote {path}")
    return 0 if row["dtn_delivered"] and not row["raw_delivered"] else 1


def cmd_serve(args) -> int:
    from .api import ServiceSettings, serve

    settings = ServiceSettings.from_env()
    if args.host:
        settings.host = args.host
    if args.port:
        settings.port = args.port
    if args.mode:
        settings.mode = args.mode
    if args.seed is not None:
        settings.seed = args.seed
    if args.time_scale is not None:
        settings.time_scale = args.time_scale
    if args.store is not None:
        settings.store_path = args.store
    serve(settings)
    return 0


def cmd_export_db(args) -> int:
    store = BundleStore(args.store)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for table in _TABLES:
        dest = out_dir / f"{table}.csv"
        n = store.export_csv(table, dest)
        print(f"{table}: {n} rows -> {dest}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="issdtn",
        description="Delay-tolerant ISS uplink simulator and emulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    exp = sub.add_parser("run-experiment",
                         help="virtual-clock scenario runs")
    exp.add_argument("name", choices=["e1", "e2", "e4", "e5"])
    exp.add_argument("--config", help="scenario spec JSON overriding"
                     " the built-in profile")
    exp.add_argument("--seed", type=int, default=1)
    exp.add_argument("--out", default="results")
    exp.add_argument("--count", type=int,
                     help="e5 only: single bundle count instead of the sweep")
    exp.set_defaults(func=cmd_run_experiment)

    emu = sub.add_parser("run-emulation",
                         help="loopback socket runs, wall-clock")
    emu.add_argument("name", choices=["e3", "e7", "e8"])
    emu.add_argument("--loss", type=float,
                     help="single loss rate for e3, rate for e8")
    emu.add_argument("--count", type=int,
                     help="bundles per level (e3 default 10, e8 default 20)")
    emu.add_argument("--duration", type=float,
                     help="e7: seconds of blackout remaining at start")
    emu.add_argument("--seed", type=int)
    emu.add_argument("--base-port", type=int, default=0,
                     help="0 lets the OS pick free ports")
    emu.add_argument("--out", default="results")
    emu.set_defaults(func=cmd_run_emulation)

    srv = sub.add_parser("serve", help="run the HTTP/WebSocket service")
    srv.add_argument("--host")
    srv.add_argument("--port", type=int)
    srv.add_argument("--mode", choices=["simulation", "emulation"])
    srv.add_argument("--seed", type=int)
    srv.add_argument("--time-scale", type=float, dest="time_scale")
    srv.add_argument("--store")
    srv.set_defaults(func=cmd_serve)

    exp_db = sub.add_parser("export-db",
                            help="dump the bundle store tables as CSV")
    exp_db.add_argument("--store", required=True)
    exp_db.add_argument("--out", default="dump")
    exp_db.set_defaults(func=cmd_export_db)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
