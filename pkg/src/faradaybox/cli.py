"""Command-line entry points.

    faradaybox run <scenario.json> [--deterministic] [--report out.json]
    faradaybox linkbudget --ptx ... [--json-only]
    faradaybox backend --listen ... --box-token ...
    faradaybox serve --scenario <file> --listen <addr> --time-scale <x>
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from . import radio
from .backend import ApCredentials, Backend
from .sim import (
    EXIT_INVALID_SCENARIO,
    Scenario,
    ScenarioError,
    report_to_json,
    run_scenario,
)


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = Scenario.load(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    report, code = run_scenario(scenario)
    if args.report:
        with open(args.report, "wb") as fh:
            fh.write(report_to_json(report))
    keys = report["keys"]
    print(f"scenario {report['scenario']}: {'PASS' if report['passed'] else 'FAIL'}")
    print(
        f"  provisioned {report['provisioned']}/{report['placed']} placed; keys "
        f"acquired={keys['acquired']} spent={keys['spent']} remaining={keys['remaining']} "
        f"panic_erased={keys['panic_erased']}"
    )
    if report["eavesdropper"]:
        e = report["eavesdropper"]
        print(
            f"  eavesdropper: {e['frames_decodable']}/{e['frames_seen']} frames decodable, "
            f"box-tx bytes decoded {e['decoded_box_tx_bytes']}, "
            f"key-pattern matches {e['key_pattern_matches']}"
        )
    for result in report["assertions"]:
        mark = "ok " if result["passed"] else "FAIL"
        print(f"  [{mark}] {result['assertion']}: expected {result['expected']}, actual {result['actual']}")
    for entry in report["transcript"]:
        print(f"  speaker @{entry['t_us']/1e6:9.3f}s  {entry['text']}")
    return code


def _cmd_linkbudget(args: argparse.Namespace) -> int:
    budget = radio.LinkBudget(
        ptx_dbm=args.ptx,
        gtx_db=args.gtx,
        grx_db=args.grx,
        lbox_db=args.lbox,
        distance_cm=args.distance_cm,
        freq_mhz=args.freq_mhz,
    )
    params = radio.ChannelParams(bandwidth_hz=args.bandwidth_hz, data_rate_bps=args.rate_bps)
    verdict = radio.reception_verdict(budget, params, args.sensitivity)
    record = dict(verdict.as_dict(), rx_sensitivity_dbm=args.sensitivity)
    if not args.json_only:
        rows = [
            ("transmit power", f"{args.ptx:10.2f} dBm"),
            ("tx gain", f"{args.gtx:10.2f} dB"),
            ("rx gain", f"{args.grx:10.2f} dB"),
            ("box shielding", f"{args.lbox:10.2f} dB"),
            ("path loss", f"{radio.fspl_db(args.distance_cm, args.freq_mhz):10.2f} dB"),
            ("received power", f"{verdict.prx_dbm:10.2f} dBm"),
            ("noise floor", f"{verdict.noise_floor_dbm:10.2f} dBm"),
            ("snr", f"{verdict.snr_db:10.2f} dB"),
            ("required snr", f"{verdict.required_snr_db:10.2f} dB"),
            ("above sensitivity", str(verdict.above_sensitivity)),
            ("above capacity threshold", str(verdict.above_capacity_threshold)),
            ("decodable", str(verdict.decodable)),
        ]
        width = max(len(label) for label, _ in rows)
        for label, value in rows:
            print(f"{label:<{width}}  {value}")
    print(json.dumps(record, sort_keys=True))
    return 0


class _BackendHandler(BaseHTTPRequestHandler):
    backend: Backend
    state_file: str | None = None

    def log_message(self, fmt, *args):  # quiet by default
        logging.getLogger("faradaybox.backend.http").debug(fmt, *args)

    def _now_us(self) -> int:
        return time.time_ns() // 1000

    def _dispatch(self, method: str) -> None:
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        length = int(self.headers.get("Content-Length", "0"))
        body = self.rfile.read(length) if length else b""
        status, payload = self.backend.handle(
            method,
            url.path,
            query=query,
            headers={"X-Box-Token": self.headers.get("X-Box-Token", "")},
            body=body,
            now=self._now_us(),
        )
        mutating = method == "POST" or (method == "GET" and url.path == "/keys")
        if self.state_file and mutating and status == 200:
            self.backend.save_state(self.state_file)
        self.send_response(status)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):  # noqa: N802
        self._dispatch("GET")

    def do_POST(self):  # noqa: N802
        self._dispatch("POST")


def _cmd_backend(args: argparse.Namespace) -> int:
    backend = Backend(
        rng=random.SystemRandom(),
        box_token=args.box_token,
        credentials=ApCredentials(
            ssid=args.ssid, passphrase=args.passphrase, server_address=args.server_address
        ),
        blacklist_timeout_us=int(args.blacklist_hours * 3600 * 1e6),
    )
    import os

    if args.state_file and os.path.exists(args.state_file):
        backend.load_state(args.state_file)
    for spec in args.image or []:
        try:
            name, kind, size = spec.split(":")
        except ValueError:
            print(f"bad --image spec {spec!r}, want name:kind:size", file=sys.stderr)
            return 2
        if kind == "bootloader_stage":
            backend.build_bootloader_stage(name, int(size))
        elif kind == "runtime_template":
            backend.build_runtime_template(name, int(size))
        else:
            print(f"unknown image kind {kind!r}", file=sys.stderr)
            return 2
    if args.stock:
        backend.create_keys(args.stock)
        if args.state_file:
            backend.save_state(args.state_file)
    host, _, port = args.listen.rpartition(":")
    handler = type(
        "BoundBackendHandler",
        (_BackendHandler,),
        {"backend": backend, "state_file": args.state_file},
    )
    server = ThreadingHTTPServer((host or "127.0.0.1", int(port)), handler)
    print(f"backend listening on http://{args.listen}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        if args.state_file:
            backend.save_state(args.state_file)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .control import serve

    try:
        scenario = Scenario.load(args.scenario)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID_SCENARIO
    serve(scenario, args.listen, args.time_scale)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="faradaybox")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario file and evaluate its assertions")
    p_run.add_argument("scenario")
    p_run.add_argument(
        "--deterministic",
        action="store_true",
        help="single ordered event loop (the default and only mode for run)",
    )
    p_run.add_argument("--report", help="write the RunReport JSON here")
    p_run.set_defaults(fn=_cmd_run)

    p_lb = sub.add_parser("linkbudget", help="print a reception verdict table")
    p_lb.add_argument("--ptx", type=float, required=True, help="transmit power (dBm)")
    p_lb.add_argument("--gtx", type=float, default=0.0, help="transmitter gain (dB)")
    p_lb.add_argument("--grx", type=float, default=0.0, help="receiver gain (dB)")
    p_lb.add_argument("--lbox", type=float, default=0.0, help="box shielding (dB)")
    p_lb.add_argument("--distance-cm", type=float, required=True)
    p_lb.add_argument("--freq-mhz", type=float, default=2400.0)
    p_lb.add_argument("--bandwidth-hz", type=float, default=20e6)
    p_lb.add_argument("--rate-bps", type=float, default=150e6)
    p_lb.add_argument("--sensitivity", type=float, default=-96.0)
    p_lb.add_argument("--json-only", action="store_true")
    p_lb.set_defaults(fn=_cmd_linkbudget)

    p_be = sub.add_parser("backend", help="run the backend as a real HTTP service")
    p_be.add_argument("--state-file", help="database snapshot path")
    p_be.add_argument("--listen", default="127.0.0.1:8736")
    p_be.add_argument("--box-token", default="shift-token")
    p_be.add_argument("--blacklist-hours", type=float, default=24.0)
    p_be.add_argument("--ssid", default="backend-net")
    p_be.add_argument("--passphrase", default="backend-pass")
    p_be.add_argument("--server-address", default="backend.local")
    p_be.add_argument("--stock", type=int, default=0, help="create this many fresh keys at start")
    p_be.add_argument(
        "--image",
        action="append",
        help="build an image at start: name:kind:size (kind bootloader_stage|runtime_template)",
    )
    p_be.set_defaults(fn=_cmd_backend)

    p_sv = sub.add_parser("serve", help="interactive mode with the control API")
    p_sv.add_argument("--scenario", required=True)
    p_sv.add_argument("--listen", default="127.0.0.1:8737")
    p_sv.add_argument("--time-scale", type=float, default=1.0)
    p_sv.set_defaults(fn=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
