"""Deterministic discrete-event harness tying box, backend, nodes and
attacker together.

Time is integer microseconds. Every frame crosses the radio medium, and
the medium asks the link-budget math two questions per frame: can the
intended receiver decode it, and can the attacker. Attacker-decodable
bytes land in the eavesdrop log; everything the box transmits inside the
closed lid should stay out of it.

Scenario files are JSON; `run_scenario` replays the operator script and
evaluates the scenario's assertions into a RunReport whose JSON bytes are
reproducible for a given seed.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import crypto, radio
from .backend import ApCredentials, Backend
from .box import (
    Action,
    BoxConfig,
    BoxController,
    BoxEvent,
    EventKind,
    HsmRegion,
)
from .node import FactoryDefaults, Honesty, NodeMode, SensorNode, mac_from_index

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION_FAILED = 1
EXIT_INVALID_SCENARIO = 2


class ScenarioError(Exception):
    """Scenario file failed validation."""


# --- event loop -------------------------------------------------------------


class EventLoop:
    """Single-threaded priority queue over (timestamp, sequence)."""

    def __init__(self) -> None:
        self.now_us = 0
        self._seq = 0
        self._queue: list[tuple[int, int, Callable[[], None]]] = []

    def schedule(self, delay_us: int, fn: Callable[[], None]) -> None:
        if delay_us < 0:
            raise ValueError("cannot schedule into the past")
        heapq.heappush(self._queue, (self.now_us + delay_us, self._seq, fn))
        self._seq += 1

    def schedule_at(self, t_us: int, fn: Callable[[], None]) -> None:
        self.schedule(max(0, t_us - self.now_us), fn)

    def run_until_idle(self, limit_us: Optional[int] = None) -> None:
        while self._queue:
            t, _, fn = self._queue[0]
            if limit_us is not None and t > limit_us:
                break
            heapq.heappop(self._queue)
            if t < self.now_us:
                raise RuntimeError("event executed out of order")
            self.now_us = t
            fn()
        if limit_us is not None and limit_us > self.now_us:
            self.now_us = limit_us

    def run_due(self, until_us: int) -> None:
        """Interactive mode: execute everything due up to until_us."""
        self.run_until_idle(limit_us=until_us)

    def pending(self) -> int:
        return len(self._queue)


# --- scenario schema --------------------------------------------------------


@dataclass
class ChannelConfig:
    bandwidth_hz: float = 20e6
    transfer_rate_bps: float = 150e6
    node_gate_rate_bps: float = 1e6
    attacker_rate_bps: float = 150e6


@dataclass
class BoxScenarioConfig:
    key_threshold: int = 1
    deploy_timeout_s: float = 60.0
    lbox_db: float = 40.0
    hw_attenuation_db: float = 60.0
    target_prx_dbm: float = -89.0
    worst_case_distance_cm: float = 30.0
    freq_mhz: float = 2400.0
    wifi_channel: int = 6
    monitor_sensitivity_dbm: float = -96.0
    rx_sensitivity_dbm: float = -96.0
    acquire_keys: int = 10


@dataclass
class ImageConfig:
    name: str
    kind: str  # "bootloader_stage" | "runtime_template"
    payload_size: int = 4096


@dataclass
class BackendScenarioConfig:
    box_token: str = "shift-token"
    blacklist_hours: float = 24.0
    ssid: str = "backend-net"
    passphrase: str = "backend-pass"
    server_address: str = "backend.sim"
    key_stock: int = 12
    rx_sensitivity_dbm: float = -96.0
    field_distance_cm: float = 1000.0
    images: list[ImageConfig] = field(default_factory=list)


@dataclass
class NodeConfig:
    id: int
    distance_cm: float = 20.0
    honesty: str = "honest"
    image: str = "sensor-runtime"
    field_distance_cm: float = 1000.0
    retained_bytes: int = 1024


@dataclass
class AttackerConfig:
    kind: str  # "eavesdropper" | "rogue_ap"
    distance_cm: float = 50.0
    grx_db: float = 30.0
    gtx_db: float = 0.0
    ptx_dbm: float = 20.0
    sensitivity_dbm: float = -96.0
    field_distance_cm: float = 500.0
    active_at_s: float = 0.0


@dataclass
class ScriptStep:
    at_s: float
    action: str
    nodes: list[int] = field(default_factory=list)


@dataclass
class Scenario:
    name: str
    seed: int
    channel: ChannelConfig
    box: BoxScenarioConfig
    backend: BackendScenarioConfig
    node_defaults: FactoryDefaults
    nodes: list[NodeConfig]
    attacker: Optional[AttackerConfig]
    operator_script: list[ScriptStep]
    assertions: dict

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        try:
            channel = ChannelConfig(**data.get("channel", {}))
            box = BoxScenarioConfig(**data.get("box", {}))
            backend_data = dict(data.get("backend", {}))
            images = [ImageConfig(**img) for img in backend_data.pop("images", [])]
            backend = BackendScenarioConfig(images=images, **backend_data)
            defaults = FactoryDefaults(**data.get("node_defaults", {}))
            nodes = [NodeConfig(**n) for n in data.get("nodes", [])]
            attacker = (
                AttackerConfig(**data["attacker"]) if data.get("attacker") else None
            )
            script = [ScriptStep(**s) for s in data.get("operator_script", [])]
            scenario = cls(
                name=data.get("name", "unnamed"),
                seed=int(data.get("seed", 0)),
                channel=channel,
                box=box,
                backend=backend,
                node_defaults=defaults,
                nodes=nodes,
                attacker=attacker,
                operator_script=script,
                assertions=data.get("assertions", {}),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ScenarioError(f"bad scenario structure: {exc}") from exc
        scenario.validate()
        return scenario

    @classmethod
    def load(cls, path: str) -> "Scenario":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot load scenario {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self) -> None:
        image_names = {img.name for img in self.backend.images}
        kinds = {img.kind for img in self.backend.images}
        if not self.backend.images:
            raise ScenarioError("backend must define at least one image")
        bad_kinds = kinds - {"bootloader_stage", "runtime_template"}
        if bad_kinds:
            raise ScenarioError(f"unknown image kinds: {sorted(bad_kinds)}")
        if "bootloader_stage" not in kinds:
            raise ScenarioError("backend must define a bootloader_stage image")
        seen_ids = set()
        for node in self.nodes:
            if node.id in seen_ids:
                raise ScenarioError(f"duplicate node id {node.id}")
            seen_ids.add(node.id)
            if node.distance_cm <= 0 or node.field_distance_cm <= 0:
                raise ScenarioError(f"node {node.id}: distances must be positive")
            if node.image not in image_names:
                raise ScenarioError(f"node {node.id}: unknown image {node.image!r}")
            if node.honesty not in ("honest", "retains_data", "silent"):
                raise ScenarioError(f"node {node.id}: unknown honesty {node.honesty!r}")
        max_image = max(img.payload_size for img in self.backend.images)
        from .node import DEFAULT_BOOTLOADER_REGION, DEFAULT_MEMORY_SIZE

        writable = DEFAULT_MEMORY_SIZE - DEFAULT_BOOTLOADER_REGION
        if writable < 2 * max_image:
            raise ScenarioError(
                f"node memory {writable} B must be at least twice the largest "
                f"image ({max_image} B)"
            )
        if self.attacker and self.attacker.kind not in ("eavesdropper", "rogue_ap"):
            raise ScenarioError(f"unknown attacker kind {self.attacker.kind!r}")
        if self.attacker and self.attacker.distance_cm <= 0:
            raise ScenarioError("attacker distance must be positive")
        last = -1.0
        for step in self.operator_script:
            if step.at_s < last:
                raise ScenarioError("operator script must be time-ordered")
            last = step.at_s
        known = {
            "power_on",
            "press_acquire",
            "press_deploy",
            "close_lid",
            "open_lid",
            "place_nodes",
            "remove_nodes",
            "field_phase",
        }
        for step in self.operator_script:
            if step.action not in known:
                raise ScenarioError(f"unknown script action {step.action!r}")


# --- attacker state ---------------------------------------------------------


@dataclass
class EavesdropEntry:
    t_us: int
    direction: str  # "box-tx" | "node-tx" | "field"
    src: str
    prx_dbm: float
    snr_db: float
    decodable: bool
    nbytes: int


class Eavesdropper:
    """Passive listener with its own antenna gain and channel assumptions."""

    def __init__(self, cfg: AttackerConfig, channel: ChannelConfig, freq_mhz: float):
        self.cfg = cfg
        self.params = radio.ChannelParams(
            bandwidth_hz=channel.bandwidth_hz, data_rate_bps=channel.attacker_rate_bps
        )
        self.freq_mhz = freq_mhz
        self.entries: list[EavesdropEntry] = []
        self.captured = bytearray()
        self.decoded_box_tx_bytes = 0
        self.decoded_node_tx_bytes = 0
        self.decoded_field_bytes = 0

    def tap(
        self,
        t_us: int,
        direction: str,
        src: str,
        tx_power_dbm: float,
        distance_cm: float,
        lbox_db: float,
        payload: bytes,
    ) -> EavesdropEntry:
        verdict = radio.reception_verdict(
            radio.LinkBudget(
                ptx_dbm=tx_power_dbm,
                grx_db=self.cfg.grx_db,
                lbox_db=lbox_db,
                distance_cm=distance_cm,
                freq_mhz=self.freq_mhz,
            ),
            self.params,
            self.cfg.sensitivity_dbm,
        )
        nbytes = len(payload) if verdict.decodable else 0
        entry = EavesdropEntry(
            t_us=t_us,
            direction=direction,
            src=src,
            prx_dbm=verdict.prx_dbm,
            snr_db=verdict.snr_db,
            decodable=verdict.decodable,
            nbytes=nbytes,
        )
        self.entries.append(entry)
        if verdict.decodable:
            self.captured.extend(payload)
            if direction == "box-tx":
                self.decoded_box_tx_bytes += nbytes
            elif direction == "node-tx":
                self.decoded_node_tx_bytes += nbytes
            else:
                self.decoded_field_bytes += nbytes
        return entry

    def key_pattern_matches(self, secret_values: list[bytes]) -> int:
        """Occurrences of the placeholder or any issued key in the capture."""
        buf = bytes(self.captured)
        count = buf.count(crypto.KEY_PLACEHOLDER)
        for value in secret_values:
            count += buf.count(value)
        return count


# --- the simulation ---------------------------------------------------------

SCAN_DELAY_US = 10_000
SCAN_STAGGER_US = 1_000
PROCESSING_DELAY_US = 100


class Simulation:
    """One scenario instance: entities, medium, script, report."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.loop = EventLoop()
        self.log: list[str] = []

        backend_rng = random.Random(f"backend:{scenario.seed}")
        box_rng = random.Random(f"box:{scenario.seed}")
        self.payload_rng = random.Random(f"payload:{scenario.seed}")

        self.backend = Backend(
            rng=backend_rng,
            box_token=scenario.backend.box_token,
            credentials=ApCredentials(
                ssid=scenario.backend.ssid,
                passphrase=scenario.backend.passphrase,
                server_address=scenario.backend.server_address,
            ),
            blacklist_timeout_us=int(scenario.backend.blacklist_hours * 3600 * 1e6),
        )
        for img in scenario.backend.images:
            if img.kind == "bootloader_stage":
                self.backend.build_bootloader_stage(img.name, img.payload_size)
            else:
                self.backend.build_runtime_template(img.name, img.payload_size)
        if scenario.backend.key_stock:
            self.backend.create_keys(scenario.backend.key_stock)

        self.box = BoxController(
            hsm=HsmRegion.generate(box_rng),
            rng=box_rng,
            config=BoxConfig(
                key_threshold=scenario.box.key_threshold,
                deploy_timeout_us=int(scenario.box.deploy_timeout_s * 1e6),
                ssid=scenario.node_defaults.ssid,
                channel=scenario.box.wifi_channel,
            ),
            clock=lambda: self.loop.now_us,
        )
        self.box_tx_power_dbm = radio.calibrate_tx(
            target_prx_dbm=scenario.box.target_prx_dbm,
            worst_case_distance_cm=scenario.box.worst_case_distance_cm,
            freq_mhz=scenario.box.freq_mhz,
            hw_attenuation_db=scenario.box.hw_attenuation_db,
        ) - scenario.box.hw_attenuation_db  # effective radiated power

        self.nodes: dict[int, SensorNode] = {}
        self.node_cfg: dict[int, NodeConfig] = {}
        for cfg in scenario.nodes:
            node = SensorNode(
                mac=mac_from_index(scenario.seed, cfg.id),
                defaults=scenario.node_defaults,
                honesty=Honesty(cfg.honesty),
                retained_span=(0, cfg.retained_bytes),
            )
            self.nodes[cfg.id] = node
            self.node_cfg[cfg.id] = cfg

        self.placed: set[int] = set()
        self.joined_rogue: set[int] = set()
        self.attacker: Optional[Eavesdropper] = None
        self.rogue_active = False
        if scenario.attacker and scenario.attacker.kind == "eavesdropper":
            self.attacker = Eavesdropper(
                scenario.attacker, scenario.channel, scenario.box.freq_mhz
            )

        self.node_params = radio.ChannelParams(
            bandwidth_hz=scenario.channel.bandwidth_hz,
            data_rate_bps=scenario.channel.node_gate_rate_bps,
        )
        self.deploy_started_us: Optional[int] = None
        self.deploy_announced_us: Optional[int] = None
        self.node_transfer_us: dict[int, int] = {}
        self.readings_accepted = 0
        self.readings_rejected = 0
        self.dropped_frames = 0
        self.on_transcript: Optional[Callable[[], None]] = None

    # --- helpers ---

    def _note(self, msg: str) -> None:
        self.log.append(f"[{self.loop.now_us}] {msg}")
        log.debug("t=%d %s", self.loop.now_us, msg)

    def _transfer_us(self, nbytes: int) -> int:
        rate = self.scenario.channel.transfer_rate_bps
        return max(1, int(nbytes * 8 / rate * 1e6))

    def handle_actions(self, actions: list[Action]) -> None:
        for action in actions:
            if action.kind == "schedule_deploy_timeout":
                session_id = action.session_id
                self.loop.schedule(
                    action.delay_us or 0,
                    lambda sid=session_id: self._fire_deploy_timeout(sid),
                )
            elif action.kind == "network_start":
                self.deploy_started_us = self.loop.now_us
                self._note("box network up")
                self._scan_cycle()
                self._monitor_spectrum()
            elif action.kind == "network_stop":
                self._note("box network down")
            elif action.kind == "begin_acquire":
                self._note("acquire flow handled synchronously")
            elif action.kind == "say":
                self._note(f"speaker: {action.text}")
                if self.deploy_announced_us is None and action.utterance_id in (
                    "session-complete",
                    "session-complete-failures",
                    "no-nodes-found",
                ):
                    self.deploy_announced_us = self.loop.now_us
        if self.on_transcript:
            self.on_transcript()

    def _fire_deploy_timeout(self, session_id: Optional[int]) -> None:
        self.handle_actions(
            self.box.step(BoxEvent(EventKind.DEPLOY_TIMEOUT, session_id=session_id))
        )

    # --- radio paths ---

    def _deliver_in_box(
        self,
        src_label: str,
        direction: str,
        tx_power_dbm: float,
        distance_cm: float,
        rx_sensitivity_dbm: float,
        payload: bytes,
        on_delivery: Callable[[], None],
    ) -> None:
        """One in-box frame: gate on the receiver verdict, offer the bytes
        to the external attacker through the box wall."""
        scenario = self.scenario
        if self.attacker is not None:
            self.attacker.tap(
                self.loop.now_us,
                direction,
                src_label,
                tx_power_dbm,
                self.attacker.cfg.distance_cm,
                scenario.box.lbox_db,
                payload,
            )
        verdict = radio.reception_verdict(
            radio.LinkBudget(
                ptx_dbm=tx_power_dbm,
                distance_cm=distance_cm,
                freq_mhz=scenario.box.freq_mhz,
            ),
            self.node_params,
            rx_sensitivity_dbm,
        )
        if not verdict.decodable:
            self.dropped_frames += 1
            self._note(f"frame from {src_label} dropped (prx {verdict.prx_dbm:.1f} dBm)")
            return
        delay = self._transfer_us(len(payload)) + PROCESSING_DELAY_US
        self.loop.schedule(delay, on_delivery)

    # --- deploy phase: node bootstrap over frames ---

    def _scan_cycle(self) -> None:
        """All placed nodes scan and join once the box network appears."""
        for idx, node_id in enumerate(sorted(self.placed)):
            self.loop.schedule(
                SCAN_DELAY_US + idx * SCAN_STAGGER_US,
                lambda nid=node_id: self._node_scan(nid),
            )

    def _visible_networks_for_node(self, node_id: int) -> list[tuple[str, str, float]]:
        nets = []
        cfg = self.node_cfg[node_id]
        scenario = self.scenario
        if self.box.network_up:
            rssi = self.box_tx_power_dbm - radio.fspl_db(
                cfg.distance_cm, scenario.box.freq_mhz
            )
            nets.append(("box", scenario.node_defaults.ssid, rssi))
        if self.rogue_active and scenario.attacker is not None:
            lbox = scenario.box.lbox_db if not self.box.lid_open else 0.0
            rssi = radio.rogue_power_inside_dbm(
                scenario.attacker.ptx_dbm,
                scenario.attacker.gtx_db,
                scenario.attacker.distance_cm,
                scenario.box.freq_mhz,
                lbox,
            )
            nets.append(("rogue", scenario.node_defaults.ssid, rssi))
        return nets

    def _node_scan(self, node_id: int) -> None:
        node = self.nodes[node_id]
        if node.mode is not NodeMode.BOOTLOADER or node.honesty is Honesty.SILENT:
            return
        joined = node.scan_and_join(self._visible_networks_for_node(node_id))
        if joined is None:
            return
        self._note(f"node {node_id} joined network of {joined}")
        if joined == "rogue":
            self.joined_rogue.add(node_id)
            return
        self._node_request_bootloader(node_id)

    def _node_request_bootloader(self, node_id: int) -> None:
        node = self.nodes[node_id]
        cfg = self.node_cfg[node_id]
        memsize = len(node.memory.bootloadable_region)
        request = f"GET {node.defaults.ota_bootloader_path}?memsize={memsize}".encode()
        self._deliver_in_box(
            f"node:{node.mac}",
            "node-tx",
            node.tx_power_dbm,
            cfg.distance_cm,
            self.scenario.box.rx_sensitivity_dbm,
            request,
            lambda: self._box_serve_bootloader(node_id, memsize),
        )

    def _box_serve_bootloader(self, node_id: int, memsize: int) -> None:
        node = self.nodes[node_id]
        cfg = self.node_cfg[node_id]
        status, body = self.box.handle_ota(
            "GET",
            node.defaults.ota_bootloader_path,
            query={"memsize": str(memsize)},
            source_mac=node.mac,
        )
        if status != 200:
            self._note(f"bootloader request from node {node_id} refused ({status})")
            return
        payload = f"{status} ".encode() + body
        self._track_transfer(node_id, payload)
        self._deliver_in_box(
            "box",
            "box-tx",
            self.box_tx_power_dbm,
            cfg.distance_cm,
            node.rx_sensitivity_dbm,
            payload,
            lambda: self._node_got_bootloader(node_id, body),
        )

    def _node_got_bootloader(self, node_id: int, body: bytes) -> None:
        node = self.nodes[node_id]
        if not self.box.network_up:
            self.dropped_frames += 1
            return
        stage = crypto.decode_container(body)
        if not node.install_bootloader_stage(stage):
            self._note(f"node {node_id} rejected bootloader stage")
            return
        proof = node.answer_erasure()
        if proof is None:
            return
        cfg = self.node_cfg[node_id]
        request = f"POST {node.defaults.ota_erasure_path} ".encode() + crypto.encode_erasure_proof(proof)
        self._deliver_in_box(
            f"node:{node.mac}",
            "node-tx",
            node.tx_power_dbm,
            cfg.distance_cm,
            self.scenario.box.rx_sensitivity_dbm,
            request,
            lambda: self._box_verify_erasure(node_id, proof),
        )

    def _box_verify_erasure(self, node_id: int, proof: crypto.ErasureProof) -> None:
        node = self.nodes[node_id]
        cfg = self.node_cfg[node_id]
        status, body = self.box.handle_ota(
            "POST",
            node.defaults.ota_erasure_path,
            source_mac=node.mac,
            body=crypto.encode_erasure_proof(proof),
        )
        payload = f"{status} ".encode() + body
        self._deliver_in_box(
            "box",
            "box-tx",
            self.box_tx_power_dbm,
            cfg.distance_cm,
            node.rx_sensitivity_dbm,
            payload,
            lambda: self._node_got_erasure_verdict(node_id, status),
        )

    def _node_got_erasure_verdict(self, node_id: int, status: int) -> None:
        node = self.nodes[node_id]
        if not self.box.network_up:
            self.dropped_frames += 1
            return
        node.erasure_ok = status == 200
        if status != 200:
            self._note(f"node {node_id} failed secure erasure")
            return
        cfg = self.node_cfg[node_id]
        request = f"GET {node.defaults.ota_runtime_path}?image={cfg.image}".encode()
        self._deliver_in_box(
            f"node:{node.mac}",
            "node-tx",
            node.tx_power_dbm,
            cfg.distance_cm,
            self.scenario.box.rx_sensitivity_dbm,
            request,
            lambda: self._box_serve_runtime(node_id),
        )

    def _box_serve_runtime(self, node_id: int) -> None:
        node = self.nodes[node_id]
        cfg = self.node_cfg[node_id]
        status, body = self.box.handle_ota(
            "GET",
            node.defaults.ota_runtime_path,
            query={"image": cfg.image},
            source_mac=node.mac,
        )
        if status != 200:
            self._note(f"runtime request from node {node_id} refused ({status})")
            return
        payload = f"{status} ".encode() + body
        self._track_transfer(node_id, payload)
        self._deliver_in_box(
            "box",
            "box-tx",
            self.box_tx_power_dbm,
            cfg.distance_cm,
            node.rx_sensitivity_dbm,
            payload,
            lambda: self._node_got_runtime(node_id, body),
        )

    def _node_got_runtime(self, node_id: int, body: bytes) -> None:
        node = self.nodes[node_id]
        if not self.box.network_up:
            self.dropped_frames += 1
            return
        image = crypto.decode_container(body, name=self.node_cfg[node_id].image)
        if node.install_runtime(image):
            self._note(f"node {node_id} flashed and rebooted into runtime")
        else:
            self._note(f"node {node_id} rejected runtime image")

    def _track_transfer(self, node_id: int, payload: bytes) -> None:
        self.node_transfer_us[node_id] = self.node_transfer_us.get(node_id, 0) + self._transfer_us(
            len(payload)
        )

    def _monitor_spectrum(self) -> None:
        observed: list[tuple[str, int, str]] = []
        scenario = self.scenario
        if self.box.network_up:
            observed.append((scenario.node_defaults.ssid, scenario.box.wifi_channel, "box"))
        if self.rogue_active and scenario.attacker is not None:
            lbox = scenario.box.lbox_db if not self.box.lid_open else 0.0
            prx_at_box = radio.rogue_power_inside_dbm(
                scenario.attacker.ptx_dbm,
                scenario.attacker.gtx_db,
                scenario.attacker.distance_cm,
                scenario.box.freq_mhz,
                lbox,
            )
            if prx_at_box >= scenario.box.monitor_sensitivity_dbm:
                observed.append(
                    (scenario.node_defaults.ssid, scenario.box.wifi_channel, "rogue")
                )
        event = self.box.monitor_spectrum(observed)
        if event is not None:
            self._note("box warned about a rogue network")
            if self.on_transcript:
                self.on_transcript()

    # --- operator actions ---

    def power_on(self) -> None:
        self.handle_actions(self.box.step(BoxEvent(EventKind.POWER_ON)))

    def press_acquire(self) -> None:
        scenario = self.scenario
        image_names = [img.name for img in scenario.backend.images]
        actions = self.box.acquire(
            lambda method, path, query=None, headers=None, body=b"", now=None: self.backend.handle(
                method, path, query=query, headers=headers, body=body, now=self.loop.now_us
            ),
            image_names,
            scenario.box.acquire_keys,
            scenario.backend.box_token,
        )
        self.handle_actions(actions)

    def press_deploy(self) -> None:
        self.handle_actions(self.box.step(BoxEvent(EventKind.PRESS_DEPLOY)))

    def close_lid(self) -> None:
        self.handle_actions(self.box.step(BoxEvent(EventKind.LID_CLOSED)))

    def open_lid(self) -> None:
        self.handle_actions(self.box.step(BoxEvent(EventKind.LID_OPENED)))

    def place_nodes(self, ids: list[int]) -> None:
        for node_id in ids:
            if node_id not in self.nodes:
                raise ScenarioError(f"cannot place unknown node {node_id}")
            self.placed.add(node_id)
        self._note(f"operator placed nodes {sorted(self.placed)}")

    def remove_nodes(self, ids: list[int]) -> None:
        for node_id in ids:
            self.placed.discard(node_id)
        self._note(f"operator removed nodes {sorted(ids)}")

    def set_rogue_active(self, active: bool) -> None:
        self.rogue_active = active
        self._note(f"rogue network {'up' if active else 'down'}")
        self._monitor_spectrum()

    def field_phase(self) -> None:
        """Provisioned nodes leave the box and report to the backend."""
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.mode is not NodeMode.RUNTIME:
                continue
            payload = (
                f"reading node={node.mac} t={self.loop.now_us} "
                f"value={self.payload_rng.randint(180, 260) / 10.0}"
            ).encode()
            wire = node.make_reading(payload)
            cfg = self.node_cfg[node_id]
            self._deliver_field(node, cfg, wire)

    def _deliver_field(self, node: SensorNode, cfg: NodeConfig, wire: bytes) -> None:
        scenario = self.scenario
        if self.attacker is not None:
            self.attacker.tap(
                self.loop.now_us,
                "field",
                f"node:{node.mac}",
                node.tx_power_dbm,
                self.attacker.cfg.field_distance_cm,
                0.0,
                wire,
            )
        verdict = radio.reception_verdict(
            radio.LinkBudget(
                ptx_dbm=node.tx_power_dbm,
                distance_cm=cfg.field_distance_cm,
                freq_mhz=scenario.box.freq_mhz,
            ),
            self.node_params,
            scenario.backend.rx_sensitivity_dbm,
        )
        if not verdict.decodable:
            self.dropped_frames += 1
            return

        def deliver() -> None:
            status, _ = self.backend.handle(
                "POST", "/readings", body=wire, now=self.loop.now_us
            )
            if status == 200:
                self.readings_accepted += 1
            else:
                self.readings_rejected += 1

        self.loop.schedule(self._transfer_us(len(wire)) + PROCESSING_DELAY_US, deliver)

    # --- script execution and reporting ---

    def schedule_script(self) -> None:
        scenario = self.scenario
        for step in scenario.operator_script:
            t_us = int(step.at_s * 1e6)
            if step.action == "power_on":
                self.loop.schedule_at(t_us, self.power_on)
            elif step.action == "press_acquire":
                self.loop.schedule_at(t_us, self.press_acquire)
            elif step.action == "press_deploy":
                self.loop.schedule_at(t_us, self.press_deploy)
            elif step.action == "close_lid":
                self.loop.schedule_at(t_us, self.close_lid)
            elif step.action == "open_lid":
                self.loop.schedule_at(t_us, self.open_lid)
            elif step.action == "place_nodes":
                self.loop.schedule_at(t_us, lambda ids=tuple(step.nodes): self.place_nodes(list(ids)))
            elif step.action == "remove_nodes":
                self.loop.schedule_at(t_us, lambda ids=tuple(step.nodes): self.remove_nodes(list(ids)))
            elif step.action == "field_phase":
                self.loop.schedule_at(t_us, self.field_phase)
        if scenario.attacker and scenario.attacker.kind == "rogue_ap":
            self.loop.schedule_at(
                int(scenario.attacker.active_at_s * 1e6),
                lambda: self.set_rogue_active(True),
            )

    def provisioned_count(self) -> int:
        return sum(1 for n in self.nodes.values() if n.mode is NodeMode.RUNTIME)

    def build_report(self) -> dict:
        scenario = self.scenario
        box_stats = self.box.stats
        remaining = len(self.box.inventory.keys)
        conservation = (
            box_stats["keys_spent"] + remaining + box_stats["keys_panic_erased"]
            == box_stats["keys_acquired"]
        )
        node_rows = []
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            row = {
                "id": node_id,
                "mac": node.mac,
                "honesty": node.honesty.value,
                "placed": node_id in self.placed,
                "mode": node.mode.value,
                "joined": node.joined_network,
                "joined_rogue": node_id in self.joined_rogue,
                "erasure_ok": node.erasure_ok,
                "rejected_images": node.rejected_images,
            }
            if node.mode is NodeMode.RUNTIME:
                row["identity"] = crypto.derive_identity(node.extract_key()).hex()
            node_rows.append(row)
        eaves = None
        if self.attacker is not None:
            issued = [
                record.key.value
                for record in self.backend.keys.values()
                if record.state.value != "fresh"
            ]
            eaves = {
                "frames_seen": len(self.attacker.entries),
                "frames_decodable": sum(1 for e in self.attacker.entries if e.decodable),
                "decoded_box_tx_bytes": self.attacker.decoded_box_tx_bytes,
                "decoded_node_tx_bytes": self.attacker.decoded_node_tx_bytes,
                "decoded_field_bytes": self.attacker.decoded_field_bytes,
                "key_pattern_matches": self.attacker.key_pattern_matches(issued),
                "frames": [
                    {
                        "t_us": e.t_us,
                        "direction": e.direction,
                        "src": e.src,
                        "prx_dbm": round(e.prx_dbm, 4),
                        "snr_db": round(e.snr_db, 4),
                        "decodable": e.decodable,
                        "nbytes": e.nbytes,
                    }
                    for e in self.attacker.entries
                ],
            }
        parallel_transfer = max(self.node_transfer_us.values(), default=0)
        serial_transfer = sum(self.node_transfer_us.values())
        report = {
            "scenario": scenario.name,
            "seed": scenario.seed,
            "sim_end_us": self.loop.now_us,
            "provisioned": self.provisioned_count(),
            "placed": len(self.placed),
            "nodes": node_rows,
            "keys": {
                "acquired": box_stats["keys_acquired"],
                "spent": box_stats["keys_spent"],
                "remaining": remaining,
                "panic_erased": box_stats["keys_panic_erased"],
                "conservation_ok": conservation,
            },
            "box": {
                "state": self.box.state.value,
                "tx_power_dbm": round(self.box_tx_power_dbm, 4),
            },
            "rogue": {
                "joins": len(self.joined_rogue),
                "warning_fired": "rogue-warning" in self.box.speaker.ids(),
            },
            "backend": {
                "key_states": self.backend.state_counts(),
                "readings_accepted": self.readings_accepted,
                "readings_rejected": self.readings_rejected,
                "counters": self.backend.counters,
            },
            "eavesdropper": eaves,
            "timing": {
                "deploy_started_us": self.deploy_started_us,
                "deploy_announced_us": self.deploy_announced_us,
                "parallel_transfer_us": parallel_transfer,
                "serial_transfer_us": serial_transfer,
            },
            "transcript": [
                {"seq": e.seq, "t_us": e.t_us, "utterance_id": e.utterance_id, "text": e.text}
                for e in self.box.speaker.entries
            ],
        }
        return report


# --- assertions -------------------------------------------------------------


def _lookup(report: dict, dotted: str):
    value = report
    for part in dotted.split("."):
        if not isinstance(value, dict) or part not in value:
            raise KeyError(dotted)
        value = value[part]
    return value


def evaluate_assertions(report: dict, assertions: dict) -> list[dict]:
    """Each assertion is dotted-path: expected, where expected is a literal,
    {"min": x}, {"max": x}, or {"contains": "utterance-id"} against the
    transcript."""
    results = []
    for path, expected in sorted(assertions.items()):
        entry = {"assertion": path, "expected": expected, "passed": False, "actual": None}
        try:
            if isinstance(expected, dict) and "contains" in expected:
                ids = [t["utterance_id"] for t in report["transcript"]]
                entry["actual"] = ids
                entry["passed"] = expected["contains"] in ids
            else:
                actual = _lookup(report, path)
                entry["actual"] = actual
                if isinstance(expected, dict) and "min" in expected:
                    entry["passed"] = actual >= expected["min"]
                elif isinstance(expected, dict) and "max" in expected:
                    entry["passed"] = actual <= expected["max"]
                else:
                    entry["passed"] = actual == expected
        except KeyError:
            entry["actual"] = "<missing>"
        results.append(entry)
    return results


def report_to_json(report: dict) -> bytes:
    return json.dumps(report, sort_keys=True, separators=(",", ":")).encode()


def run_scenario(scenario: Scenario) -> tuple[dict, int]:
    """Execute a scenario to quiescence; returns (report, exit_code)."""
    sim = Simulation(scenario)
    sim.schedule_script()
    sim.loop.run_until_idle()
    report = sim.build_report()
    results = evaluate_assertions(report, scenario.assertions)
    report["assertions"] = results
    report["passed"] = all(r["passed"] for r in results)
    if not report["keys"]["conservation_ok"]:
        report["passed"] = False
    code = EXIT_OK if report["passed"] else EXIT_ASSERTION_FAILED
    return report, code
