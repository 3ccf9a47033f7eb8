"""The box controller: a five-state machine driving shielded OTA provisioning.

Every externally visible change goes through `step(event)`, which returns
the actions the surrounding system must perform (speak, start/stop the
in-box network, serve bytes, schedule the deploy timeout). That keeps the
transition logic a single auditable function and lets tests walk the whole
reachable state space.

Lifecycle per device inside a deploy session:

    bootloader request -> signed bootloader stage (box pubkey + erasure
    challenge embedded) -> erasure proof -> fresh key patched into the
    runtime image, signed, served exactly once.

Opening the lid mid-deployment is treated as an attack: every key is
erased on the spot.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from . import crypto
from .crypto import FirmwareImage, ImageKind, SecretKey, SigningKeyPair

log = logging.getLogger(__name__)

STATE_FILE_MAGIC = b"FARADAYBOX_STATE1"

DEFAULT_KEY_THRESHOLD = 1
DEFAULT_DEPLOY_TIMEOUT_US = 60 * 1_000_000


class BoxState(Enum):
    BOX_OPEN_NO_FW = "BoxOpen_NoFW"
    BOX_OPEN_FW = "BoxOpen_FW"
    BOX_CLOSED_NO_FW = "BoxClosed_NoFW"
    BOX_CLOSED_FW = "BoxClosed_FW"
    DEPLOY_FW = "Deploy_FW"


class EventKind(Enum):
    POWER_ON = "PowerOn"
    LID_OPENED = "LidOpened"
    LID_CLOSED = "LidClosed"
    PRESS_ACQUIRE = "PressAcquire"
    PRESS_DEPLOY = "PressDeploy"
    OTA_REQUEST = "OtaRequest"
    ERASURE_RESULT = "ErasureResult"
    DEPLOY_TIMEOUT = "DeployTimeout"
    ROGUE_DETECTED = "RogueDetected"
    ACQUIRE_COMPLETED = "AcquireCompleted"
    ACQUIRE_FAILED = "AcquireFailed"


@dataclass(frozen=True)
class BoxEvent:
    kind: EventKind
    mac: Optional[str] = None
    stage: Optional[str] = None  # "bootloader" | "runtime"
    image: Optional[str] = None
    memsize: Optional[int] = None
    ok: Optional[bool] = None
    ssid: Optional[str] = None
    channel: Optional[int] = None
    reason: Optional[str] = None
    session_id: Optional[int] = None
    bundle: Optional["AcquiredBundle"] = None


@dataclass(frozen=True)
class AcquiredBundle:
    images: tuple[FirmwareImage, ...]
    keys: tuple[SecretKey, ...]


@dataclass(frozen=True)
class Action:
    """One side effect requested by a transition."""

    kind: str  # say | network_start | network_stop | serve | begin_acquire | schedule_deploy_timeout
    utterance_id: Optional[str] = None
    text: Optional[str] = None
    status: Optional[int] = None
    payload: Optional[bytes] = None
    delay_us: Optional[int] = None
    session_id: Optional[int] = None


# Utterance catalogue: stable ids, templated text. Golden-transcript tests
# key off the ids and the count/instruction phrases.
UTTERANCES = {
    "ready-no-fw": "Box ready. No firmware loaded. Connect the backend and press the acquire button.",
    "ready-fw": "Box ready. Firmware and keys are loaded.",
    "acquire-started": "Acquiring firmware and keys from the backend.",
    "acquire-completed": "Acquisition complete. {keys} keys and {images} firmware images on board.",
    "acquire-failed": "Acquisition failed: {reason}. Check the backend connection and try again.",
    "deploy-armed": "Deploy armed. Place the sensor nodes inside and close the box.",
    "deploy-started": "Box closed. Provisioning network is up. Do not open the box.",
    "closed-idle": "Box closed for transport.",
    "no-nodes-found": "No sensor nodes found. The box can be opened.",
    "session-complete": "Provisioning complete. {count} sensor nodes provisioned. Please open the box and remove them.",
    "session-complete-failures": "Provisioning complete. {count} sensor nodes provisioned. {failed} nodes failed secure erasure. Please open the box and remove them.",
    "panic": "Warning. The box was opened during deployment. All secret keys have been erased. Treat this batch as compromised.",
    "rogue-warning": "Warning. Another network with our identifier was detected. Power off the sensor nodes and consider them compromised.",
    "out-of-keys": "Out of keys. Remaining sensor nodes were not provisioned.",
}


@dataclass
class SpeakerEntry:
    seq: int
    t_us: int
    utterance_id: str
    text: str


class SpeakerLog:
    """Append-only spoken-feedback transcript."""

    def __init__(self) -> None:
        self.entries: list[SpeakerEntry] = []

    def append(self, t_us: int, utterance_id: str, text: str) -> SpeakerEntry:
        entry = SpeakerEntry(len(self.entries), t_us, utterance_id, text)
        self.entries.append(entry)
        return entry

    def since(self, seq: int) -> list[SpeakerEntry]:
        return self.entries[seq:]

    def texts(self) -> list[str]:
        return [e.text for e in self.entries]

    def ids(self) -> list[str]:
        return [e.utterance_id for e in self.entries]


class HsmRegion:
    """Never-persisted secrets: the signing pair and the at-rest key."""

    def __init__(self, signing_keys: SigningKeyPair, device_key: SecretKey):
        self.signing_keys = signing_keys
        self.device_key = device_key

    @classmethod
    def generate(cls, rng) -> "HsmRegion":
        return cls(SigningKeyPair.generate(rng), crypto.generate_key(rng))


@dataclass
class BoxInventory:
    images: dict[str, FirmwareImage] = field(default_factory=dict)
    keys: list[SecretKey] = field(default_factory=list)
    key_threshold: int = DEFAULT_KEY_THRESHOLD

    def stocked(self) -> bool:
        return bool(self.images) and len(self.keys) > self.key_threshold


# Per-device provisioning stages within one deploy session.
STAGE_BOOTLOADER_SERVED = "bootloader-served"
STAGE_ERASED = "erased"
STAGE_ERASE_FAILED = "erase-failed"
STAGE_RUNTIME_FLASHED = "runtime-flashed"


@dataclass
class MacProgress:
    stage: str
    challenge_seed: bytes
    memsize: int
    bootloader_container: bytes
    runtime_container: Optional[bytes] = None


@dataclass
class DeploySession:
    session_id: int
    started_at: int
    timeout_us: int
    macs: dict[str, MacProgress] = field(default_factory=dict)
    announced: bool = False
    out_of_keys_said: bool = False

    def flashed_count(self) -> int:
        return sum(1 for p in self.macs.values() if p.stage == STAGE_RUNTIME_FLASHED)

    def failed_count(self) -> int:
        return sum(1 for p in self.macs.values() if p.stage == STAGE_ERASE_FAILED)


@dataclass
class BoxConfig:
    key_threshold: int = DEFAULT_KEY_THRESHOLD
    deploy_timeout_us: int = DEFAULT_DEPLOY_TIMEOUT_US
    ssid: str = "ota-provisioning"
    channel: int = 6
    ota_bootloader_name: str = "stage-bootloader"


class BoxController:
    """Event-driven controller; feed events through step()."""

    def __init__(
        self,
        hsm: HsmRegion,
        rng,
        config: Optional[BoxConfig] = None,
        clock: Callable[[], int] = lambda: 0,
    ):
        self.hsm = hsm
        self.rng = rng
        self.config = config or BoxConfig()
        self.clock = clock
        self.state = BoxState.BOX_OPEN_NO_FW
        self.lid_open = True
        self.deploy_armed = False
        self.acquire_pending = False
        self.network_up = False
        self.inventory = BoxInventory(key_threshold=self.config.key_threshold)
        self.session: Optional[DeploySession] = None
        self.speaker = SpeakerLog()
        self._session_counter = 0
        self._warned_networks: set[tuple[str, int]] = set()
        self.stats = {"keys_acquired": 0, "keys_spent": 0, "keys_panic_erased": 0}
        self.powered = False

    # --- helpers ---

    def _say(self, utterance_id: str, **fmt) -> Action:
        text = UTTERANCES[utterance_id].format(**fmt)
        self.speaker.append(self.clock(), utterance_id, text)
        return Action(kind="say", utterance_id=utterance_id, text=text)

    def _derive_open_state(self) -> BoxState:
        return BoxState.BOX_OPEN_FW if self.inventory.stocked() else BoxState.BOX_OPEN_NO_FW

    def ota_serving_active(self) -> bool:
        """True while OTA traffic would actually be answered."""
        return (
            self.state is BoxState.DEPLOY_FW
            and self.network_up
            and self.session is not None
            and not self.session.announced
        )

    # --- the transition function ---

    def step(self, event: BoxEvent) -> list[Action]:
        handler = getattr(self, f"_on_{event.kind.name.lower()}")
        return handler(event)

    def _ignore(self, event: BoxEvent) -> list[Action]:
        log.debug("ignored event %s in state %s", event.kind.value, self.state.value)
        return []

    def _on_power_on(self, event: BoxEvent) -> list[Action]:
        # Power button sits inside the box, so powering on implies open lid.
        self.powered = True
        self.lid_open = True
        self.deploy_armed = False
        self.acquire_pending = False
        self.network_up = False
        self.session = None
        self.state = self._derive_open_state()
        if self.state is BoxState.BOX_OPEN_FW:
            return [self._say("ready-fw")]
        return [self._say("ready-no-fw")]

    def _on_lid_opened(self, event: BoxEvent) -> list[Action]:
        if self.lid_open:
            return self._ignore(event)
        self.lid_open = True
        if self.state is BoxState.DEPLOY_FW:
            if self.session is not None and self.session.announced:
                self.session = None
                self.network_up = False
                self.deploy_armed = False
                self.state = self._derive_open_state()
                return []
            return self._panic()
        if self.state is BoxState.BOX_CLOSED_FW:
            self.state = BoxState.BOX_OPEN_FW
            return []
        if self.state is BoxState.BOX_CLOSED_NO_FW:
            self.state = BoxState.BOX_OPEN_NO_FW
            return []
        return self._ignore(event)

    def _panic(self) -> list[Action]:
        erased = len(self.inventory.keys)
        self.stats["keys_panic_erased"] += erased
        self.inventory.keys.clear()
        self.session = None
        self.network_up = False
        self.deploy_armed = False
        self.state = BoxState.BOX_OPEN_NO_FW
        return [Action(kind="network_stop"), self._say("panic")]

    def _on_lid_closed(self, event: BoxEvent) -> list[Action]:
        if not self.lid_open:
            return self._ignore(event)
        self.lid_open = False
        if self.acquire_pending:
            # Closing the lid severs the wired backend link mid-acquire.
            self.acquire_pending = False
        if self.state is BoxState.BOX_OPEN_FW and self.deploy_armed:
            self.deploy_armed = False
            self._session_counter += 1
            self.session = DeploySession(
                session_id=self._session_counter,
                started_at=self.clock(),
                timeout_us=self.config.deploy_timeout_us,
            )
            self.state = BoxState.DEPLOY_FW
            self.network_up = True
            return [
                Action(kind="network_start"),
                Action(
                    kind="schedule_deploy_timeout",
                    delay_us=self.config.deploy_timeout_us,
                    session_id=self.session.session_id,
                ),
                self._say("deploy-started"),
            ]
        if self.state is BoxState.BOX_OPEN_FW:
            self.state = BoxState.BOX_CLOSED_FW
            return [self._say("closed-idle")]
        if self.state is BoxState.BOX_OPEN_NO_FW:
            self.state = BoxState.BOX_CLOSED_NO_FW
            return [self._say("closed-idle")]
        return self._ignore(event)

    def _on_press_acquire(self, event: BoxEvent) -> list[Action]:
        if self.state not in (BoxState.BOX_OPEN_NO_FW, BoxState.BOX_OPEN_FW):
            return self._ignore(event)
        if self.acquire_pending:
            return self._ignore(event)
        self.acquire_pending = True
        return [self._say("acquire-started"), Action(kind="begin_acquire")]

    def _on_press_deploy(self, event: BoxEvent) -> list[Action]:
        if self.state is not BoxState.BOX_OPEN_FW or self.acquire_pending:
            return self._ignore(event)
        self.deploy_armed = True
        return [self._say("deploy-armed")]

    def _on_acquire_completed(self, event: BoxEvent) -> list[Action]:
        if self.state not in (BoxState.BOX_OPEN_NO_FW, BoxState.BOX_OPEN_FW):
            return self._ignore(event)
        if not self.acquire_pending or event.bundle is None:
            return self._ignore(event)
        self.acquire_pending = False
        for image in event.bundle.images:
            self.inventory.images[image.name] = image
        self.inventory.keys.extend(event.bundle.keys)
        self.stats["keys_acquired"] += len(event.bundle.keys)
        self.state = self._derive_open_state()
        return [
            self._say(
                "acquire-completed",
                keys=len(self.inventory.keys),
                images=len(self.inventory.images),
            )
        ]

    def _on_acquire_failed(self, event: BoxEvent) -> list[Action]:
        if not self.acquire_pending:
            return self._ignore(event)
        self.acquire_pending = False
        return [self._say("acquire-failed", reason=event.reason or "unknown error")]

    def _on_deploy_timeout(self, event: BoxEvent) -> list[Action]:
        if self.state is not BoxState.DEPLOY_FW or self.session is None:
            return self._ignore(event)
        if event.session_id != self.session.session_id or self.session.announced:
            return self._ignore(event)
        self.network_up = False
        actions: list[Action] = [Action(kind="network_stop")]
        if not self.session.macs:
            self.session = None
            self.state = BoxState.BOX_CLOSED_FW
            actions.append(self._say("no-nodes-found"))
            return actions
        self.session.announced = True
        actions.append(self.announce(self.session))
        return actions

    def announce(self, session: DeploySession) -> Action:
        """End-of-session spoken summary with the provisioned count."""
        failed = session.failed_count()
        if failed:
            return self._say(
                "session-complete-failures",
                count=session.flashed_count(),
                failed=failed,
            )
        return self._say("session-complete", count=session.flashed_count())

    def _on_rogue_detected(self, event: BoxEvent) -> list[Action]:
        return [self._say("rogue-warning")]

    def _on_ota_request(self, event: BoxEvent) -> list[Action]:
        if not self.ota_serving_active() or self.session is None:
            return self._ignore(event)
        assert event.mac is not None
        if event.stage == "bootloader":
            return self._serve_bootloader(event.mac, event.memsize or 0)
        if event.stage == "runtime":
            return self._serve_runtime(event.mac, event.image or "")
        return self._ignore(event)

    def _on_erasure_result(self, event: BoxEvent) -> list[Action]:
        if not self.ota_serving_active() or self.session is None:
            return self._ignore(event)
        progress = self.session.macs.get(event.mac or "")
        if progress is None:
            return self._ignore(event)
        if progress.stage == STAGE_RUNTIME_FLASHED:
            return self._ignore(event)
        progress.stage = STAGE_ERASED if event.ok else STAGE_ERASE_FAILED
        return []

    # --- OTA serving ---

    def _serve_bootloader(self, mac: str, memsize: int) -> list[Action]:
        assert self.session is not None
        progress = self.session.macs.get(mac)
        if progress is not None:
            # Wireless retry: re-serve the identical per-device container.
            return [Action(kind="serve", status=200, payload=progress.bootloader_container)]
        template = self._bootloader_template()
        if template is None:
            return [Action(kind="serve", status=404, payload=b"no bootloader stage on board")]
        seed = crypto.erasure_challenge(self.rng, memsize)
        blob = crypto.embed_marked_value(
            template.blob, crypto.PUBKEY_MARKER, self.hsm.signing_keys.public_bytes
        )
        blob = crypto.embed_marked_value(blob, crypto.CHALLENGE_MARKER, seed)
        image = FirmwareImage(
            name=template.name,
            kind=ImageKind.BOOTLOADER_STAGE,
            blob=blob,
            embedded_pubkey=self.hsm.signing_keys.public_bytes,
        )
        signed = crypto.sign_image(image, self.hsm.signing_keys)
        container = crypto.encode_container(signed)
        self.session.macs[mac] = MacProgress(
            stage=STAGE_BOOTLOADER_SERVED,
            challenge_seed=seed,
            memsize=memsize,
            bootloader_container=container,
        )
        return [Action(kind="serve", status=200, payload=container)]

    def _bootloader_template(self) -> Optional[FirmwareImage]:
        for image in self.inventory.images.values():
            if image.kind is ImageKind.BOOTLOADER_STAGE:
                return image
        return None

    def _serve_runtime(self, mac: str, image_name: str) -> list[Action]:
        assert self.session is not None
        progress = self.session.macs.get(mac)
        if progress is None:
            return [Action(kind="serve", status=409, payload=b"bootloader stage first")]
        if progress.stage == STAGE_RUNTIME_FLASHED and progress.runtime_container:
            # Duplicate request: same bytes, no second key spent.
            return [Action(kind="serve", status=200, payload=progress.runtime_container)]
        if progress.stage == STAGE_ERASE_FAILED:
            return [Action(kind="serve", status=403, payload=b"secure erasure failed")]
        if progress.stage != STAGE_ERASED:
            return [Action(kind="serve", status=409, payload=b"erasure proof required")]
        template = self.inventory.images.get(image_name)
        if template is None or template.kind is not ImageKind.RUNTIME_TEMPLATE:
            return [Action(kind="serve", status=404, payload=b"unknown runtime image")]
        actions: list[Action] = []
        if not self.inventory.keys:
            if not self.session.out_of_keys_said:
                self.session.out_of_keys_said = True
                actions.append(self._say("out-of-keys"))
            actions.append(Action(kind="serve", status=409, payload=b"out of keys"))
            return actions
        key = self.inventory.keys.pop(0)
        self.stats["keys_spent"] += 1
        patched = crypto.patch_image(template, key)
        signed = crypto.sign_image(patched, self.hsm.signing_keys)
        container = crypto.encode_container(signed)
        progress.stage = STAGE_RUNTIME_FLASHED
        progress.runtime_container = container
        actions.append(Action(kind="serve", status=200, payload=container))
        return actions

    def handle_ota(
        self,
        method: str,
        path: str,
        query: Optional[dict] = None,
        source_mac: str = "",
        body: bytes = b"",
    ) -> tuple[int, bytes]:
        """In-box OTA endpoint; translates requests into events for step()."""
        query = query or {}
        if not source_mac:
            return 400, b"missing source mac"
        if method == "GET" and path == "/ota/bootloader":
            memsize = int(query.get("memsize", "0"))
            actions = self.step(
                BoxEvent(EventKind.OTA_REQUEST, mac=source_mac, stage="bootloader", memsize=memsize)
            )
        elif method == "POST" and path == "/ota/erasure":
            return self._handle_erasure_post(source_mac, body)
        elif method == "GET" and path == "/ota/runtime":
            actions = self.step(
                BoxEvent(
                    EventKind.OTA_REQUEST,
                    mac=source_mac,
                    stage="runtime",
                    image=query.get("image", ""),
                )
            )
        else:
            return 404, b"not found"
        for action in actions:
            if action.kind == "serve":
                return action.status or 500, action.payload or b""
        return 503, b"not serving"

    def _handle_erasure_post(self, mac: str, body: bytes) -> tuple[int, bytes]:
        if not self.ota_serving_active() or self.session is None:
            return 503, b"not serving"
        progress = self.session.macs.get(mac)
        if progress is None:
            return 409, b"bootloader stage first"
        try:
            proof = crypto.decode_erasure_proof(body)
        except crypto.FormatError:
            return 400, b"malformed proof"
        ok = crypto.erasure_verify(proof, progress.challenge_seed, progress.memsize)
        self.step(BoxEvent(EventKind.ERASURE_RESULT, mac=mac, ok=ok))
        if ok:
            return 200, b"erased"
        return 403, b"erasure verification failed"

    # --- acquisition ---

    def acquire(
        self,
        backend_handle: Callable[..., tuple[int, bytes]],
        image_names: list[str],
        key_count: int,
        box_token: str,
    ) -> list[Action]:
        """Fetch templates and keys over the wired backend link.

        Runs the full press-acquire flow synchronously: stages everything,
        then feeds AcquireCompleted/AcquireFailed back into the machine so
        a failure changes nothing.
        """
        actions = self.step(BoxEvent(EventKind.PRESS_ACQUIRE))
        if not any(a.kind == "begin_acquire" for a in actions):
            return actions
        try:
            bundle = self._download(backend_handle, image_names, key_count, box_token)
        except Exception as exc:  # noqa: BLE001 - any failure aborts atomically
            actions += self.step(
                BoxEvent(EventKind.ACQUIRE_FAILED, reason=str(exc) or type(exc).__name__)
            )
            return actions
        actions += self.step(BoxEvent(EventKind.ACQUIRE_COMPLETED, bundle=bundle))
        return actions

    def _download(
        self,
        backend_handle: Callable[..., tuple[int, bytes]],
        image_names: list[str],
        key_count: int,
        box_token: str,
    ) -> AcquiredBundle:
        status, body = backend_handle(
            "GET",
            "/keys",
            query={"count": str(key_count)},
            headers={"X-Box-Token": box_token},
        )
        if status != 200:
            raise RuntimeError(f"key download failed ({status}): {body.decode()}")
        keys = tuple(key for _, key in crypto.decode_key_file(body))
        images = []
        for name in image_names:
            status, body = backend_handle("GET", f"/firmware/{name}")
            if status != 200:
                raise RuntimeError(f"firmware download failed ({status}): {body.decode()}")
            images.append(crypto.decode_container(body, name=name))
        return AcquiredBundle(images=tuple(images), keys=keys)

    # --- spectrum monitoring ---

    def monitor_spectrum(
        self, observed_networks: list[tuple[str, int, str]]
    ) -> Optional[BoxEvent]:
        """Check (ssid, channel, owner) sightings against our own identity.

        A network that matches our SSID and channel but was not created by
        this box means someone is luring the nodes; warn the operator once
        per offender.
        """
        for ssid, channel, owner in observed_networks:
            if owner == "box":
                continue
            if ssid == self.config.ssid and channel == self.config.channel:
                if (ssid, channel) in self._warned_networks:
                    continue
                self._warned_networks.add((ssid, channel))
                event = BoxEvent(EventKind.ROGUE_DETECTED, ssid=ssid, channel=channel)
                self.step(event)
                return event
        return None

    # --- persistence ---

    def save_state(self, path: str) -> None:
        """Binary snapshot; secret keys sealed under the HSM device key,
        the HSM region itself never written."""
        key_file = crypto.encode_key_file(
            [(crypto.derive_identity(k), k) for k in self.inventory.keys]
        )
        nonce = self.rng.randbytes(crypto.NONCE_LEN)
        sealed = crypto.seal(key_file, self.hsm.device_key, nonce)
        sealed_bytes = crypto.encode_sealed(sealed)
        out = bytearray(STATE_FILE_MAGIC)
        out.extend(self.state.value.encode().ljust(16, b"\0"))
        out.extend(struct.pack(">I", self.inventory.key_threshold))
        out.extend(struct.pack(">I", len(self.inventory.images)))
        for name in sorted(self.inventory.images):
            container = crypto.encode_container(self.inventory.images[name])
            out.extend(struct.pack(">H", len(name)))
            out.extend(name.encode())
            out.extend(struct.pack(">Q", len(container)))
            out.extend(container)
        out.extend(struct.pack(">I", len(sealed_bytes)))
        out.extend(sealed_bytes)
        with open(path, "wb") as fh:
            fh.write(bytes(out))

    def load_state(self, path: str) -> None:
        with open(path, "rb") as fh:
            raw = fh.read()
        if raw[: len(STATE_FILE_MAGIC)] != STATE_FILE_MAGIC:
            raise crypto.FormatError("bad state file magic")
        pos = len(STATE_FILE_MAGIC)
        state_name = raw[pos : pos + 16].rstrip(b"\0").decode()
        pos += 16
        (threshold,) = struct.unpack(">I", raw[pos : pos + 4])
        pos += 4
        (n_images,) = struct.unpack(">I", raw[pos : pos + 4])
        pos += 4
        images = {}
        for _ in range(n_images):
            (name_len,) = struct.unpack(">H", raw[pos : pos + 2])
            pos += 2
            name = raw[pos : pos + name_len].decode()
            pos += name_len
            (c_len,) = struct.unpack(">Q", raw[pos : pos + 8])
            pos += 8
            images[name] = crypto.decode_container(raw[pos : pos + c_len], name=name)
            pos += c_len
        (s_len,) = struct.unpack(">I", raw[pos : pos + 4])
        pos += 4
        sealed = crypto.decode_sealed(raw[pos : pos + s_len])
        key_file = crypto.open_sealed(sealed, self.hsm.device_key)
        self.inventory = BoxInventory(
            images=images,
            keys=[k for _, k in crypto.decode_key_file(key_file)],
            key_threshold=threshold,
        )
        self.state = BoxState(state_name)
