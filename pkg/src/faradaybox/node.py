"""Simulated sensor node: OTA bootloader behavior, two-stage update,
erasure response (honest or not), and authenticated telemetry.

A node is a sequential actor. It only ever reacts to bytes the radio
model let through; the harness owns delivery. Honesty settings model the
in-box adversary: RETAINS_DATA answers the erasure challenge while
keeping a slice of old memory, SILENT never talks at all.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

from . import crypto
from .crypto import FirmwareImage, ImageKind, SecretKey

log = logging.getLogger(__name__)

DEFAULT_MEMORY_SIZE = 256 * 1024
DEFAULT_BOOTLOADER_REGION = 32 * 1024
DEFAULT_RX_SENSITIVITY_DBM = -90.0
DEFAULT_TX_POWER_DBM = 0.0  # node uplink is not attenuated


class NodeMode(Enum):
    BOOTLOADER = "bootloader"
    RUNTIME = "runtime"


class Honesty(Enum):
    HONEST = "honest"
    RETAINS_DATA = "retains_data"
    SILENT = "silent"


@dataclass(frozen=True)
class FactoryDefaults:
    """Network parameters burned into the factory OTA bootloader. The box
    adapts to these, never the other way around."""

    ssid: str = "ota-provisioning"
    passphrase: str = "factory-default"
    server_address: str = "box.local"
    ota_bootloader_path: str = "/ota/bootloader"
    ota_erasure_path: str = "/ota/erasure"
    ota_runtime_path: str = "/ota/runtime"


@dataclass
class NodeMemory:
    bootloader_region: bytes
    bootloadable_region: bytearray

    @property
    def size(self) -> int:
        return len(self.bootloader_region) + len(self.bootloadable_region)


def mac_from_index(seed: int, index: int) -> str:
    """Deterministic locally-administered MAC for node #index."""
    h = hashlib.sha256(f"mac:{seed}:{index}".encode()).digest()
    raw = bytearray(h[:6])
    raw[0] = (raw[0] & 0xFC) | 0x02  # locally administered, unicast
    return ":".join(f"{b:02x}" for b in raw)


@dataclass
class SensorNode:
    mac: str
    defaults: FactoryDefaults = field(default_factory=FactoryDefaults)
    rx_sensitivity_dbm: float = DEFAULT_RX_SENSITIVITY_DBM
    tx_power_dbm: float = DEFAULT_TX_POWER_DBM
    honesty: Honesty = Honesty.HONEST
    retained_span: tuple[int, int] = (0, 1024)  # kept region when RETAINS_DATA
    memory: NodeMemory = field(
        default_factory=lambda: NodeMemory(
            bootloader_region=b"\xee" * DEFAULT_BOOTLOADER_REGION,
            bootloadable_region=bytearray(DEFAULT_MEMORY_SIZE - DEFAULT_BOOTLOADER_REGION),
        )
    )
    mode: NodeMode = NodeMode.BOOTLOADER
    installed_pubkey: Optional[bytes] = None
    boot_counter: int = 0
    msg_counter: int = 0
    joined_network: Optional[str] = None
    identity: Optional[crypto.KeyIdentity] = None
    runtime_offsets: tuple[int, ...] = ()
    rejected_images: int = 0
    erasure_ok: Optional[bool] = None

    # --- network selection ---

    def scan_and_join(self, visible_networks: list[tuple[str, str, float]]) -> Optional[str]:
        """Join the strongest network matching the factory SSID.

        visible_networks: (owner, ssid, rssi_dbm) triples. Picking the
        strongest is exactly what makes the rogue-AP attack possible.
        """
        if self.mode is not NodeMode.BOOTLOADER:
            return self.joined_network
        candidates = [
            (rssi, owner)
            for owner, ssid, rssi in visible_networks
            if ssid == self.defaults.ssid and rssi >= self.rx_sensitivity_dbm
        ]
        if not candidates:
            self.joined_network = None
            return None
        candidates.sort(key=lambda c: (-c[0], c[1]))
        self.joined_network = candidates[0][1]
        return self.joined_network

    # --- two-stage bootstrap against an OTA endpoint ---

    def run_bootstrap(
        self,
        ota_handle: Callable[..., tuple[int, bytes]],
        image_name: str,
    ) -> bool:
        """Full update sequence against a joined OTA server.

        Returns True when the node rebooted into the runtime image.
        The very first bootloader update is accepted unsigned (there is
        no key to check against yet); everything after the new bootloader
        is installed must verify.
        """
        if self.joined_network is None or self.mode is not NodeMode.BOOTLOADER:
            return False
        if self.honesty is Honesty.SILENT:
            return False

        status, body = ota_handle(
            "GET",
            self.defaults.ota_bootloader_path,
            query={"memsize": str(len(self.memory.bootloadable_region))},
            source_mac=self.mac,
        )
        if status != 200:
            return False
        stage = crypto.decode_container(body)
        if not self.install_bootloader_stage(stage):
            return False

        proof = self.answer_erasure()
        if proof is None:
            return False
        status, _ = ota_handle(
            "POST",
            self.defaults.ota_erasure_path,
            source_mac=self.mac,
            body=crypto.encode_erasure_proof(proof),
        )
        self.erasure_ok = status == 200
        if status != 200:
            return False

        status, body = ota_handle(
            "GET",
            self.defaults.ota_runtime_path,
            query={"image": image_name},
            source_mac=self.mac,
        )
        if status != 200:
            return False
        return self.install_runtime(crypto.decode_container(body, name=image_name))

    def install_bootloader_stage(self, stage: FirmwareImage) -> bool:
        """Replace the factory bootloader; record the embedded pubkey."""
        if stage.kind is not ImageKind.BOOTLOADER_STAGE:
            return False
        if self.installed_pubkey is not None and not crypto.verify_image(
            stage, self.installed_pubkey
        ):
            self.rejected_images += 1
            return False
        self.memory = NodeMemory(
            bootloader_region=stage.blob,
            bootloadable_region=self.memory.bootloadable_region,
        )
        self.installed_pubkey = crypto.extract_marked_value(stage.blob, crypto.PUBKEY_MARKER)
        return True

    def answer_erasure(self) -> Optional[crypto.ErasureProof]:
        """Respond to the challenge found in the installed bootloader."""
        seed = crypto.extract_marked_value(self.memory.bootloader_region, crypto.CHALLENGE_MARKER)
        if seed is None:
            return None
        if self.honesty is Honesty.RETAINS_DATA:
            start, end = self.retained_span
            kept = bytes(self.memory.bootloadable_region[start:end])
            stream = crypto.erasure_stream(seed, len(self.memory.bootloadable_region))
            self.memory.bootloadable_region[:] = stream
            # Keeps its stash, then digests what is really in memory; the
            # stash makes the digest miss the expected stream value.
            self.memory.bootloadable_region[start:end] = kept
            return crypto.ErasureProof(
                challenge_seed=seed,
                proof_digest=hashlib.sha256(bytes(self.memory.bootloadable_region)).digest(),
            )
        return crypto.erasure_respond(self.memory.bootloadable_region, seed)

    def install_runtime(self, image: FirmwareImage) -> bool:
        """Verify (pubkey installed by now), then commit atomically."""
        if image.kind is not ImageKind.RUNTIME_PATCHED:
            self.rejected_images += 1
            return False
        if self.installed_pubkey is None or not crypto.verify_image(
            image, self.installed_pubkey
        ):
            self.rejected_images += 1
            return False
        if len(image.blob) > len(self.memory.bootloadable_region):
            self.rejected_images += 1
            return False
        # Transactional region write: build the full new contents first.
        new_region = bytearray(len(self.memory.bootloadable_region))
        new_region[: len(image.blob)] = image.blob
        self.memory.bootloadable_region[:] = new_region
        self.runtime_offsets = image.placeholder_offsets
        self.mode = NodeMode.RUNTIME
        self.boot_counter += 1
        self.msg_counter = 0
        # The runtime firmware derives its identifier once per boot.
        self.identity = crypto.derive_identity(self.extract_key())
        return True

    # --- runtime behavior ---

    def extract_key(self) -> SecretKey:
        """Read the device key out of the flashed image, as the runtime
        firmware would."""
        if self.mode is not NodeMode.RUNTIME or not self.runtime_offsets:
            raise RuntimeError("no runtime image flashed")
        off = self.runtime_offsets[0]
        return SecretKey(bytes(self.memory.bootloadable_region[off : off + crypto.KEY_LEN]))

    def make_reading(self, payload: bytes) -> bytes:
        """Seal a telemetry payload for the backend; returns wire bytes."""
        key = self.extract_key()
        nonce = crypto.make_nonce(self.boot_counter, self.msg_counter)
        self.msg_counter += 1
        return crypto.encode_sealed(crypto.seal(payload, key, nonce, identity=self.identity))

    def send_reading(
        self, payload: bytes, backend_handle: Callable[..., tuple[int, bytes]], now: int = 0
    ) -> tuple[int, bytes]:
        return backend_handle("POST", "/readings", body=self.make_reading(payload), now=now)
