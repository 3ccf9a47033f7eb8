"""Operator-side trusted service: key database, firmware registry,
reading ingestion and key blacklisting.

The service is transport-agnostic: `handle()` speaks an HTTP-shaped
(method, path) protocol so the same code serves the box over a wire,
simulated node telemetry, and a real TCP listener in service mode.
All mutations go through one lock, so concurrent downloads can never
hand out the same key twice.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from . import crypto
from .crypto import (
    AuthError,
    FirmwareImage,
    ImageKind,
    KeyIdentity,
    SealedMessage,
    SecretKey,
)

log = logging.getLogger(__name__)

DEFAULT_BLACKLIST_TIMEOUT_US = 24 * 3600 * 1_000_000  # 24 h of simulation time


class ShortageError(Exception):
    """Not enough fresh keys to satisfy a download request."""

    def __init__(self, deficit: int):
        super().__init__(f"short by {deficit} fresh keys")
        self.deficit = deficit


class UnknownIdentityError(Exception):
    """Reading carries an identity the database has never issued."""


class RejectedError(Exception):
    """Reading under a key that is blacklisted (or never issued to a box)."""


class KeyState(Enum):
    FRESH = "fresh"
    ISSUED_TO_BOX = "issued_to_box"
    IN_USE = "in_use"
    BLACKLISTED = "blacklisted"


# Forward transitions only; anything else is a bug.
_ALLOWED = {
    (KeyState.FRESH, KeyState.ISSUED_TO_BOX),
    (KeyState.ISSUED_TO_BOX, KeyState.IN_USE),
    (KeyState.ISSUED_TO_BOX, KeyState.BLACKLISTED),
    (KeyState.IN_USE, KeyState.IN_USE),
    (KeyState.IN_USE, KeyState.BLACKLISTED),
}


@dataclass
class KeyRecord:
    key: SecretKey
    identity: KeyIdentity
    state: KeyState = KeyState.FRESH
    issued_at: Optional[int] = None
    last_seen: Optional[int] = None

    def transition(self, new_state: KeyState) -> None:
        if (self.state, new_state) not in _ALLOWED:
            raise ValueError(f"forbidden key transition {self.state} -> {new_state}")
        self.state = new_state


@dataclass
class SensorReading:
    identity: KeyIdentity
    received_at: int
    payload: bytes


@dataclass(frozen=True)
class ApCredentials:
    ssid: str
    passphrase: str
    server_address: str

    def blob(self) -> bytes:
        """Byte encoding embedded verbatim into runtime templates."""
        return f"SSID={self.ssid};PSK={self.passphrase};SRV={self.server_address}".encode()


class FirmwareRegistry:
    """Named firmware images; templates are validated on insertion."""

    def __init__(self) -> None:
        self._images: dict[str, FirmwareImage] = {}

    def add(self, image: FirmwareImage) -> None:
        if image.name in self._images:
            raise ValueError(f"image name already registered: {image.name}")
        if image.kind is ImageKind.RUNTIME_TEMPLATE:
            crypto.validate_template(image)
        elif image.kind is not ImageKind.BOOTLOADER_STAGE:
            raise ValueError("registry holds templates and bootloader stages only")
        self._images[image.name] = image

    def get(self, name: str) -> FirmwareImage:
        return self._images[name]

    def __contains__(self, name: str) -> bool:
        return name in self._images

    def names(self) -> list[str]:
        return sorted(self._images)


class Backend:
    """One backend instance: key DB, firmware registry, readings log."""

    def __init__(
        self,
        rng,
        box_token: str,
        credentials: ApCredentials,
        blacklist_timeout_us: int = DEFAULT_BLACKLIST_TIMEOUT_US,
    ):
        self.rng = rng
        self.box_token = box_token
        self.credentials = credentials
        self.blacklist_timeout_us = blacklist_timeout_us
        self.registry = FirmwareRegistry()
        self.keys: dict[KeyIdentity, KeyRecord] = {}
        self.readings: list[SensorReading] = []
        self.counters = {
            "auth_failures": 0,
            "unknown_identity": 0,
            "rejected_blacklisted": 0,
            "bad_token": 0,
        }
        self._lock = threading.Lock()

    # --- key lifecycle ---

    def create_keys(self, n: int) -> list[KeyRecord]:
        if n < 1:
            raise ValueError("must create at least one key")
        with self._lock:
            records = []
            for _ in range(n):
                key = crypto.generate_key(self.rng)
                identity = crypto.derive_identity(key)
                record = KeyRecord(key=key, identity=identity)
                self.keys[identity] = record
                records.append(record)
            return records

    def fresh_count(self) -> int:
        return sum(1 for r in self.keys.values() if r.state is KeyState.FRESH)

    def handle_box_download(
        self, image_names: list[str], key_count: int, box_token: str, now: int
    ) -> tuple[list[FirmwareImage], list[KeyRecord]]:
        """Hand templates plus exactly key_count fresh keys to the box.

        All-or-nothing: a failed request leaves every record untouched.
        """
        with self._lock:
            if box_token != self.box_token:
                self.counters["bad_token"] += 1
                raise AuthError("bad box token")
            missing = [n for n in image_names if n not in self.registry]
            if missing:
                raise KeyError(f"unknown firmware image(s): {missing}")
            fresh = [r for r in self.keys.values() if r.state is KeyState.FRESH]
            if len(fresh) < key_count:
                raise ShortageError(key_count - len(fresh))
            issued = fresh[:key_count]
            for record in issued:
                record.transition(KeyState.ISSUED_TO_BOX)
                record.issued_at = now
            images = [self.registry.get(n) for n in image_names]
            return images, issued

    def ingest_reading(self, msg: SealedMessage, now: int) -> SensorReading:
        """Authenticate a sealed reading by identity lookup and store it."""
        with self._lock:
            record = self.keys.get(msg.identity)
            if record is None:
                self.counters["unknown_identity"] += 1
                raise UnknownIdentityError(msg.identity.hex())
            if record.state is KeyState.BLACKLISTED:
                self.counters["rejected_blacklisted"] += 1
                raise RejectedError(f"blacklisted key {msg.identity}")
            if record.state is KeyState.FRESH:
                # A key the box never received cannot be in legitimate use.
                self.counters["rejected_blacklisted"] += 1
                raise RejectedError(f"key {msg.identity} was never issued")
            try:
                payload = crypto.open_sealed(msg, record.key)
            except AuthError:
                self.counters["auth_failures"] += 1
                raise
            record.transition(KeyState.IN_USE)
            record.last_seen = now
            reading = SensorReading(identity=msg.identity, received_at=now, payload=payload)
            self.readings.append(reading)
            return reading

    def blacklist_sweep(self, now: int, timeout_us: Optional[int] = None) -> list[KeyIdentity]:
        """Blacklist issued-but-never-used keys strictly older than timeout."""
        timeout = self.blacklist_timeout_us if timeout_us is None else timeout_us
        if timeout <= 0:
            raise ValueError("timeout must be > 0")
        with self._lock:
            swept = []
            for record in self.keys.values():
                if (
                    record.state is KeyState.ISSUED_TO_BOX
                    and record.issued_at is not None
                    and now - record.issued_at > timeout
                ):
                    record.transition(KeyState.BLACKLISTED)
                    swept.append(record.identity)
            return swept

    def ap_credentials(self) -> ApCredentials:
        return self.credentials

    def state_counts(self) -> dict[str, int]:
        counts = {state.value: 0 for state in KeyState}
        for record in self.keys.values():
            counts[record.state.value] += 1
        return counts

    # --- firmware building ---

    def build_runtime_template(self, name: str, payload_size: int = 4096) -> FirmwareImage:
        """Assemble a simulated runtime image: code filler, the backend
        network credentials, and one key placeholder."""
        filler = crypto.erasure_stream(b"RTFW" + name.encode().ljust(28, b"\0"), payload_size)
        blob = bytearray(b"RTFW" + name.encode() + b"\0")
        blob.extend(self.credentials.blob())
        blob.extend(b"\0")
        offset = len(blob)
        blob.extend(crypto.KEY_PLACEHOLDER)
        blob.extend(filler)
        image = FirmwareImage(
            name=name,
            kind=ImageKind.RUNTIME_TEMPLATE,
            blob=bytes(blob),
            placeholder_offsets=(offset,),
        )
        self.registry.add(image)
        return image

    def build_bootloader_stage(self, name: str, payload_size: int = 2048) -> FirmwareImage:
        """Assemble the generic second-stage bootloader blob (no key
        material; the box appends its pubkey per deployment)."""
        filler = crypto.erasure_stream(b"BLFW" + name.encode().ljust(28, b"\0"), payload_size)
        image = FirmwareImage(
            name=name,
            kind=ImageKind.BOOTLOADER_STAGE,
            blob=b"BLFW" + name.encode() + b"\0" + filler,
        )
        self.registry.add(image)
        return image

    # --- persistence ---

    def save_state(self, path: str) -> None:
        """Atomic snapshot of the key database (write temp, then rename)."""
        with self._lock:
            snapshot = {
                "keys": [
                    {
                        "key": record.key.value.hex(),
                        "identity": record.identity.hex(),
                        "state": record.state.value,
                        "issued_at": record.issued_at,
                        "last_seen": record.last_seen,
                    }
                    for record in self.keys.values()
                ],
                "counters": self.counters,
            }
        tmp = f"{path}.tmp"
        with open(tmp, "w") as fh:
            json.dump(snapshot, fh)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def load_state(self, path: str) -> None:
        with open(path) as fh:
            snapshot = json.load(fh)
        with self._lock:
            self.keys.clear()
            for row in snapshot["keys"]:
                key = SecretKey(bytes.fromhex(row["key"]))
                identity = KeyIdentity(bytes.fromhex(row["identity"]))
                self.keys[identity] = KeyRecord(
                    key=key,
                    identity=identity,
                    state=KeyState(row["state"]),
                    issued_at=row["issued_at"],
                    last_seen=row["last_seen"],
                )
            self.counters.update(snapshot.get("counters", {}))

    # --- HTTP-shaped interface ---

    def handle(
        self,
        method: str,
        path: str,
        query: Optional[dict] = None,
        headers: Optional[dict] = None,
        body: bytes = b"",
        now: int = 0,
    ) -> tuple[int, bytes]:
        """Route one request; returns (status, body bytes)."""
        query = query or {}
        headers = headers or {}
        if method == "GET" and path.startswith("/firmware/"):
            name = path[len("/firmware/") :]
            if name not in self.registry:
                return 404, b"unknown firmware image"
            return 200, crypto.encode_container(self.registry.get(name))
        if method == "GET" and path == "/keys":
            try:
                count = int(query.get("count", "0"))
            except ValueError:
                return 400, b"bad count"
            if count < 1:
                return 400, b"count must be >= 1"
            token = headers.get("X-Box-Token", "")
            try:
                _, issued = self.handle_box_download([], count, token, now)
            except AuthError:
                return 401, b"bad token"
            except ShortageError as exc:
                return 409, f"short by {exc.deficit} keys".encode()
            return 200, crypto.encode_key_file([(r.identity, r.key) for r in issued])
        if method == "POST" and path == "/readings":
            try:
                msg = crypto.decode_sealed(body)
            except crypto.FormatError:
                return 400, b"malformed reading"
            try:
                self.ingest_reading(msg, now)
            except UnknownIdentityError:
                return 404, b"unknown identity"
            except RejectedError:
                return 403, b"blacklisted"
            except AuthError:
                return 401, b"authentication failed"
            return 200, b"ok"
        if method == "GET" and path == "/status":
            status = {
                "keys": self.state_counts(),
                "readings": len(self.readings),
                "counters": self.counters,
                "images": self.registry.names(),
            }
            return 200, json.dumps(status, sort_keys=True).encode()
        return 404, b"not found"
