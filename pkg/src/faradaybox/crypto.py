"""Keys, message sealing, firmware containers and the erasure proof.

Primitive choices: SHA-256 for identities and digests, ChaCha20-Poly1305
for authenticated encryption (32-byte keys, 12-byte nonces), Ed25519 for
image signatures. The erasure stream is SHA-256 in counter mode so a
verifier can regenerate it independently.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305

KEY_LEN = 32
IDENTITY_LEN = 32
NONCE_LEN = 12

# 32-byte marker compiled into runtime firmware templates where the
# device-individual key gets written.
KEY_PLACEHOLDER = b"KEY_PLACEHOLDER_0123456789ABCDEF"
assert len(KEY_PLACEHOLDER) == KEY_LEN

# 16-byte markers the box appends to a bootloader-stage blob, each followed
# by a 32-byte value: the box's verifying key and the per-device erasure
# challenge seed. The new bootloader reads both out of its own image.
PUBKEY_MARKER = b"BOXPUBKEYED25519"
CHALLENGE_MARKER = b"ERASECHALLENGE01"

CONTAINER_MAGIC = b"FARADAYFWIMAGE01"


class AuthError(Exception):
    """Message failed authentication or was sealed under a different key."""


class PatchError(Exception):
    """Firmware image cannot be patched (bad placeholders)."""


class FormatError(Exception):
    """Malformed wire bytes."""


class ImageKind(Enum):
    BOOTLOADER_STAGE = 0
    RUNTIME_TEMPLATE = 1
    RUNTIME_PATCHED = 2


@dataclass(frozen=True)
class SecretKey:
    """32-byte symmetric key. Never shows its value in repr/str."""

    value: bytes

    def __post_init__(self) -> None:
        if len(self.value) != KEY_LEN:
            raise ValueError(f"secret key must be {KEY_LEN} bytes")

    def __repr__(self) -> str:  # keep key bytes out of logs and tracebacks
        return "SecretKey(<redacted>)"

    __str__ = __repr__


@dataclass(frozen=True, order=True)
class KeyIdentity:
    """SHA-256 digest of a secret key; safe to send and index by."""

    digest: bytes

    def __post_init__(self) -> None:
        if len(self.digest) != IDENTITY_LEN:
            raise ValueError(f"identity must be {IDENTITY_LEN} bytes")

    def hex(self) -> str:
        return self.digest.hex()

    def __repr__(self) -> str:
        return f"KeyIdentity({self.digest.hex()[:12]}…)"


@dataclass(frozen=True)
class FirmwareImage:
    name: str
    kind: ImageKind
    blob: bytes
    placeholder_offsets: tuple[int, ...] = ()
    embedded_pubkey: Optional[bytes] = None
    signature: Optional[bytes] = None


@dataclass(frozen=True)
class SealedMessage:
    """AEAD-protected payload with a cleartext identity header.

    The header and nonce are bound into the authentication tag as
    associated data, so any tampering fails open().
    """

    identity: KeyIdentity
    nonce: bytes
    ciphertext: bytes

    def __post_init__(self) -> None:
        if len(self.nonce) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes")


@dataclass(frozen=True)
class ErasureProof:
    challenge_seed: bytes
    proof_digest: bytes


class SigningKeyPair:
    """Ed25519 pair; the private half lives only in the box's HSM region."""

    def __init__(self, private: Ed25519PrivateKey):
        self._private = private
        self.public_bytes = private.public_key().public_bytes_raw()

    @classmethod
    def generate(cls, rng) -> "SigningKeyPair":
        return cls(Ed25519PrivateKey.from_private_bytes(rng.randbytes(32)))

    @classmethod
    def from_private_bytes(cls, raw: bytes) -> "SigningKeyPair":
        return cls(Ed25519PrivateKey.from_private_bytes(raw))

    def private_bytes(self) -> bytes:
        return self._private.private_bytes_raw()

    def sign(self, message: bytes) -> bytes:
        return self._private.sign(message)

    def __repr__(self) -> str:
        return f"SigningKeyPair(pub={self.public_bytes.hex()[:12]}…)"


def generate_key(rng) -> SecretKey:
    """Draw a fresh 32-byte key from the given randomness source.

    rng needs a randbytes(n) method: random.SystemRandom in production,
    a seeded random.Random in reproducible runs.
    """
    return SecretKey(rng.randbytes(KEY_LEN))


def derive_identity(key: SecretKey) -> KeyIdentity:
    return KeyIdentity(hashlib.sha256(key.value).digest())


def find_placeholders(blob: bytes) -> tuple[int, ...]:
    """All occurrences of the key placeholder pattern in a blob."""
    offsets = []
    start = 0
    while True:
        idx = blob.find(KEY_PLACEHOLDER, start)
        if idx < 0:
            break
        offsets.append(idx)
        start = idx + 1
    return tuple(offsets)


def validate_template(image: FirmwareImage) -> None:
    """Check the template invariant: listed offsets are exactly the
    placeholder occurrences, non-empty and non-overlapping."""
    if image.kind is not ImageKind.RUNTIME_TEMPLATE:
        raise PatchError(f"{image.name}: not a runtime template")
    offsets = sorted(image.placeholder_offsets)
    if not offsets:
        raise PatchError(f"{image.name}: template lists no placeholder offsets")
    for prev, cur in zip(offsets, offsets[1:]):
        if cur < prev + KEY_LEN:
            raise PatchError(f"{image.name}: overlapping placeholder offsets")
    found = find_placeholders(image.blob)
    if tuple(offsets) != found:
        raise PatchError(
            f"{image.name}: placeholder offsets {tuple(offsets)} do not match "
            f"occurrences found in blob {found}"
        )


def patch_image(template: FirmwareImage, key: SecretKey) -> FirmwareImage:
    """Write the key over every placeholder; returns a new patched image."""
    validate_template(template)
    blob = bytearray(template.blob)
    for off in template.placeholder_offsets:
        blob[off : off + KEY_LEN] = key.value
    return FirmwareImage(
        name=template.name,
        kind=ImageKind.RUNTIME_PATCHED,
        blob=bytes(blob),
        placeholder_offsets=template.placeholder_offsets,
        embedded_pubkey=template.embedded_pubkey,
        signature=None,
    )


def signing_payload(image: FirmwareImage) -> bytes:
    """Canonical bytes covered by an image signature: the container
    serialization without its signature block."""
    return _encode_container_body(image)


def sign_image(image: FirmwareImage, keypair: SigningKeyPair) -> FirmwareImage:
    if image.signature is not None:
        raise ValueError(f"{image.name}: already signed")
    return replace(image, signature=keypair.sign(signing_payload(image)))


def verify_image(image: FirmwareImage, pubkey: bytes) -> bool:
    """True iff the image carries a valid signature under pubkey."""
    if image.signature is None:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(pubkey).verify(
            image.signature, signing_payload(image)
        )
        return True
    except (InvalidSignature, ValueError):
        return False


# --- sealed messages -------------------------------------------------------


def make_nonce(boot_counter: int, msg_counter: int) -> bytes:
    """12-byte nonce from the sender's (boot, message) counters."""
    return struct.pack(">IQ", boot_counter, msg_counter)


def seal(
    payload: bytes,
    key: SecretKey,
    nonce: bytes,
    identity: Optional[KeyIdentity] = None,
) -> SealedMessage:
    """Seal under key; the header identity defaults to the key's own but a
    sender may present a cached one (it is bound into the tag either way)."""
    if identity is None:
        identity = derive_identity(key)
    ct = ChaCha20Poly1305(key.value).encrypt(nonce, payload, identity.digest)
    return SealedMessage(identity=identity, nonce=nonce, ciphertext=ct)


def open_sealed(msg: SealedMessage, key: SecretKey) -> bytes:
    """Authenticate and decrypt; AuthError on any mismatch or tampering."""
    identity = derive_identity(key)
    if identity != msg.identity:
        raise AuthError("message identity does not match key")
    try:
        return ChaCha20Poly1305(key.value).decrypt(
            msg.nonce, msg.ciphertext, identity.digest
        )
    except Exception as exc:
        raise AuthError("authentication failed") from exc


def encode_sealed(msg: SealedMessage) -> bytes:
    """identity(32) | nonce(12) | ct_len(4 BE) | ciphertext+tag"""
    return (
        msg.identity.digest
        + msg.nonce
        + struct.pack(">I", len(msg.ciphertext))
        + msg.ciphertext
    )


def decode_sealed(raw: bytes) -> SealedMessage:
    header = IDENTITY_LEN + NONCE_LEN + 4
    if len(raw) < header:
        raise FormatError("sealed message too short")
    identity = KeyIdentity(raw[:IDENTITY_LEN])
    nonce = raw[IDENTITY_LEN : IDENTITY_LEN + NONCE_LEN]
    (ct_len,) = struct.unpack(">I", raw[IDENTITY_LEN + NONCE_LEN : header])
    ct = raw[header : header + ct_len]
    if len(ct) != ct_len or len(raw) != header + ct_len:
        raise FormatError("sealed message length mismatch")
    return SealedMessage(identity=identity, nonce=nonce, ciphertext=ct)


# --- secure erasure --------------------------------------------------------


def erasure_challenge(rng, memory_size: int) -> bytes:
    """Fresh 32-byte seed; memory_size must match the device's declared
    writable region or verification is meaningless."""
    if memory_size < 0:
        raise ValueError("memory_size must be >= 0")
    return rng.randbytes(32)


def erasure_stream(challenge_seed: bytes, length: int) -> bytes:
    """Deterministic fill stream: SHA-256(seed | counter) blocks."""
    out = bytearray()
    counter = 0
    while len(out) < length:
        out.extend(hashlib.sha256(challenge_seed + struct.pack(">Q", counter)).digest())
        counter += 1
    return bytes(out[:length])


def erasure_respond(memory: bytearray, challenge_seed: bytes) -> ErasureProof:
    """Honest responder: overwrite the whole region, digest the result.

    The device has nowhere else to store its old contents, so producing
    the right digest while keeping data back requires storage it does not
    have. Mutates memory in place.
    """
    memory[:] = erasure_stream(challenge_seed, len(memory))
    return ErasureProof(
        challenge_seed=challenge_seed,
        proof_digest=hashlib.sha256(bytes(memory)).digest(),
    )


def erasure_verify(proof: ErasureProof, challenge_seed: bytes, memory_size: int) -> bool:
    """Recompute the expected stream digest locally and compare."""
    if proof.challenge_seed != challenge_seed:
        return False
    expected = hashlib.sha256(erasure_stream(challenge_seed, memory_size)).digest()
    return proof.proof_digest == expected


def encode_erasure_proof(proof: ErasureProof) -> bytes:
    return proof.challenge_seed + proof.proof_digest


def decode_erasure_proof(raw: bytes) -> ErasureProof:
    if len(raw) != 64:
        raise FormatError("erasure proof must be 64 bytes")
    return ErasureProof(challenge_seed=raw[:32], proof_digest=raw[32:])


# --- key transfer file -----------------------------------------------------


def encode_key_file(keys: list[tuple[KeyIdentity, SecretKey]]) -> bytes:
    """count(4 BE) then (identity 32 | key 32) records."""
    out = bytearray(struct.pack(">I", len(keys)))
    for identity, key in keys:
        out.extend(identity.digest)
        out.extend(key.value)
    return bytes(out)


def decode_key_file(raw: bytes) -> list[tuple[KeyIdentity, SecretKey]]:
    if len(raw) < 4:
        raise FormatError("key file too short")
    (count,) = struct.unpack(">I", raw[:4])
    record = IDENTITY_LEN + KEY_LEN
    if len(raw) != 4 + count * record:
        raise FormatError("key file length mismatch")
    keys = []
    for i in range(count):
        base = 4 + i * record
        identity = KeyIdentity(raw[base : base + IDENTITY_LEN])
        key = SecretKey(raw[base + IDENTITY_LEN : base + record])
        keys.append((identity, key))
    return keys


# --- firmware container ----------------------------------------------------


def _encode_container_body(image: FirmwareImage) -> bytes:
    out = bytearray(CONTAINER_MAGIC)
    out.append(image.kind.value)
    out.extend(struct.pack(">I", len(image.placeholder_offsets)))
    for off in image.placeholder_offsets:
        out.extend(struct.pack(">Q", off))
    out.extend(struct.pack(">Q", len(image.blob)))
    out.extend(image.blob)
    return bytes(out)


def encode_container(image: FirmwareImage) -> bytes:
    """Container body plus the optional signature block."""
    out = bytearray(_encode_container_body(image))
    if image.signature is None:
        out.append(0)
    else:
        out.append(1)
        out.extend(struct.pack(">H", len(image.signature)))
        out.extend(image.signature)
    return bytes(out)


def decode_container(raw: bytes, name: str = "") -> FirmwareImage:
    """Parse container bytes; the name is transport context, not stored."""
    pos = len(CONTAINER_MAGIC)
    if raw[:pos] != CONTAINER_MAGIC:
        raise FormatError("bad container magic")
    try:
        kind = ImageKind(raw[pos])
        pos += 1
        (n_offsets,) = struct.unpack(">I", raw[pos : pos + 4])
        pos += 4
        offsets = []
        for _ in range(n_offsets):
            (off,) = struct.unpack(">Q", raw[pos : pos + 8])
            offsets.append(off)
            pos += 8
        (blob_len,) = struct.unpack(">Q", raw[pos : pos + 8])
        pos += 8
        blob = raw[pos : pos + blob_len]
        if len(blob) != blob_len:
            raise FormatError("container blob truncated")
        pos += blob_len
        flag = raw[pos]
        pos += 1
        signature = None
        if flag == 1:
            (sig_len,) = struct.unpack(">H", raw[pos : pos + 2])
            pos += 2
            signature = raw[pos : pos + sig_len]
            if len(signature) != sig_len:
                raise FormatError("container signature truncated")
            pos += sig_len
        elif flag != 0:
            raise FormatError("bad signature presence flag")
        if pos != len(raw):
            raise FormatError("trailing bytes after container")
    except (IndexError, struct.error) as exc:
        raise FormatError("container truncated") from exc
    return FirmwareImage(
        name=name,
        kind=kind,
        blob=blob,
        placeholder_offsets=tuple(offsets),
        embedded_pubkey=extract_marked_value(blob, PUBKEY_MARKER)
        if kind is ImageKind.BOOTLOADER_STAGE
        else None,
        signature=signature,
    )


def embed_marked_value(blob: bytes, marker: bytes, value: bytes) -> bytes:
    """Append a marker + 32-byte value record to a blob."""
    if len(marker) != 16 or len(value) != 32:
        raise ValueError("marker must be 16 bytes, value 32 bytes")
    return blob + marker + value


def extract_marked_value(blob: bytes, marker: bytes) -> Optional[bytes]:
    idx = blob.rfind(marker)
    if idx < 0 or idx + len(marker) + 32 > len(blob):
        return None
    return blob[idx + len(marker) : idx + len(marker) + 32]
