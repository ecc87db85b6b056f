"""Pre-decryption HMAC gate.

At encryption time the container header is MACed under the PBKDF2-derived
key.  At decryption time the same derivation is run on the key material
the recipient presents, the tag is recomputed, and the two tags are
compared in constant time.  Decryption is only possible with the key
handed back in a passing :class:`GateDecision`.
"""

from __future__ import annotations

import hashlib
import hmac
from dataclasses import dataclass, field
from typing import Literal

from .errors import KeyMaterialError
from .kdf import DerivedKey, KdfParams, derive_key
from .qkd import BitString

TAG_SIZE = 32

Diagnosis = Literal["ok", "missing_tag", "malformed_tag", "key_material_too_short", "mismatch"]

_MESSAGES: dict[str, str] = {
    "ok": "HMAC verified",
    "missing_tag": "HMAC tag missing or zeroed",
    "malformed_tag": "HMAC tag has the wrong length",
    "key_material_too_short": "presented key is too short to derive a key",
    "mismatch": "HMAC mismatch: presented key does not match the encryption key",
}


@dataclass(frozen=True)
class GateTag:
    hmac: bytes
    covered_metadata_digest: bytes

    def __post_init__(self) -> None:
        if len(self.hmac) != TAG_SIZE:
            raise ValueError(f"HMAC-SHA256 tag must be {TAG_SIZE} bytes")


@dataclass(frozen=True)
class GateDecision:
    passed: bool
    diagnosis: Diagnosis
    covered_metadata_digest: bytes
    key: DerivedKey | None = field(default=None, repr=False)

    @property
    def message(self) -> str:
        return _MESSAGES[self.diagnosis]


def compute_tag(derived: DerivedKey, metadata_bytes: bytes) -> GateTag:
    if not metadata_bytes:
        raise ValueError("metadata to authenticate must be non-empty")
    mac = hmac.new(derived.key_bytes, metadata_bytes, hashlib.sha256).digest()
    return GateTag(mac, hashlib.sha256(metadata_bytes).digest())


def tags_equal(a: bytes, b: bytes) -> bool:
    return hmac.compare_digest(a, b)


def verify_gate(
    presented_key_material: BitString,
    params: KdfParams,
    metadata_bytes: bytes,
    stored_tag: GateTag | bytes | None,
) -> GateDecision:
    """Decide whether the presented key may decrypt.

    A failed decision is an ordinary return value, never an exception, and
    carries no key.
    """
    digest = hashlib.sha256(metadata_bytes).digest()
    stored = stored_tag.hmac if isinstance(stored_tag, GateTag) else (stored_tag or b"")

    if not stored or not any(stored):
        return GateDecision(False, "missing_tag", digest)
    if len(stored) != TAG_SIZE:
        return GateDecision(False, "malformed_tag", digest)
    try:
        derived = derive_key(presented_key_material, params)
    except KeyMaterialError:
        return GateDecision(False, "key_material_too_short", digest)

    recomputed = compute_tag(derived, metadata_bytes)
    if tags_equal(recomputed.hmac, stored):
        return GateDecision(True, "ok", digest, derived)
    return GateDecision(False, "mismatch", digest)
