"""PBKDF2-HMAC-SHA256 derivation of the AES-256 key from sifted key bits."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field

from .errors import KeyMaterialError
from .qkd import BitString

SALT_SIZE = 16
KEY_SIZE = 32
DEFAULT_ITERATIONS = 100_000
MIN_KEY_BITS = 128


@dataclass(frozen=True)
class KdfParams:
    salt: bytes
    iterations: int = DEFAULT_ITERATIONS
    output_length: int = KEY_SIZE

    def __post_init__(self) -> None:
        if not isinstance(self.salt, (bytes, bytearray)) or len(self.salt) != SALT_SIZE:
            raise ValueError(f"salt must be exactly {SALT_SIZE} bytes")
        if isinstance(self.iterations, bool) or not isinstance(self.iterations, int) or self.iterations < 1:
            raise ValueError("iterations must be a positive integer")
        if self.output_length != KEY_SIZE:
            raise ValueError(f"output_length is fixed at {KEY_SIZE} bytes")
        object.__setattr__(self, "salt", bytes(self.salt))

    @classmethod
    def generate(cls, iterations: int = DEFAULT_ITERATIONS, salt: bytes | None = None) -> KdfParams:
        return cls(salt=os.urandom(SALT_SIZE) if salt is None else salt, iterations=iterations)


@dataclass(frozen=True)
class DerivedKey:
    key_bytes: bytes = field(repr=False)
    params: KdfParams

    def __post_init__(self) -> None:
        if len(self.key_bytes) != KEY_SIZE:
            raise ValueError(f"derived key must be {KEY_SIZE} bytes")


def bits_to_key_material(bits: BitString) -> bytes:
    """Pack bits MSB-first into bytes, dropping a trailing partial byte."""
    if len(bits) < 8:
        raise KeyMaterialError(f"need at least 8 bits of key material, got {len(bits)}")
    return bits.to_bytes()


def pbkdf2_sha256(password: bytes, salt: bytes, iterations: int, length: int = KEY_SIZE) -> bytes:
    if iterations < 1:
        raise ValueError("iterations must be a positive integer")
    return hashlib.pbkdf2_hmac("sha256", password, salt, iterations, length)


def derive_key(key_material: BitString, params: KdfParams) -> DerivedKey:
    if len(key_material) < MIN_KEY_BITS:
        raise KeyMaterialError(
            f"key material has {len(key_material)} bits; at least {MIN_KEY_BITS} are required"
        )
    raw = bits_to_key_material(key_material)
    return DerivedKey(pbkdf2_sha256(raw, params.salt, params.iterations, params.output_length), params)
