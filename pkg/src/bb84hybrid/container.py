"""The ``.bb84`` container: binary header + ciphertext, base64-armored.

See ``docs/format.md`` for the byte layout.  Parsing validates in a fixed
order (fence, base64, magic/version, field lengths, body digest) and
every failure is a typed :class:`~bb84hybrid.errors.ContainerError`.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import math
import re
import struct
from dataclasses import dataclass, field, replace

from .cipher import BLOCK_SIZE, IV_SIZE
from .errors import (
    BadMagic,
    BodyDigestMismatch,
    InvalidArmor,
    MalformedHeader,
    TruncatedHeader,
    UnsupportedVersion,
)
from .gate import TAG_SIZE
from .kdf import SALT_SIZE, KdfParams
from .signing import UNSIGNED, UNSIGNED_NAME, SignatureBlock

MAGIC = b"BB84"
VERSION = 1
BEGIN_FENCE = b"-----BEGIN BB84 CONTAINER-----"
END_FENCE = b"-----END BB84 CONTAINER-----"
LINE_WIDTH = 76
DIGEST_SIZE = 32

MAX_ITERATIONS = 10_000_000
MAX_TAG_FIELD = 64
MAX_SCHEME_NAME = 32
MAX_SIG_FIELD = 1 << 16
MAX_FILENAME = 255

# Armored bytes per payload byte in the large-file limit: 4/3 for base64,
# times 77/76 for the newline closing each 76-character line.
BASE64_FACTOR = (4 / 3) * (LINE_WIDTH + 1) / LINE_WIDTH

_SCHEME_RE = re.compile(rb"[a-z0-9_\-]+")
_B64_RE = re.compile(rb"[A-Za-z0-9+/]*={0,2}")
_B64_ALPHABET = frozenset(b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/=")


@dataclass(frozen=True)
class ContainerHeader:
    kdf: KdfParams
    iv: bytes
    plaintext_length: int
    plaintext_sha256: bytes
    ciphertext_sha256: bytes
    hmac: bytes = bytes(TAG_SIZE)
    signature: SignatureBlock = UNSIGNED
    filename_hint: str = ""
    magic: bytes = MAGIC
    version: int = VERSION

    def __post_init__(self) -> None:
        if len(self.iv) != IV_SIZE:
            raise ValueError(f"iv must be {IV_SIZE} bytes")
        if len(self.plaintext_sha256) != DIGEST_SIZE or len(self.ciphertext_sha256) != DIGEST_SIZE:
            raise ValueError("digests must be 32 bytes")
        if len(self.filename_hint.encode("utf-8")) > MAX_FILENAME:
            raise ValueError(f"filename hint exceeds {MAX_FILENAME} bytes")
        if self.plaintext_length < 0:
            raise ValueError("plaintext_length must be non-negative")


@dataclass(frozen=True)
class ContainerFile:
    header: ContainerHeader
    body: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if not self.body or len(self.body) % BLOCK_SIZE:
            raise ValueError("ciphertext body must be a positive multiple of 16 bytes")


# -- encoding ---------------------------------------------------------------

def _u8_field(data: bytes) -> bytes:
    return struct.pack(">B", len(data)) + data


def _u32_field(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def encode_header(header: ContainerHeader) -> bytes:
    sig = header.signature
    return b"".join(
        [
            header.magic,
            struct.pack(">BI", header.version, header.kdf.iterations),
            _u8_field(header.kdf.salt),
            _u8_field(header.iv),
            struct.pack(">Q", header.plaintext_length),
            _u8_field(header.plaintext_sha256),
            _u8_field(header.ciphertext_sha256),
            _u8_field(header.hmac),
            _u8_field(sig.name.encode("ascii")),
            _u32_field(sig.public_key),
            _u32_field(sig.signature),
            _u8_field(header.filename_hint.encode("utf-8")),
        ]
    )


def metadata_bytes(header: ContainerHeader) -> bytes:
    """The bytes the HMAC covers: the header with tag and signature blanked."""
    return encode_header(replace(header, hmac=bytes(TAG_SIZE), signature=UNSIGNED))


def to_binary(container: ContainerFile) -> bytes:
    return encode_header(container.header) + struct.pack(">Q", len(container.body)) + container.body


def armor(payload: bytes) -> bytes:
    # encodebytes wraps at 76 characters and ends every line with "\n".
    return BEGIN_FENCE + b"\n" + base64.encodebytes(payload) + END_FENCE + b"\n"


def serialize(container: ContainerFile) -> bytes:
    return armor(to_binary(container))


# -- parsing ----------------------------------------------------------------

def dearmor(data: bytes) -> bytes:
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise InvalidArmor("container input must be bytes")
    text = bytes(data).strip(b" \t\r\n")
    if not text.startswith(BEGIN_FENCE):
        raise InvalidArmor("missing BEGIN BB84 CONTAINER fence")
    if not text.endswith(END_FENCE):
        raise InvalidArmor("missing END BB84 CONTAINER fence")
    if len(text) < len(BEGIN_FENCE) + len(END_FENCE):
        raise InvalidArmor("fences overlap")
    region = text[len(BEGIN_FENCE) : len(text) - len(END_FENCE)]
    compact = region.replace(b"\r\n", b"\n").replace(b"\n", b"")
    if not compact:
        raise InvalidArmor("empty armor body")
    if len(compact) % 4 or not _B64_RE.fullmatch(compact):
        bad = next((i for i, b in enumerate(compact) if b not in _B64_ALPHABET), None)
        where = f" (invalid character at offset {bad})" if bad is not None else ""
        raise InvalidArmor(f"base64 decoding failed{where}")
    try:
        return base64.b64decode(compact, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise InvalidArmor(f"base64 decoding failed: {exc}") from None


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.pos + n
        if end > len(self.data):
            raise TruncatedHeader(f"input ends inside {what} (need {n} bytes at offset {self.pos})")
        out = self.data[self.pos : end]
        self.pos = end
        return out

    def uint(self, fmt: str, what: str) -> int:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))[0]

    def u8_field(self, what: str, *, exact: int | None = None, limit: int | None = None) -> bytes:
        n = self.uint(">B", f"{what} length")
        if exact is not None and n != exact:
            raise MalformedHeader(f"{what} must be {exact} bytes, header declares {n}")
        if limit is not None and n > limit:
            raise MalformedHeader(f"{what} longer than {limit} bytes")
        return self.take(n, what)

    def u32_field(self, what: str, limit: int) -> bytes:
        n = self.uint(">I", f"{what} length")
        if n > limit:
            raise MalformedHeader(f"{what} declares {n} bytes (limit {limit})")
        return self.take(n, what)


def from_binary(payload: bytes, *, check_digest: bool = True) -> ContainerFile:
    r = _Reader(payload)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise BadMagic(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.uint(">B", "version")
    if version != VERSION:
        raise UnsupportedVersion(f"container version {version} is not supported (expected {VERSION})")

    iterations = r.uint(">I", "kdf iterations")
    if not 1 <= iterations <= MAX_ITERATIONS:
        raise MalformedHeader(f"kdf iteration count {iterations} out of range")
    salt = r.u8_field("salt", exact=SALT_SIZE)
    iv = r.u8_field("iv", exact=IV_SIZE)
    plaintext_length = r.uint(">Q", "plaintext length")
    plaintext_sha256 = r.u8_field("plaintext sha256", exact=DIGEST_SIZE)
    ciphertext_sha256 = r.u8_field("ciphertext sha256", exact=DIGEST_SIZE)
    tag = r.u8_field("hmac", limit=MAX_TAG_FIELD)

    name = r.u8_field("signature scheme", limit=MAX_SCHEME_NAME)
    if name and not _SCHEME_RE.fullmatch(name):
        raise MalformedHeader("signature scheme name is not a plain identifier")
    public_key = r.u32_field("signature public key", MAX_SIG_FIELD)
    signature = r.u32_field("signature", MAX_SIG_FIELD)
    scheme = name.decode("ascii") or UNSIGNED_NAME
    if scheme == UNSIGNED_NAME and (public_key or signature):
        raise MalformedHeader("unsigned container carries signature data")

    raw_name = r.u8_field("filename hint", limit=MAX_FILENAME)
    try:
        filename = raw_name.decode("utf-8")
    except UnicodeDecodeError:
        raise MalformedHeader("filename hint is not valid UTF-8") from None

    body_len = r.uint(">Q", "body length")
    remaining = len(payload) - r.pos
    if body_len > remaining:
        raise TruncatedHeader(f"body declares {body_len} bytes but only {remaining} follow")
    if body_len < remaining:
        raise MalformedHeader(f"{remaining - body_len} unexpected trailing bytes after body")
    if body_len == 0 or body_len % BLOCK_SIZE:
        raise MalformedHeader(f"body length {body_len} is not a positive multiple of {BLOCK_SIZE}")
    if body_len != padded_length(plaintext_length):
        raise MalformedHeader(
            f"body length {body_len} inconsistent with plaintext length {plaintext_length}"
        )
    body = r.take(body_len, "body")

    if check_digest and hashlib.sha256(body).digest() != ciphertext_sha256:
        raise BodyDigestMismatch("ciphertext SHA-256 does not match the header")

    header = ContainerHeader(
        kdf=KdfParams(salt=salt, iterations=iterations),
        iv=iv,
        plaintext_length=plaintext_length,
        plaintext_sha256=plaintext_sha256,
        ciphertext_sha256=ciphertext_sha256,
        hmac=tag,
        signature=SignatureBlock(scheme, public_key, signature),
        filename_hint=filename,
        magic=magic,
        version=version,
    )
    return ContainerFile(header, body)


def parse(data: bytes) -> ContainerFile:
    return from_binary(dearmor(data))


# -- size model -------------------------------------------------------------

def padded_length(plaintext_length: int) -> int:
    return (plaintext_length // BLOCK_SIZE + 1) * BLOCK_SIZE


def binary_size(
    plaintext_length: int,
    *,
    scheme_name: str = UNSIGNED_NAME,
    public_key_size: int = 0,
    signature_size: int = 0,
    filename_hint: str = "",
    tag_size: int = TAG_SIZE,
) -> int:
    fixed = (
        4  # magic
        + 1 + 4  # version, iterations
        + 1 + SALT_SIZE
        + 1 + IV_SIZE
        + 8  # plaintext length
        + 2 * (1 + DIGEST_SIZE)
        + 1 + tag_size
        + 1 + 4 + 4  # scheme name length, public key length, signature length
        + 1  # filename length
        + 8  # body length
    )
    variable = len(scheme_name.encode("ascii")) + public_key_size + signature_size + len(filename_hint.encode("utf-8"))
    return fixed + variable + padded_length(plaintext_length)


def armored_size(binary_length: int) -> int:
    b64 = 4 * math.ceil(binary_length / 3)
    lines = math.ceil(b64 / LINE_WIDTH)
    return len(BEGIN_FENCE) + 1 + b64 + lines + len(END_FENCE) + 1


def predicted_size(plaintext_length: int, **kwargs) -> int:
    """Exact serialized size of a container for the given plaintext length."""
    return armored_size(binary_size(plaintext_length, **kwargs))
