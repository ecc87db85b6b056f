"""Optional post-quantum signatures over the ciphertext.

Schemes are looked up by name in a small registry so that another
algorithm can be dropped in without touching the container or pipeline.
Only CRYSTALS-Dilithium2 ships, backed by the ``dilithium-py`` package.
"""

from __future__ import annotations

import base64
import binascii
import random
import re
from dataclasses import dataclass, field
from pathlib import Path

from dilithium_py.dilithium.dilithium import Dilithium
from dilithium_py.dilithium.default_parameters import DEFAULT_PARAMETERS

from .errors import SignatureSchemeError
from .qkd import default_rng

UNSIGNED_NAME = "none"


class SignatureScheme:
    """Interface every registered scheme implements."""

    name: str
    public_key_size: int
    secret_key_size: int
    signature_size: int

    def keygen(self, rng: random.Random) -> tuple[bytes, bytes]:
        raise NotImplementedError

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


class Dilithium2Scheme(SignatureScheme):
    # Round-3 Dilithium2 parameter set sizes, in bytes.
    name = "dilithium2"
    public_key_size = 1312
    secret_key_size = 2528
    signature_size = 2420

    def __init__(self) -> None:
        self._impl = Dilithium(DEFAULT_PARAMETERS["dilithium2"])

    def keygen(self, rng: random.Random) -> tuple[bytes, bytes]:
        # A private instance per call so the rng stream is never shared.
        impl = Dilithium(DEFAULT_PARAMETERS["dilithium2"])
        impl.random_bytes = rng.randbytes
        return impl.keygen()

    def sign(self, secret_key: bytes, message: bytes) -> bytes:
        if len(secret_key) != self.secret_key_size:
            raise SignatureSchemeError(
                f"{self.name} secret key must be {self.secret_key_size} bytes, got {len(secret_key)}"
            )
        try:
            return self._impl.sign(bytes(secret_key), bytes(message))
        except Exception as exc:
            raise SignatureSchemeError(f"malformed {self.name} secret key: {exc}") from exc

    def verify(self, public_key: bytes, message: bytes, signature: bytes) -> bool:
        if len(public_key) != self.public_key_size or len(signature) != self.signature_size:
            return False
        try:
            return bool(self._impl.verify(bytes(public_key), bytes(message), bytes(signature)))
        except Exception:
            return False


_REGISTRY: dict[str, SignatureScheme] = {}


def register_scheme(scheme: SignatureScheme) -> None:
    if scheme.name == UNSIGNED_NAME:
        raise SignatureSchemeError(f"{UNSIGNED_NAME!r} is reserved for unsigned containers")
    _REGISTRY[scheme.name] = scheme


def get_scheme(name: str) -> SignatureScheme:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise SignatureSchemeError(f"unknown signature scheme {name!r}") from None


def available_schemes() -> list[str]:
    return sorted(_REGISTRY)


register_scheme(Dilithium2Scheme())


@dataclass(frozen=True)
class SignatureBlock:
    """Signature material as stored in a container header."""

    name: str = UNSIGNED_NAME
    public_key: bytes = b""
    signature: bytes = b""

    def __post_init__(self) -> None:
        if self.name == UNSIGNED_NAME:
            if self.public_key or self.signature:
                raise ValueError("an unsigned block carries no key or signature")

    @property
    def signed(self) -> bool:
        return self.name != UNSIGNED_NAME

    def check_sizes(self) -> None:
        """Raise unless the key and signature fit the named scheme."""
        if not self.signed:
            return
        scheme = get_scheme(self.name)
        if len(self.public_key) != scheme.public_key_size or len(self.signature) != scheme.signature_size:
            raise SignatureSchemeError(f"{self.name} block has wrong key or signature size")


UNSIGNED = SignatureBlock()


def keygen(scheme: str, rng: random.Random | None = None) -> tuple[bytes, bytes]:
    if scheme == UNSIGNED_NAME:
        raise SignatureSchemeError("scheme 'none' has no keys to generate")
    return get_scheme(scheme).keygen(rng or default_rng())


def sign(ciphertext: bytes, secret_key: bytes, scheme: str = "dilithium2") -> bytes:
    return get_scheme(scheme).sign(secret_key, ciphertext)


def verify(signature: bytes, ciphertext: bytes, public_key: bytes, scheme: str = "dilithium2") -> bool:
    """True iff ``signature`` is valid for exactly these bytes; never raises."""
    try:
        impl = get_scheme(scheme)
    except SignatureSchemeError:
        return False
    return impl.verify(public_key, ciphertext, signature)


# -- armored key files ------------------------------------------------------

_SECRET_LABEL = "BB84 SIGNING KEY"
_PUBLIC_LABEL = "BB84 PUBLIC KEY"
_ARMOR_RE = re.compile(
    r"-----BEGIN (?P<label>[A-Z0-9 ]+)-----\r?\n(?P<headers>(?:[A-Za-z-]+: [^\r\n]*\r?\n)*)\r?\n?"
    r"(?P<body>[A-Za-z0-9+/=\r\n]*?)\r?\n?-----END (?P=label)-----"
)


@dataclass(frozen=True)
class SigningKey:
    scheme: str
    public_key: bytes
    secret_key: bytes = field(repr=False)


def _armor(label: str, scheme: str, payload: bytes) -> str:
    body = base64.b64encode(payload).decode("ascii")
    lines = [body[i : i + 64] for i in range(0, len(body), 64)]
    return "\n".join([f"-----BEGIN {label}-----", f"Scheme: {scheme}", "", *lines, f"-----END {label}-----", ""])


def _dearmor(text: str, label: str) -> tuple[str, bytes]:
    m = _ARMOR_RE.search(text)
    if not m or m.group("label") != label:
        raise SignatureSchemeError(f"not a {label.lower()} file")
    headers = dict(
        line.split(": ", 1) for line in m.group("headers").splitlines() if line.strip()
    )
    scheme = headers.get("Scheme", "")
    try:
        payload = base64.b64decode("".join(m.group("body").split()), validate=True)
    except (binascii.Error, ValueError) as exc:
        raise SignatureSchemeError(f"corrupt {label.lower()} body: {exc}") from None
    return scheme, payload


def dump_signing_key(key: SigningKey) -> str:
    return _armor(_SECRET_LABEL, key.scheme, key.public_key + key.secret_key)


def load_signing_key(text: str) -> SigningKey:
    scheme_name, payload = _dearmor(text, _SECRET_LABEL)
    scheme = get_scheme(scheme_name)
    if len(payload) != scheme.public_key_size + scheme.secret_key_size:
        raise SignatureSchemeError(f"{scheme_name} signing key file has the wrong length")
    return SigningKey(scheme_name, payload[: scheme.public_key_size], payload[scheme.public_key_size :])


def dump_public_key(scheme: str, public_key: bytes) -> str:
    return _armor(_PUBLIC_LABEL, scheme, public_key)


def load_public_key(text: str) -> tuple[str, bytes]:
    scheme_name, payload = _dearmor(text, _PUBLIC_LABEL)
    if len(payload) != get_scheme(scheme_name).public_key_size:
        raise SignatureSchemeError(f"{scheme_name} public key file has the wrong length")
    return scheme_name, payload


def read_signing_key(path: str | Path) -> SigningKey:
    return load_signing_key(Path(path).read_text(encoding="ascii"))


def read_public_key(path: str | Path) -> tuple[str, bytes]:
    return load_public_key(Path(path).read_text(encoding="ascii"))
