"""Deterministic tampering of a valid container/key pair.

Each scenario takes a valid ``.bb84`` container and its key file, alters
one or both, and returns a manifest naming the change and the typed error
the decryption chain must raise.  Manifests never contain key bits.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from typing import Any, Literal

import numpy as np

from . import container
from .container import BEGIN_FENCE, END_FENCE
from .pipeline import dump_key_file, load_key_file
from .qkd import BitString
from .signing import UNSIGNED_NAME, SignatureBlock, get_scheme, keygen

FaultKind = Literal[
    "wrong_key",
    "corrupt_body",
    "corrupt_armor",
    "strip_hmac",
    "bad_signature",
    "wrong_key_and_corrupt_file",
]
FAULT_KINDS: tuple[str, ...] = FaultKind.__args__  # type: ignore[attr-defined]

# Characters that can never occur inside the base64 region.
_ARMOR_JUNK = b"!@#$%^&*(),.;:?~`|<>[]{}- _\\\"'\x00\xff"


@dataclass(frozen=True)
class FaultScenario:
    kind: FaultKind
    params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in FAULT_KINDS:
            raise ValueError(f"unknown fault kind {self.kind!r}")


@dataclass
class TamperedInputs:
    container_bytes: bytes
    key_text: str
    manifest: dict[str, Any]


def random_scenario(kind: FaultKind, rng: random.Random, *, signed: bool = True) -> FaultScenario:
    """Draw a parameterisation of ``kind``.  Offsets are resolved at injection."""
    if kind in ("wrong_key", "wrong_key_and_corrupt_file"):
        params: dict[str, Any] = {
            "mode": rng.choice(["flip_bit", "truncate", "random_subset", "fresh_random"]),
            "position": rng.random(),
        }
        if kind == "wrong_key_and_corrupt_file":
            params.update(armor_position=rng.random(), junk=rng.randrange(len(_ARMOR_JUNK)))
    elif kind == "corrupt_body":
        params = {"position": rng.random(), "fix_digest": rng.random() < 0.5}
    elif kind == "corrupt_armor":
        params = {"position": rng.random(), "junk": rng.randrange(len(_ARMOR_JUNK))}
    elif kind == "strip_hmac":
        params = {"mode": rng.choice(["remove", "zero", "truncate", "flip"]), "position": rng.random()}
    elif kind == "bad_signature":
        targets = ["signature", "public_key", "foreign_key"] if signed else ["forge"]
        params = {"target": rng.choice(targets), "position": rng.random()}
    else:  # pragma: no cover - guarded by FaultScenario
        raise ValueError(kind)
    params["seed"] = rng.getrandbits(64)
    return FaultScenario(kind, params)


def _index(position: float, size: int) -> int:
    return min(int(position * size), size - 1)


def _flip(data: bytes, bit: int) -> bytes:
    out = bytearray(data)
    out[bit // 8] ^= 0x80 >> (bit % 8)
    return bytes(out)


def _wrong_key(bits: BitString, params: dict[str, Any], rng: random.Random) -> tuple[BitString, str]:
    # Only whole bytes feed the KDF, so every mode must change one of them.
    usable = (len(bits) // 8) * 8
    mode = params.get("mode", "flip_bit")
    arr = bits.array.copy()
    if mode == "flip_bit":
        i = _index(params.get("position", 0.0), usable)
        arr[i] ^= 1
        return BitString(arr), f"flipped key bit {i}"
    if mode == "truncate":
        keep_bytes = _index(params.get("position", 0.0), usable // 8)
        return BitString(arr[: keep_bytes * 8]), f"truncated key to its first {keep_bytes * 8} bits"
    if mode == "random_subset":
        k = max(8, _index(params.get("position", 0.0), usable))
        idx = np.sort(np.array(rng.sample(range(len(bits)), k)))
        sub = arr[idx]
        if np.array_equal(sub[: (k // 8) * 8], arr[: (k // 8) * 8]):
            sub[0] ^= 1
        return BitString(sub), f"replaced key with a random {k}-bit subset of itself"
    if mode == "fresh_random":
        fresh = np.frombuffer(rng.randbytes((len(bits) + 7) // 8), dtype=np.uint8)
        new = np.unpackbits(fresh)[: len(bits)]
        if np.array_equal(new[:usable], arr[:usable]):
            new[0] ^= 1
        return BitString(new), "replaced key with fresh random bits"
    raise ValueError(f"unknown wrong_key mode {mode!r}")


def _armor_region(data: bytes) -> tuple[int, int]:
    start = data.index(BEGIN_FENCE) + len(BEGIN_FENCE)
    end = data.rindex(END_FENCE)
    return start, end


def _corrupt_armor(data: bytes, position: float, junk_index: int) -> tuple[bytes, str]:
    start, end = _armor_region(data)
    offset = start + _index(position, end - start)
    junk = _ARMOR_JUNK[junk_index % len(_ARMOR_JUNK)]
    out = bytearray(data)
    out[offset] = junk
    return bytes(out), f"replaced armor byte {offset} with {bytes([junk])!r}"


def inject_fault(
    container_bytes: bytes,
    key_text: str,
    scenario: FaultScenario,
) -> TamperedInputs:
    """Apply ``scenario`` to a valid container and key; see module docstring."""
    p = scenario.params
    rng = random.Random(p.get("seed", 0))
    parsed = container.parse(container_bytes)
    header = parsed.header
    key = load_key_file(key_text)
    new_container, new_key = container_bytes, key_text
    notes: list[str] = []
    expected: str
    expected_diagnosis: str | None = None

    if scenario.kind in ("wrong_key", "wrong_key_and_corrupt_file"):
        bits, what = _wrong_key(key.bits, p, rng)
        new_key = dump_key_file(replace(key, bits=bits))
        notes.append(what)
        expected = "GateFail"
        if scenario.kind == "wrong_key_and_corrupt_file":
            new_container, what = _corrupt_armor(
                container_bytes, p.get("armor_position", 0.5), p.get("junk", 0)
            )
            notes.append(what)
            expected = "InvalidArmor"

    elif scenario.kind == "corrupt_body":
        bit = _index(p.get("position", 0.0), len(parsed.body) * 8)
        body = _flip(parsed.body, bit)
        notes.append(f"flipped ciphertext bit {bit}")
        if p.get("fix_digest"):
            header = replace(header, ciphertext_sha256=hashlib.sha256(body).digest())
            notes.append("recomputed the header's ciphertext digest")
            if header.signature.signed:
                # The signature covers the ciphertext and is checked first.
                expected = "BadSignature"
            else:
                expected = "GateFail"
                expected_diagnosis = "mismatch"
        else:
            expected = "BodyDigestMismatch"
        new_container = container.serialize(container.ContainerFile(header, body))

    elif scenario.kind == "corrupt_armor":
        new_container, what = _corrupt_armor(container_bytes, p.get("position", 0.0), p.get("junk", 0))
        notes.append(what)
        expected = "InvalidArmor"

    elif scenario.kind == "strip_hmac":
        mode = p.get("mode", "remove")
        tag = header.hmac
        if mode == "remove":
            tag, expected_diagnosis = b"", "missing_tag"
        elif mode == "zero":
            tag, expected_diagnosis = bytes(len(tag)), "missing_tag"
        elif mode == "truncate":
            n = _index(p.get("position", 0.0), len(tag) - 1) + 1
            tag, expected_diagnosis = tag[:n], "malformed_tag"
        elif mode == "flip":
            tag = _flip(tag, _index(p.get("position", 0.0), len(tag) * 8))
            expected_diagnosis = "mismatch"
            if not any(tag):
                expected_diagnosis = "missing_tag"
        else:
            raise ValueError(f"unknown strip_hmac mode {mode!r}")
        notes.append(f"HMAC tag {mode}: {len(header.hmac)} -> {len(tag)} bytes")
        header = replace(header, hmac=tag)
        new_container = container.serialize(container.ContainerFile(header, parsed.body))
        expected = "GateFail"

    elif scenario.kind == "bad_signature":
        block = header.signature
        target = p.get("target", "signature")
        if block.name == UNSIGNED_NAME or target == "forge":
            scheme = get_scheme("dilithium2")
            block = SignatureBlock(
                scheme.name, rng.randbytes(scheme.public_key_size), rng.randbytes(scheme.signature_size)
            )
            notes.append("attached a forged dilithium2 signature block")
        elif target == "signature":
            bit = _index(p.get("position", 0.0), len(block.signature) * 8)
            block = replace(block, signature=_flip(block.signature, bit))
            notes.append(f"flipped signature bit {bit}")
        elif target == "public_key":
            bit = _index(p.get("position", 0.0), len(block.public_key) * 8)
            block = replace(block, public_key=_flip(block.public_key, bit))
            notes.append(f"flipped public key bit {bit}")
        elif target == "foreign_key":
            pk, _ = keygen(block.name, rng)
            block = replace(block, public_key=pk)
            notes.append("swapped in an unrelated public key")
        else:
            raise ValueError(f"unknown bad_signature target {target!r}")
        header = replace(header, signature=block)
        new_container = container.serialize(container.ContainerFile(header, parsed.body))
        expected = "BadSignature"

    else:  # pragma: no cover
        raise ValueError(scenario.kind)

    manifest = {
        "kind": scenario.kind,
        "params": dict(p),
        "changes": notes,
        "expected_error": expected,
        "expected_diagnosis": expected_diagnosis,
        "original_container_sha256": hashlib.sha256(container_bytes).hexdigest(),
        "tampered_container_sha256": hashlib.sha256(new_container).hexdigest(),
        "key_modified": new_key != key_text,
    }
    return TamperedInputs(new_container, new_key, manifest)
