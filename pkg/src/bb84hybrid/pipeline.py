"""End-to-end encrypt and decrypt pipelines.

Encryption runs the stages ``qkd -> hmac -> aes -> signature -> export``:
the BB84 exchange, derivation of the gate/cipher key from Key A, AES-CBC
encryption, the optional signature over the ciphertext, and finally the
header assembly (which seals the HMAC tag, since the tag covers the
ciphertext digest) and atomic write-out.

Decryption checks, in order: armor and structure, signature, HMAC gate,
AES decryption and unpadding, and the plaintext SHA-256.  Every stage
failure stops the chain and raises a typed error.
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import re
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

from . import cipher, container, signing
from .errors import (
    BadSignature,
    BB84Error,
    ContainerError,
    EavesdropperDetected,
    GateFail,
    HashMismatch,
    KeyMaterialError,
    PipelineIOError,
    SignatureSchemeError,
    StageError,
)
from .gate import compute_tag, verify_gate
from .kdf import DEFAULT_ITERATIONS, SALT_SIZE, KdfParams, derive_key
from .metrics import MetricsRecord, StageTimer, emit_json_log, shannon_entropy, size_ratio
from .qkd import (
    NO_EAVESDROPPER,
    BitString,
    EavesdropperConfig,
    ExchangeTranscript,
    default_rng,
    run_exchange,
    run_exchange_until,
)

log = logging.getLogger(__name__)

ENCRYPT_STAGES = ("qkd", "hmac", "aes", "signature", "export")
DECRYPT_STAGES = ("parse", "signature", "hmac", "aes", "hash", "export")
DEFAULT_TARGET_BITS = 256


# -- key files --------------------------------------------------------------

KEY_BEGIN = "-----BEGIN BB84 KEY-----"
KEY_END = "-----END BB84 KEY-----"
_KEY_HEADER_RE = re.compile(r"^([A-Za-z0-9-]+): (.*)$")


@dataclass(frozen=True)
class KeyFile:
    """Bob's sifted key plus a public reference to the container it opens."""

    bits: BitString = field(repr=False)
    container_sha256: bytes | None = None
    salt: bytes | None = None
    iterations: int | None = None


def dump_key_file(key: KeyFile) -> str:
    nbits = len(key.bits)
    padded = BitString.concat([key.bits, BitString([0] * (-nbits % 8))])
    hexbits = padded.to_bytes().hex()
    lines = [KEY_BEGIN, f"Bits: {nbits}", "KDF: pbkdf2-hmac-sha256"]
    if key.iterations is not None:
        lines.append(f"Iterations: {key.iterations}")
    if key.salt is not None:
        lines.append(f"Salt: {key.salt.hex()}")
    if key.container_sha256 is not None:
        lines.append(f"Container-SHA256: {key.container_sha256.hex()}")
    lines.append("")
    lines += [hexbits[i : i + 64] for i in range(0, len(hexbits), 64)]
    lines += [KEY_END, ""]
    return "\n".join(lines)


def load_key_file(text: str) -> KeyFile:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if len(lines) < 2 or lines[0] != KEY_BEGIN or lines[-1] != KEY_END:
        raise KeyMaterialError("not a BB84 key file (missing fences)")
    headers: dict[str, str] = {}
    body: list[str] = []
    for ln in lines[1:-1]:
        m = _KEY_HEADER_RE.match(ln)
        if m and not body:
            headers[m.group(1).lower()] = m.group(2).strip()
        elif ln:
            body.append(ln)
    try:
        raw = bytes.fromhex("".join(body))
        nbits = int(headers.get("bits", len(raw) * 8))
        bits = BitString.from_bytes(raw, nbits)
        salt = bytes.fromhex(headers["salt"]) if "salt" in headers else None
        iterations = int(headers["iterations"]) if "iterations" in headers else None
        ref = bytes.fromhex(headers["container-sha256"]) if "container-sha256" in headers else None
    except ValueError as exc:
        raise KeyMaterialError(f"corrupt key file: {exc}") from None
    return KeyFile(bits, ref, salt, iterations)


def key_from_hex(text: str) -> BitString:
    try:
        raw = bytes.fromhex("".join(text.split()))
    except ValueError:
        raise KeyMaterialError("key hex is not valid hexadecimal") from None
    return BitString.from_bytes(raw)


def read_key_file(path: str | Path) -> KeyFile:
    try:
        text = Path(path).read_text(encoding="ascii")
    except (OSError, UnicodeDecodeError) as exc:
        raise KeyMaterialError(f"cannot read key file {path}: {exc}") from exc
    return load_key_file(text)


# -- atomic output ----------------------------------------------------------

def write_atomically(outputs: list[tuple[Path, bytes, int]]) -> None:
    """Write every ``(path, data, mode)`` or none of them.

    Data goes to temp files beside each target first; targets are only
    renamed into place once every temp file is complete.
    """
    temps: list[tuple[str, Path]] = []
    try:
        for path, data, mode in outputs:
            fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or Path("."))
            temps.append((tmp, path))
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.chmod(tmp, mode)
        done: list[Path] = []
        try:
            for tmp, path in temps:
                os.replace(tmp, path)
                done.append(path)
        except OSError:
            for path in done:
                path.unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise PipelineIOError(f"cannot write output: {exc}") from exc
    finally:
        for tmp, _ in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)


def _read_input(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise PipelineIOError(f"cannot read {path}: {exc}") from exc


# -- configuration ----------------------------------------------------------

@dataclass
class PipelineConfig:
    """Encryption settings.  Set at most one of ``target_key_bits`` and
    ``qubit_count``; with neither, a 256-bit sifted key is targeted."""

    target_key_bits: int | None = None
    qubit_count: int | None = None
    iterations: int = DEFAULT_ITERATIONS
    signing_key: signing.SigningKey | None = None
    eavesdropper: EavesdropperConfig = NO_EAVESDROPPER
    metrics_log: Path | None = None
    abort_qber: float | None = None
    store_filename: bool = True
    seed: int | None = None
    insecure_test_seed: bool = False

    def __post_init__(self) -> None:
        if self.qubit_count is not None and self.target_key_bits is not None:
            raise ValueError("set exactly one of qubit_count and target_key_bits")
        if self.qubit_count is None and self.target_key_bits is None:
            self.target_key_bits = DEFAULT_TARGET_BITS
        if self.seed is not None and not self.insecure_test_seed:
            raise ValueError("a fixed seed is only allowed with insecure_test_seed=True")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")

    @property
    def signature_scheme(self) -> str:
        return self.signing_key.scheme if self.signing_key else signing.UNSIGNED_NAME

    def make_rng(self) -> random.Random:
        return random.Random(self.seed) if self.seed is not None else default_rng()


@dataclass
class EncryptResult:
    container: container.ContainerFile
    container_path: Path
    key_path: Path
    record: MetricsRecord
    transcript: ExchangeTranscript = field(repr=False)


@dataclass
class DecryptResult:
    record: MetricsRecord
    output_path: Path | None
    plaintext: bytes | None = field(default=None, repr=False)
    stages_run: list[str] = field(default_factory=list)
    aes_decrypt_calls: int = 0


class _Stages:
    """Runs named stages under a timer and tags failures with the stage name."""

    def __init__(self) -> None:
        self.timer = StageTimer()
        self.run: list[str] = []

    @contextmanager
    def __call__(self, name: str) -> Iterator[None]:
        self.run.append(name)
        with self.timer.stage(name):
            try:
                yield
            except BB84Error as exc:
                exc.stage = name  # type: ignore[attr-defined]
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc


def _finish(record: MetricsRecord, stages: _Stages, metrics_log: Path | None) -> None:
    record.stage_timings = dict(stages.timer.stages)
    record.t_total = stages.timer.elapsed()
    if metrics_log is not None:
        emit_json_log(record, metrics_log)


def _fail(record: MetricsRecord, exc: BB84Error) -> None:
    record.error = exc.kind
    record.error_message = str(exc)


# -- encryption -------------------------------------------------------------

def encrypt_pipeline(
    config: PipelineConfig,
    input_path: str | Path,
    output_path: str | Path,
    key_path: str | Path,
) -> EncryptResult:
    input_path, output_path, key_path = Path(input_path), Path(output_path), Path(key_path)
    rng = config.make_rng()
    randbytes = rng.randbytes if config.seed is not None else os.urandom
    stages = _Stages()
    record = MetricsRecord(
        operation="encrypt",
        input_path=str(input_path),
        output_path=str(output_path),
        signature_scheme=config.signature_scheme,
    )
    try:
        plaintext = _read_input(input_path)
        record.input_size_bytes = len(plaintext)
        plaintext_digest = hashlib.sha256(plaintext).digest()
        record.plaintext_sha256 = plaintext_digest

        with stages("qkd"):
            if config.qubit_count is not None:
                transcript = run_exchange(config.qubit_count, config.eavesdropper, rng)
            else:
                transcript = run_exchange_until(config.target_key_bits, config.eavesdropper, rng)
        record.qubits = transcript.n
        record.key_length_bits = transcript.sifted_length
        record.match_ratio = transcript.match_ratio
        record.qber = transcript.qber
        if transcript.sifted_length:
            record.key_entropy_bits_per_bit = shannon_entropy(transcript.key_a)
        if config.abort_qber is not None and transcript.qber > config.abort_qber:
            raise EavesdropperDetected(
                f"QBER {transcript.qber:.4f} exceeds threshold {config.abort_qber:.4f}; key discarded"
            )
        if transcript.qber > 0:
            log.warning("QBER %.4f: Bob's key differs from Alice's and will fail the gate", transcript.qber)

        with stages("hmac"):
            params = KdfParams(salt=randbytes(SALT_SIZE), iterations=config.iterations)
            key = derive_key(transcript.key_a, params)

        with stages("aes"):
            iv = randbytes(cipher.IV_SIZE)
            body = cipher.encrypt(plaintext, key, iv)

        with stages("signature"):
            sig_block = signing.UNSIGNED
            if config.signing_key is not None:
                sk = config.signing_key
                sig = signing.sign(body, sk.secret_key, sk.scheme)
                sig_block = signing.SignatureBlock(sk.scheme, sk.public_key, sig)
                record.signature_status = "valid" if signing.verify(sig, body, sk.public_key, sk.scheme) else "invalid"
            else:
                record.signature_status = "unsigned"

        with stages("export"):
            header = container.ContainerHeader(
                kdf=params,
                iv=iv,
                plaintext_length=len(plaintext),
                plaintext_sha256=plaintext_digest,
                ciphertext_sha256=hashlib.sha256(body).digest(),
                signature=sig_block,
                filename_hint=input_path.name[:255] if config.store_filename else "",
            )
            meta = container.metadata_bytes(header)
            tag = compute_tag(key, meta)
            header = replace(header, hmac=tag.hmac)
            result_container = container.ContainerFile(header, body)
            armored = container.serialize(result_container)
            # Key B is what the recipient holds; check it opens the gate.
            check = verify_gate(transcript.key_b, params, meta, tag)
            record.hmac_valid = check.passed
            record.gate_diagnosis = check.diagnosis
            key_text = dump_key_file(
                KeyFile(transcript.key_b, header.ciphertext_sha256, params.salt, params.iterations)
            )
            write_atomically([(output_path, armored, 0o644), (key_path, key_text.encode("ascii"), 0o600)])
        record.output_size_bytes = len(armored)
        if plaintext:
            record.size_ratio = size_ratio(len(armored), len(plaintext))
    except BB84Error as exc:
        _fail(record, exc)
        exc.record = record  # type: ignore[attr-defined]
        _finish(record, stages, config.metrics_log)
        raise
    record.t_qkd = stages.timer.stages.get("qkd")
    record.t_aes = stages.timer.stages.get("aes")
    record.t_sig = stages.timer.stages.get("signature")
    _finish(record, stages, config.metrics_log)
    return EncryptResult(result_container, output_path, key_path, record, transcript)


# -- decryption -------------------------------------------------------------

def _resolve_key(key: KeyFile | BitString | str | Path) -> BitString:
    if isinstance(key, BitString):
        return key
    if isinstance(key, KeyFile):
        return key.bits
    return read_key_file(key).bits


def _open_checked(
    container_path: Path,
    key: KeyFile | BitString | str | Path,
    stages: _Stages,
    record: MetricsRecord,
    trusted_public_key: bytes | None,
    require_signature: bool,
):
    with stages("parse"):
        try:
            raw = _read_input(container_path)
            record.input_size_bytes = len(raw)
            parsed = container.parse(raw)
        except ContainerError as exc:
            exc.notes.append("key untested: container rejected before the key was examined")
            raise
    header = parsed.header
    record.plaintext_sha256 = header.plaintext_sha256
    record.signature_scheme = header.signature.name

    with stages("signature"):
        block = header.signature
        if not block.signed:
            record.signature_status = "unsigned"
            if require_signature or trusted_public_key is not None:
                raise BadSignature("container is unsigned but a signature was required")
        else:
            try:
                block.check_sizes()
            except SignatureSchemeError as exc:
                record.signature_status = "invalid"
                raise BadSignature(str(exc)) from None
            if trusted_public_key is not None and trusted_public_key != block.public_key:
                record.signature_status = "invalid"
                raise BadSignature("container was signed by an untrusted public key")
            if not signing.verify(block.signature, parsed.body, block.public_key, block.name):
                record.signature_status = "invalid"
                raise BadSignature(f"{block.name} signature does not verify over the ciphertext")
            record.signature_status = "valid"

    with stages("hmac"):
        bits = _resolve_key(key)
        record.key_length_bits = len(bits)
        if len(bits):
            record.key_entropy_bits_per_bit = shannon_entropy(bits)
        decision = verify_gate(bits, header.kdf, container.metadata_bytes(header), header.hmac)
        record.hmac_valid = decision.passed
        record.gate_diagnosis = decision.diagnosis
        if not decision.passed:
            raise GateFail(f"integrity gate failed: {decision.message}", diagnosis=decision.diagnosis)
    return parsed, decision


def decrypt_pipeline(
    container_path: str | Path,
    key: KeyFile | BitString | str | Path,
    output_path: str | Path | None,
    *,
    trusted_public_key: bytes | None = None,
    require_signature: bool = False,
    metrics_log: str | Path | None = None,
) -> DecryptResult:
    """Open a container.  ``output_path=None`` keeps the plaintext in memory only."""
    container_path = Path(container_path)
    output_path = Path(output_path) if output_path is not None else None
    metrics_log = Path(metrics_log) if metrics_log is not None else None
    stages = _Stages()
    record = MetricsRecord(
        operation="decrypt",
        input_path=str(container_path),
        output_path=str(output_path) if output_path else None,
    )
    aes_calls = 0
    try:
        parsed, decision = _open_checked(
            container_path, key, stages, record, trusted_public_key, require_signature
        )
        header = parsed.header
        with stages("aes"):
            aes_calls += 1
            plaintext = cipher.decrypt(parsed.body, decision.key, header.iv)
        with stages("hash"):
            digest = hashlib.sha256(plaintext).digest()
            record.decrypted_sha256 = digest
            if digest != header.plaintext_sha256 or len(plaintext) != header.plaintext_length:
                raise HashMismatch("decrypted SHA-256 does not match the header")
        with stages("export"):
            if output_path is not None:
                write_atomically([(output_path, plaintext, 0o644)])
        record.output_size_bytes = len(plaintext)
    except BB84Error as exc:
        _fail(record, exc)
        exc.record = record  # type: ignore[attr-defined]
        exc.aes_decrypt_calls = aes_calls  # type: ignore[attr-defined]
        exc.stages_run = list(stages.run)  # type: ignore[attr-defined]
        _finish(record, stages, metrics_log)
        raise
    record.t_aes = stages.timer.stages.get("aes")
    record.t_sig = stages.timer.stages.get("signature")
    _finish(record, stages, metrics_log)
    return DecryptResult(record, output_path, plaintext, list(stages.run), aes_calls)


def verify_pipeline(
    container_path: str | Path,
    key: KeyFile | BitString | str | Path,
    *,
    trusted_public_key: bytes | None = None,
    require_signature: bool = False,
    metrics_log: str | Path | None = None,
) -> MetricsRecord:
    """Parse, check the signature and run the gate without decrypting."""
    container_path = Path(container_path)
    metrics_log = Path(metrics_log) if metrics_log is not None else None
    stages = _Stages()
    record = MetricsRecord(operation="verify", input_path=str(container_path))
    try:
        _open_checked(container_path, key, stages, record, trusted_public_key, require_signature)
    except BB84Error as exc:
        _fail(record, exc)
        exc.record = record  # type: ignore[attr-defined]
        _finish(record, stages, metrics_log)
        raise
    record.t_sig = stages.timer.stages.get("signature")
    _finish(record, stages, metrics_log)
    return record
