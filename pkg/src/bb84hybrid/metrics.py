"""Run metrics: key entropy, size ratio, basis match ratio, stage timings.

Records are appended to a JSON-lines log (one object per run) and can be
rendered as text or HTML reports.
"""

from __future__ import annotations

import dataclasses
import html
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Iterator, Literal, Sequence

import numpy as np

from .errors import PipelineIOError
from .qkd import BasisString, BitString

SCHEMA = "bb84hybrid.metrics/1"

SignatureStatus = Literal["valid", "invalid", "unsigned", "untested"]


def shannon_entropy(key: BitString) -> float:
    """Empirical binary entropy of a bit string, in bits per bit."""
    n = len(key)
    if n == 0:
        raise ValueError("entropy of an empty key is undefined")
    ones = key.count_ones()
    h = 0.0
    for count in (ones, n - ones):
        if count:
            p = count / n
            h -= p * math.log2(p)
    return min(h, 1.0)


def size_ratio(container_size: int, plaintext_size: int) -> float:
    if plaintext_size <= 0:
        raise ValueError("size ratio is undefined for an empty plaintext")
    return container_size / plaintext_size


def match_ratio(alice_bases: BasisString, bob_bases: BasisString) -> float:
    n = len(alice_bases)
    if n == 0 or len(bob_bases) != n:
        raise ValueError("basis strings must be non-empty and of equal length")
    return int(np.count_nonzero(alice_bases.array == bob_bases.array)) / n


class StageTimer:
    """Monotonic per-stage timings, kept in execution order."""

    def __init__(self) -> None:
        self.stages: dict[str, float] = {}
        self._start = time.perf_counter()

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.stages[name] = time.perf_counter() - t0

    def elapsed(self) -> float:
        return time.perf_counter() - self._start


def utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds").replace("+00:00", "Z")


@dataclass
class MetricsRecord:
    operation: Literal["encrypt", "decrypt", "verify"]
    timestamp: str = field(default_factory=utc_now)
    key_entropy_bits_per_bit: float | None = None
    size_ratio: float | None = None
    match_ratio: float | None = None
    qber: float | None = None
    qubits: int | None = None
    key_length_bits: int | None = None
    t_qkd: float | None = None
    t_aes: float | None = None
    t_sig: float | None = None
    t_total: float | None = None
    stage_timings: dict[str, float] = field(default_factory=dict)
    input_path: str | None = None
    output_path: str | None = None
    input_size_bytes: int | None = None
    output_size_bytes: int | None = None
    hmac_valid: bool | None = None
    gate_diagnosis: str | None = None
    signature_scheme: str | None = None
    signature_status: SignatureStatus | None = None
    plaintext_sha256: bytes | None = None
    decrypted_sha256: bytes | None = None
    error: str | None = None
    error_message: str | None = None

    def __post_init__(self) -> None:
        for name in ("key_entropy_bits_per_bit", "match_ratio", "qber"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.size_ratio is not None and self.size_ratio <= 0:
            raise ValueError("size_ratio must be positive")
        for name in ("t_qkd", "t_aes", "t_sig", "t_total"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def hashes_match(self) -> bool | None:
        if self.plaintext_sha256 is None or self.decrypted_sha256 is None:
            return None
        return self.plaintext_sha256 == self.decrypted_sha256

    @property
    def succeeded(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.hex() if isinstance(v, bytes) else v
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MetricsRecord:
        names = {f.name for f in dataclasses.fields(cls)}
        kwargs = {k: v for k, v in data.items() if k in names}
        for k in ("plaintext_sha256", "decrypted_sha256"):
            if kwargs.get(k) is not None:
                kwargs[k] = bytes.fromhex(kwargs[k])
        return cls(**kwargs)


def record_fields() -> list[str]:
    return [f.name for f in dataclasses.fields(MetricsRecord)]


def emit_json_log(record: MetricsRecord, path: str | Path) -> dict[str, Any]:
    """Append ``record`` as one JSON line; returns the object written.

    Not safe for concurrent writers on the same file.
    """
    entry = {"schema": SCHEMA, **record.to_dict()}
    path = Path(path)
    try:
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(entry, sort_keys=False) + "\n")
    except OSError as exc:
        raise PipelineIOError(f"cannot append metrics to {path}: {exc}") from exc
    return entry


def read_json_log(path: str | Path) -> list[MetricsRecord]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise PipelineIOError(f"cannot read metrics log {path}: {exc}") from exc
    records = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PipelineIOError(f"{path}:{lineno}: not valid JSON ({exc})") from exc
        if entry.get("schema") != SCHEMA:
            raise PipelineIOError(f"{path}:{lineno}: unknown schema {entry.get('schema')!r}")
        records.append(MetricsRecord.from_dict(entry))
    return records


# -- reports ----------------------------------------------------------------

def _ms(seconds: float | None) -> str:
    return "n/a" if seconds is None else f"{seconds * 1000:.3f} ms"


def _pct(x: float | None) -> str:
    return "n/a" if x is None else f"{x * 100:.2f} %"


def _num(x: float | None, fmt: str = ".4f") -> str:
    return "n/a" if x is None else format(x, fmt)


def _bytes(n: int | None) -> str:
    return "n/a" if n is None else f"{n:,} bytes"


def _signature_line(r: MetricsRecord) -> str:
    if r.signature_status is None or r.signature_status == "untested":
        return "not tested"
    if r.signature_status == "unsigned":
        return "unsigned"
    return f"{r.signature_scheme} ({r.signature_status})"


def _report_rows(r: MetricsRecord) -> tuple[str, list[tuple[str, str]]]:
    stages = ", ".join(f"{k} {_ms(v)}" for k, v in r.stage_timings.items()) or "n/a"
    if r.operation == "encrypt":
        title = "Encryption Metrics Report"
        rows = [
            ("Input", f"{r.input_path or '-'} ({_bytes(r.input_size_bytes)})"),
            ("Output size", _bytes(r.output_size_bytes)),
            ("Size ratio R", _num(r.size_ratio)),
            ("Key entropy H(K_A)", f"{_num(r.key_entropy_bits_per_bit)} bits/bit"),
            ("A/B bit match rate", _pct(r.match_ratio)),
            ("QBER", _pct(r.qber)),
            ("Qubits sent", "n/a" if r.qubits is None else str(r.qubits)),
            ("Key length", "n/a" if r.key_length_bits is None else f"{r.key_length_bits} bits"),
            ("Encryption duration", _ms(r.t_total)),
            ("Stage timings", stages),
            ("Post-quantum signature", _signature_line(r)),
            ("Key B gate check", "n/a" if r.hmac_valid is None else ("PASS" if r.hmac_valid else "FAIL")),
        ]
    else:
        title = "Decryption Metrics Report" if r.operation == "decrypt" else "Verification Report"
        if r.hmac_valid is None:
            hmac_line = "not tested"
        elif r.hmac_valid:
            hmac_line = "VALID"
        else:
            hmac_line = f"REJECTED ({r.gate_diagnosis or 'mismatch'})"
        rows = [
            ("Input", f"{r.input_path or '-'} ({_bytes(r.input_size_bytes)})"),
            ("HMAC integrity", hmac_line),
            ("Post-quantum signature", _signature_line(r)),
        ]
        if r.hmac_valid:
            rows += [
                ("Expected SHA-256", r.plaintext_sha256.hex() if r.plaintext_sha256 else "n/a"),
                ("Decrypted SHA-256", r.decrypted_sha256.hex() if r.decrypted_sha256 else "n/a"),
            ]
        rows += [
            ("Duration", _ms(r.t_total)),
            ("Stage timings", stages),
        ]
    if r.error:
        rows.append(("Error", f"{r.error}: {r.error_message or ''}".rstrip(": ")))
    rows.append(("Verdict", verdict(r)))
    return title, rows


def verdict(r: MetricsRecord) -> str:
    if r.operation == "encrypt":
        return "ENCRYPTED" if r.succeeded else "ENCRYPTION FAILED"
    if r.error and not r.hmac_valid:
        return "DECRYPTION REFUSED (no hash comparison performed)"
    if r.hashes_match:
        return "INTEGRITY CONFIRMED (SHA-256 hashes match)"
    if r.hashes_match is False:
        return "INTEGRITY FAILURE (SHA-256 hashes differ)"
    if r.operation == "verify" and r.succeeded:
        return "CONTAINER VERIFIED (not decrypted)"
    return "FAILED" if r.error else "INCOMPLETE"


def render_report(records: Sequence[MetricsRecord], format: Literal["text", "html"] = "text") -> str:
    if not records:
        raise ValueError("nothing to report: no metrics records")
    if format == "text":
        return _render_text(records)
    if format == "html":
        return _render_html(records)
    raise ValueError(f"unknown report format {format!r}")


def _render_text(records: Iterable[MetricsRecord]) -> str:
    blocks = []
    for r in records:
        title, rows = _report_rows(r)
        width = max(len(k) for k, _ in rows)
        lines = [f"== {title} ==", f"Timestamp: {r.timestamp}"]
        lines += [f"{k.ljust(width)} : {v}" for k, v in rows]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def _render_html(records: Iterable[MetricsRecord]) -> str:
    parts = [
        "<!DOCTYPE html>",
        '<html><head><meta charset="utf-8"><title>BB84 hybrid encryption metrics</title>',
        "<style>body{font-family:sans-serif}table{border-collapse:collapse;margin-bottom:1.5em}"
        "td{border:1px solid #999;padding:2px 8px}td:first-child{font-weight:bold}</style>",
        "</head><body>",
    ]
    for r in records:
        title, rows = _report_rows(r)
        parts.append(f"<h2>{html.escape(title)}</h2><p>{html.escape(r.timestamp)}</p><table>")
        parts += [f"<tr><td>{html.escape(k)}</td><td>{html.escape(v)}</td></tr>" for k, v in rows]
        parts.append("</table>")
    parts.append("</body></html>")
    return "\n".join(parts) + "\n"
