from __future__ import annotations

import random
import sys
import zlib

import numpy as np
import pytest

from bb84hybrid import signing
from bb84hybrid.pipeline import PipelineConfig, encrypt_pipeline

FAST_ITERATIONS = 1000


@pytest.fixture
def rng() -> random.Random:
    return random.Random(1234)


@pytest.fixture(scope="session")
def dilithium_key() -> signing.SigningKey:
    pk, sk = signing.keygen("dilithium2", random.Random(77))
    return signing.SigningKey("dilithium2", pk, sk)


def synthetic_file(category: str, size: int, rng: random.Random) -> bytes:
    """Deterministic stand-ins for the five media categories."""
    if size == 0:
        return b""
    nprng = np.random.default_rng(rng.getrandbits(32))
    if category == "text":
        words = ["quantum", "key", "basis", "photon", "alice", "bob", "sift", "cipher", "the", "and"]
        out = []
        total = 0
        while total < size:
            w = rng.choice(words) + rng.choice([" ", " ", ", ", ".\n"])
            out.append(w)
            total += len(w)
        return "".join(out).encode("ascii")[:size]
    if category == "audio":
        t = np.arange((size + 1) // 2)
        wave = 8000 * np.sin(2 * np.pi * 440 * t / 44100) + nprng.normal(0, 300, t.size)
        return wave.astype("<i2").tobytes()[:size]
    if category == "image":
        side = max(1, int(np.sqrt(size / 3)) + 1)
        y, x = np.mgrid[0:side, 0:side]
        rgb = np.stack([(x * 255 // side), (y * 255 // side), ((x + y) % 256)], axis=-1).astype(np.uint8)
        return (b"\x89PNG\r\n\x1a\n" + rgb.tobytes())[:size]
    if category == "video":
        frame = nprng.integers(0, 256, 4096, dtype=np.uint8)
        frames = []
        total = 0
        while total < size:
            frame = frame.copy()
            frame[nprng.integers(0, frame.size, 64)] = nprng.integers(0, 256, 64, dtype=np.uint8)
            frames.append(frame.tobytes())
            total += frame.size
        return b"".join(frames)[:size]
    if category == "compressed":
        raw = nprng.integers(0, 256, size, dtype=np.uint8).tobytes()
        return (b"PK\x03\x04" + zlib.compress(raw, 1))[:size]
    raise ValueError(category)


CATEGORIES = ("text", "audio", "image", "video", "compressed")


@pytest.fixture
def make_container(tmp_path):
    """Encrypt ``data`` into tmp_path; returns the EncryptResult."""
    counter = iter(range(10**6))

    def _make(data: bytes = b"attack at dawn\n" * 20, *, signing_key=None, seed: int = 5, **kw):
        i = next(counter)
        src = tmp_path / f"plain{i}.bin"
        src.write_bytes(data)
        config = PipelineConfig(
            iterations=kw.pop("iterations", FAST_ITERATIONS),
            signing_key=signing_key,
            seed=seed,
            insecure_test_seed=True,
            **kw,
        )
        return encrypt_pipeline(config, src, tmp_path / f"c{i}.bb84", tmp_path / f"c{i}.key")

    return _make


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("tests.test_acceptance")
    if module is not None and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in module.RESULTS:
            terminalreporter.write_line(line)
