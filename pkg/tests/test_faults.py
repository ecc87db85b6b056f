from __future__ import annotations

import json
import random

import pytest

from bb84hybrid import errors
from bb84hybrid.faults import FAULT_KINDS, FaultScenario, inject_fault, random_scenario
from bb84hybrid.pipeline import decrypt_pipeline


@pytest.fixture
def pair(make_container, dilithium_key):
    res = make_container(b"secret report\n" * 40, signing_key=dilithium_key)
    return res.container_path.read_bytes(), res.key_path.read_text()


def _run(tmp_path, tampered):
    c = tmp_path / "t.bb84"
    k = tmp_path / "t.key"
    c.write_bytes(tampered.container_bytes)
    k.write_text(tampered.key_text)
    return decrypt_pipeline(c, k, None)


@pytest.mark.parametrize("kind", FAULT_KINDS)
def test_each_kind_raises_expected(kind, pair, tmp_path):
    rng = random.Random(kind)
    for _ in range(3):
        t = inject_fault(*pair, random_scenario(kind, rng))
        with pytest.raises(errors.BB84Error) as info:
            _run(tmp_path, t)
        assert info.value.kind == t.manifest["expected_error"]
        if t.manifest["expected_diagnosis"]:
            assert info.value.diagnosis == t.manifest["expected_diagnosis"]


@pytest.mark.parametrize(
    "mode,diag", [("remove", "missing_tag"), ("zero", "missing_tag"), ("truncate", "malformed_tag"), ("flip", "mismatch")]
)
def test_strip_hmac_modes(mode, diag, pair, tmp_path):
    t = inject_fault(*pair, FaultScenario("strip_hmac", {"mode": mode, "position": 0.3}))
    with pytest.raises(errors.GateFail) as info:
        _run(tmp_path, t)
    assert info.value.diagnosis == diag


@pytest.mark.parametrize("mode", ["flip_bit", "truncate", "random_subset", "fresh_random"])
def test_wrong_key_modes(mode, pair, tmp_path):
    t = inject_fault(*pair, FaultScenario("wrong_key", {"mode": mode, "position": 0.7, "seed": 1}))
    assert t.manifest["key_modified"]
    assert t.container_bytes == pair[0]
    with pytest.raises(errors.GateFail):
        _run(tmp_path, t)


def test_fix_digest_reaches_gate(make_container, tmp_path):
    res = make_container()
    t = inject_fault(res.container_path.read_bytes(), res.key_path.read_text(),
                     FaultScenario("corrupt_body", {"position": 0.5, "fix_digest": True}))
    with pytest.raises(errors.GateFail) as info:
        _run(tmp_path, t)
    assert info.value.diagnosis == "mismatch"


def test_fix_digest_on_signed_hits_signature(pair, tmp_path):
    t = inject_fault(*pair, FaultScenario("corrupt_body", {"position": 0.5, "fix_digest": True}))
    with pytest.raises(errors.BadSignature):
        _run(tmp_path, t)


def test_forge_on_unsigned(make_container, tmp_path):
    res = make_container()
    t = inject_fault(res.container_path.read_bytes(), res.key_path.read_text(),
                     random_scenario("bad_signature", random.Random(0), signed=False))
    with pytest.raises(errors.BadSignature):
        _run(tmp_path, t)


def test_manifest_has_no_key_bits(pair):
    t = inject_fault(*pair, FaultScenario("wrong_key", {"mode": "flip_bit", "position": 0.1}))
    blob = json.dumps(t.manifest)
    body_lines = [ln for ln in pair[1].splitlines() if ln and ":" not in ln and "-----" not in ln]
    assert body_lines and not any(ln in blob for ln in body_lines)


def test_unknown_kind():
    with pytest.raises(ValueError):
        FaultScenario("melt", {})
