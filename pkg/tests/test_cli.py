from __future__ import annotations

import json

import pytest

from bb84hybrid.cli import main
from bb84hybrid.errors import EXIT_CODES


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "f.txt").write_bytes(b"hello quantum world\n" * 50)
    return tmp_path


def _encrypt(*extra):
    return main(["encrypt", "--in", "f.txt", "--out", "f.bb84", "--keyout", "f.key", "--iterations", "1000", *extra])


def test_encrypt_writes_three_artifacts(work, capsys):
    assert _encrypt() == 0
    assert {p.name for p in work.iterdir()} >= {"f.bb84", "f.key", "f.metrics.jsonl"}
    out = capsys.readouterr().out
    assert "Key entropy" in out and "A/B bit match rate" in out


def test_decrypt_round_trip(work, capsys):
    _encrypt()
    assert main(["decrypt", "--in", "f.bb84", "--key", "f.key", "--out", "g.txt"]) == 0
    assert (work / "g.txt").read_bytes() == (work / "f.txt").read_bytes()
    assert "INTEGRITY CONFIRMED" in capsys.readouterr().out


def test_tampered_container_exit_code(work, capsys):
    _encrypt()
    data = bytearray((work / "f.bb84").read_bytes())
    data[50] = ord("!")
    (work / "f.bb84").write_bytes(bytes(data))
    code = main(["decrypt", "--in", "f.bb84", "--key", "f.key", "--out", "g.txt"])
    assert code == EXIT_CODES["InvalidArmor"]
    err = capsys.readouterr().err
    assert "InvalidArmor" in err and "key untested" in err
    assert not (work / "g.txt").exists()


def test_wrong_key_hex(work, capsys):
    _encrypt()
    capsys.readouterr()
    code = main(["decrypt", "--in", "f.bb84", "--key-hex", "ab" * 32, "--out", "g.txt", "--json"])
    payload = json.loads(capsys.readouterr().out)
    assert code == EXIT_CODES["GateFail"] == payload["exit_code"]
    assert payload["error"] == "GateFail"


def test_exit_codes_distinct():
    assert len(set(EXIT_CODES.values())) == len(EXIT_CODES)
    assert 0 not in EXIT_CODES.values() and 2 not in EXIT_CODES.values()


def test_seed_needs_flag(work):
    with pytest.raises(SystemExit) as info:
        main(["exchange", "--qubits", "100", "--seed", "1"])
    assert info.value.code == 2


def test_exchange_json(capsys):
    assert main(["exchange", "--qubits", "2000", "--eve-fraction", "1", "--seed", "4", "--insecure-test-seed", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert 0.15 < payload["qber"] < 0.35
    assert "key_a" not in payload


def test_keygen_sign_verify(work, capsys):
    assert main(["keygen", "--out", "sk.key"]) == 0
    assert (work / "sk.key").stat().st_mode & 0o777 == 0o600
    assert _encrypt("--sign-key", "sk.key") == 0
    assert main(["verify", "--in", "f.bb84", "--key", "f.key", "--trusted-pubkey", "sk.pub", "--json"]) == 0
    assert "dilithium2" in capsys.readouterr().out


def test_inject_run(work, capsys):
    _encrypt()
    capsys.readouterr()
    assert main(["inject", "--in", "f.bb84", "--key", "f.key", "--kind", "strip_hmac", "--param", "mode=\"zero\"", "--run", "--json"]) == 0
    manifest = json.loads(capsys.readouterr().out)
    assert manifest["observed_error"] == "GateFail" and manifest["rejected_as_expected"]
    assert (work / "f.strip_hmac.manifest.json").exists()


def test_report_text_and_html(work, capsys):
    _encrypt()
    capsys.readouterr()
    assert main(["report", "--log", "f.metrics.jsonl", "--format", "text"]) == 0
    assert "Encryption Metrics Report" in capsys.readouterr().out
    assert main(["report", "--log", "f.metrics.jsonl", "--format", "html", "--out", "r.html"]) == 0
    assert (work / "r.html").read_text().startswith("<!DOCTYPE html>")


def test_report_missing_log(work):
    assert main(["report", "--log", "nope.jsonl"]) == EXIT_CODES["PipelineIOError"]
