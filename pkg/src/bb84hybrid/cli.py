"""Command-line interface.

Subcommands: ``exchange``, ``encrypt``, ``decrypt``, ``verify``, ``inject``,
``report`` and ``keygen``.  Every subcommand accepts ``--json``.  Failures
exit with the code of their error class (see ``bb84hybrid.errors``).
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Any, Sequence

from . import faults, signing
from .errors import BB84Error, PipelineIOError
from .metrics import MetricsRecord, read_json_log, render_report, shannon_entropy
from .pipeline import (
    PipelineConfig,
    decrypt_pipeline,
    encrypt_pipeline,
    key_from_hex,
    verify_pipeline,
    write_atomically,
)
from .qkd import NO_EAVESDROPPER, EavesdropperConfig, default_rng, run_exchange, run_exchange_until

log = logging.getLogger("bb84hybrid")


def _emit(args: argparse.Namespace, payload: dict[str, Any], text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, default=str))
    else:
        print(text, end="" if text.endswith("\n") else "\n")


def _eve(args: argparse.Namespace) -> EavesdropperConfig:
    if args.eve_fraction:
        return EavesdropperConfig.intercept_resend(args.eve_fraction)
    return NO_EAVESDROPPER


def _check_seed(parser: argparse.ArgumentParser, args: argparse.Namespace) -> None:
    if args.seed is not None and not args.insecure_test_seed:
        parser.error("--seed requires --insecure-test-seed (fixed seeds make keys predictable)")


def _presented_key(parser: argparse.ArgumentParser, args: argparse.Namespace):
    if (args.key is None) == (args.key_hex is None):
        parser.error("give exactly one of --key and --key-hex")
    return key_from_hex(args.key_hex) if args.key_hex is not None else Path(args.key)


def _trusted_pk(args: argparse.Namespace) -> bytes | None:
    if args.trusted_pubkey is None:
        return None
    try:
        return signing.read_public_key(args.trusted_pubkey)[1]
    except OSError as exc:
        raise PipelineIOError(f"cannot read {args.trusted_pubkey}: {exc}") from exc


# -- subcommands ------------------------------------------------------------

def cmd_exchange(parser, args) -> int:
    _check_seed(parser, args)
    rng = random.Random(args.seed) if args.seed is not None else default_rng()
    if args.qubits is not None:
        t = run_exchange(args.qubits, _eve(args), rng)
    else:
        t = run_exchange_until(args.target_bits or 256, _eve(args), rng)
    payload = t.to_dict(include_key_material=args.show_keys)
    if t.sifted_length:
        payload["key_entropy_bits_per_bit"] = shannon_entropy(t.key_a)
    text = "\n".join(
        [
            f"qubits sent      : {t.n} ({t.rounds} round{'s' if t.rounds != 1 else ''})",
            f"sifted key bits  : {t.sifted_length}",
            f"basis match ratio: {t.match_ratio:.4f}",
            f"QBER             : {t.qber:.4f}",
            f"key entropy      : {payload.get('key_entropy_bits_per_bit', 0.0):.4f} bits/bit",
            f"eavesdropper     : {t.eavesdropper.mode} ({t.eavesdropper.intercept_fraction:g})",
        ]
    )
    if args.show_keys:
        text += f"\nkey A            : {t.key_a}\nkey B            : {t.key_b}"
    _emit(args, payload, text)
    return 0


def _encrypt_metrics_path(args: argparse.Namespace) -> Path | None:
    if args.no_metrics:
        return None
    return args.metrics or Path(args.output).with_suffix(".metrics.jsonl")


def cmd_encrypt(parser, args) -> int:
    _check_seed(parser, args)
    if args.qubits is not None and args.target_bits is not None:
        parser.error("give at most one of --qubits and --target-bits")
    signing_key = None
    if args.sign_key is not None:
        try:
            signing_key = signing.read_signing_key(args.sign_key)
        except OSError as exc:
            raise PipelineIOError(f"cannot read {args.sign_key}: {exc}") from exc
    config = PipelineConfig(
        target_key_bits=args.target_bits,
        qubit_count=args.qubits,
        iterations=args.iterations,
        signing_key=signing_key,
        eavesdropper=_eve(args),
        metrics_log=_encrypt_metrics_path(args),
        abort_qber=args.abort_qber,
        store_filename=not args.no_filename,
        seed=args.seed,
        insecure_test_seed=args.insecure_test_seed,
    )
    result = encrypt_pipeline(config, args.input, args.output, args.keyout)
    payload = {
        "container": str(result.container_path),
        "key_file": str(result.key_path),
        "metrics_log": str(config.metrics_log) if config.metrics_log else None,
        "metrics": result.record.to_dict(),
    }
    _emit(args, payload, render_report([result.record]))
    return 0


def cmd_decrypt(parser, args) -> int:
    key = _presented_key(parser, args)
    result = decrypt_pipeline(
        args.input,
        key,
        args.output,
        trusted_public_key=_trusted_pk(args),
        require_signature=args.require_signature,
        metrics_log=args.metrics,
    )
    payload = {"output": str(result.output_path), "metrics": result.record.to_dict()}
    _emit(args, payload, render_report([result.record]))
    return 0


def cmd_verify(parser, args) -> int:
    key = _presented_key(parser, args)
    record = verify_pipeline(
        args.input,
        key,
        trusted_public_key=_trusted_pk(args),
        require_signature=args.require_signature,
        metrics_log=args.metrics,
    )
    _emit(args, {"metrics": record.to_dict()}, render_report([record]))
    return 0


def _parse_param(text: str) -> tuple[str, Any]:
    name, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    try:
        return name, json.loads(value)
    except json.JSONDecodeError:
        return name, value


def cmd_inject(parser, args) -> int:
    try:
        data = Path(args.input).read_bytes()
        key_text = Path(args.key).read_text(encoding="ascii")
    except OSError as exc:
        raise PipelineIOError(str(exc)) from exc
    rng = random.Random(args.seed)
    scenario = faults.random_scenario(args.kind, rng)
    if args.param:
        scenario = faults.FaultScenario(args.kind, {**scenario.params, **dict(args.param)})
    tampered = faults.inject_fault(data, key_text, scenario)

    out_dir = Path(args.out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise PipelineIOError(f"cannot create {out_dir}: {exc}") from exc
    stem = Path(args.input).stem
    c_path, k_path = out_dir / f"{stem}.{args.kind}.bb84", out_dir / f"{stem}.{args.kind}.key"
    m_path = out_dir / f"{stem}.{args.kind}.manifest.json"
    manifest = dict(tampered.manifest, container=str(c_path), key=str(k_path))

    write_atomically(
        [
            (c_path, tampered.container_bytes, 0o644),
            (k_path, tampered.key_text.encode("ascii"), 0o600),
        ]
    )
    if args.run:
        try:
            decrypt_pipeline(c_path, k_path, None)
            manifest["observed_error"] = None
        except BB84Error as exc:
            manifest["observed_error"] = exc.kind
            manifest["observed_message"] = str(exc)
            manifest["observed_notes"] = exc.notes
            manifest["aes_decrypt_calls"] = getattr(exc, "aes_decrypt_calls", None)
        manifest["rejected_as_expected"] = manifest["observed_error"] == manifest["expected_error"]
    write_atomically([(m_path, (json.dumps(manifest, indent=2) + "\n").encode("utf-8"), 0o644)])

    lines = [f"fault         : {args.kind}", *(f"change        : {c}" for c in manifest["changes"])]
    lines += [f"expected error: {manifest['expected_error']}", f"written       : {c_path}, {k_path}, {m_path}"]
    if args.run:
        lines.append(f"observed error: {manifest['observed_error']}")
        lines += [f"note          : {n}" for n in manifest.get("observed_notes", [])]
    _emit(args, manifest, "\n".join(lines))
    if args.run and not manifest["rejected_as_expected"]:
        return 1
    return 0


def cmd_report(parser, args) -> int:
    records: list[MetricsRecord] = read_json_log(args.log)
    if args.last:
        records = records[-args.last :]
    doc = render_report(records, args.format)
    if args.out:
        write_atomically([(Path(args.out), doc.encode("utf-8"), 0o644)])
    if args.json:
        print(json.dumps({"records": [r.to_dict() for r in records], "out": args.out}, indent=2))
    elif not args.out:
        print(doc, end="")
    else:
        print(f"wrote {args.format} report for {len(records)} run(s) to {args.out}")
    return 0


def cmd_keygen(parser, args) -> int:
    pk, sk = signing.keygen(args.scheme)
    key = signing.SigningKey(args.scheme, pk, sk)
    pub_out = args.pub_out or str(Path(args.out).with_suffix(".pub"))
    write_atomically(
        [
            (Path(args.out), signing.dump_signing_key(key).encode("ascii"), 0o600),
            (Path(pub_out), signing.dump_public_key(args.scheme, pk).encode("ascii"), 0o644),
        ]
    )
    _emit(
        args,
        {"scheme": args.scheme, "signing_key": args.out, "public_key": pub_out},
        f"wrote {args.scheme} signing key to {args.out} and public key to {pub_out}",
    )
    return 0


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("-v", "--verbose", action="store_true")

    seeded = argparse.ArgumentParser(add_help=False)
    seeded.add_argument("--seed", type=int, help="fixed rng seed (testing only)")
    seeded.add_argument(
        "--insecure-test-seed", action="store_true", help="acknowledge that --seed makes keys predictable"
    )

    qubits = argparse.ArgumentParser(add_help=False)
    group = qubits.add_mutually_exclusive_group()
    group.add_argument("--qubits", type=int, help="send exactly this many qubits")
    group.add_argument("--target-bits", type=int, help="send qubits until the sifted key has this many bits")
    qubits.add_argument(
        "--eve-fraction", type=float, default=0.0, help="intercept-resend eavesdropper on this fraction of qubits"
    )

    gated = argparse.ArgumentParser(add_help=False)
    gated.add_argument("--in", dest="input", required=True, help="container file")
    gated.add_argument("--key", help="key file written by encrypt")
    gated.add_argument("--key-hex", help="Key B as hex, entered manually")
    gated.add_argument("--trusted-pubkey", help="only accept signatures from this public key file")
    gated.add_argument("--require-signature", action="store_true")
    gated.add_argument("--metrics", type=Path, help="append a JSON metrics record to this log")

    parser = argparse.ArgumentParser(
        prog="bb84hybrid",
        description="Simulated BB84 key exchange + AES-256-CBC file encryption with an HMAC gate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exchange", parents=[common, seeded, qubits], help="run a BB84 exchange only")
    p.add_argument("--show-keys", action="store_true", help="print the sifted keys (secret!)")
    p.set_defaults(func=cmd_exchange)

    p = sub.add_parser("encrypt", parents=[common, seeded, qubits], help="encrypt a file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--keyout", required=True, help="where to write Key B")
    p.add_argument("--iterations", type=int, default=100_000, help="PBKDF2 iteration count")
    p.add_argument("--sign-key", help="sign the ciphertext with this signing key file")
    p.add_argument("--abort-qber", type=float, help="abort if the sifted-key QBER exceeds this")
    p.add_argument("--metrics", type=Path, help="metrics log (default: <out> with suffix .metrics.jsonl)")
    p.add_argument("--no-metrics", action="store_true", help="do not write a metrics log")
    p.add_argument("--no-filename", action="store_true", help="do not store the input file name")
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", parents=[common, gated], help="decrypt a container")
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("verify", parents=[common, gated], help="check signature and key without decrypting")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inject", parents=[common], help="write a tampered copy of a container/key pair")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--kind", required=True, choices=faults.FAULT_KINDS)
    p.add_argument("--seed", type=int, default=0, help="seed for the tampering parameters")
    p.add_argument("--param", action="append", type=_parse_param, help="override a scenario parameter")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--run", action="store_true", help="also attempt decryption and record the outcome")
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("report", parents=[common], help="render a metrics log")
    p.add_argument("--log", required=True, type=Path)
    p.add_argument("--format", choices=["text", "html"], default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--last", type=int, help="only the last N runs")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("keygen", parents=[common], help="generate a signing key pair")
    p.add_argument("--scheme", default="dilithium2", choices=signing.available_schemes())
    p.add_argument("--out", required=True)
    p.add_argument("--pub-out")
    p.set_defaults(func=cmd_keygen)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s"
    )
    try:
        return args.func(parser, args)
    except BB84Error as exc:
        if args.json:
            print(json.dumps({"error": exc.kind, "message": str(exc), "notes": exc.notes, "exit_code": exc.exit_code}))
        else:
            print(f"error: {exc.kind}: {exc}", file=sys.stderr)
            for note in exc.notes:
                print(f"  {note}", file=sys.stderr)
            record = getattr(exc, "record", None)
            if record is not None and record.operation != "encrypt":
                print(render_report([record]), end="")
        return exc.exit_code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
