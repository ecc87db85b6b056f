"""Simulated BB84 key exchange driving AES-256-CBC file containers.

The sifted key from a BB84 simulation is stretched with PBKDF2-HMAC-SHA256
into an AES-256 key.  Containers carry an HMAC tag that gates decryption on
the presented key and an optional Dilithium2 signature over the ciphertext.
"""

from __future__ import annotations

from .errors import BB84Error
from .pipeline import PipelineConfig, decrypt_pipeline, encrypt_pipeline, verify_pipeline
from .qkd import BitString, EavesdropperConfig, run_exchange, run_exchange_until

__version__ = "0.1.0"

__all__ = [
    "BB84Error",
    "BitString",
    "EavesdropperConfig",
    "PipelineConfig",
    "decrypt_pipeline",
    "encrypt_pipeline",
    "run_exchange",
    "run_exchange_until",
    "verify_pipeline",
]
