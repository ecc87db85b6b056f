"""Exception hierarchy.

Every failure the CLI can report is a subclass of :class:`BB84Error` and
carries a distinct process exit code, so scripts can tell an armor error
from a failed integrity gate without parsing messages.
"""

from __future__ import annotations


class BB84Error(Exception):
    """Base class for all typed failures raised by this package."""

    exit_code = 1

    def __init__(self, message: str, *, notes: list[str] | None = None) -> None:
        super().__init__(message)
        self.notes: list[str] = list(notes or [])

    @property
    def kind(self) -> str:
        return type(self).__name__


# -- container parsing ------------------------------------------------------

class ContainerError(BB84Error):
    exit_code = 10


class InvalidArmor(ContainerError):
    """Missing fences or undecodable base64."""

    exit_code = 11


class BadMagic(ContainerError):
    exit_code = 12


class UnsupportedVersion(ContainerError):
    exit_code = 13


class TruncatedHeader(ContainerError):
    """The binary payload ends before a declared field does."""

    exit_code = 14


class MalformedHeader(ContainerError):
    """A field is present but has an impossible length or encoding."""

    exit_code = 15


class BodyDigestMismatch(ContainerError):
    exit_code = 16


# -- decryption chain -------------------------------------------------------

class BadSignature(BB84Error):
    exit_code = 20


class GateFail(BB84Error):
    """The HMAC gate rejected the presented key; nothing was decrypted."""

    exit_code = 30

    def __init__(self, message: str, *, diagnosis: str, notes: list[str] | None = None) -> None:
        super().__init__(message, notes=notes)
        self.diagnosis = diagnosis


class InternalPaddingError(BB84Error):
    """PKCS#7 padding was invalid after the gate passed.

    Reaching this means the gate admitted a ciphertext it should not have,
    which is a bug rather than an attack outcome.
    """

    exit_code = 40


class HashMismatch(BB84Error):
    exit_code = 41


# -- inputs and plumbing ----------------------------------------------------

class KeyMaterialError(BB84Error, ValueError):
    """Key file, hex key or sifted key unusable (too short, bad encoding)."""

    exit_code = 50


class SignatureSchemeError(BB84Error):
    exit_code = 51


class EavesdropperDetected(BB84Error):
    exit_code = 60


class PipelineIOError(BB84Error):
    exit_code = 70


class StageError(BB84Error):
    """Wraps an unexpected failure inside a named pipeline stage."""

    exit_code = 80

    def __init__(self, stage: str, cause: BaseException) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


EXIT_CODES: dict[str, int] = {
    cls.__name__: cls.exit_code
    for cls in (
        BB84Error,
        ContainerError,
        InvalidArmor,
        BadMagic,
        UnsupportedVersion,
        TruncatedHeader,
        MalformedHeader,
        BodyDigestMismatch,
        BadSignature,
        GateFail,
        InternalPaddingError,
        HashMismatch,
        KeyMaterialError,
        SignatureSchemeError,
        EavesdropperDetected,
        PipelineIOError,
        StageError,
    )
}
