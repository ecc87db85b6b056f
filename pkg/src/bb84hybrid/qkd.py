"""BB84 key exchange simulation.

Prepare-and-measure BB84 never entangles qubits, so each position reduces
to a closed-form rule: measuring in the preparation basis returns the
prepared bit, measuring in the conjugate basis returns a fair coin.  The
simulator applies that rule directly on bit arrays instead of evolving a
state vector.

All randomness comes from an injected :class:`random.Random`.  Pass a
seeded ``random.Random(seed)`` for reproducible runs; the default is
:class:`secrets.SystemRandom`, which draws from the OS CSPRNG.
"""

from __future__ import annotations

import math
import random
import secrets
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Literal

import numpy as np

__all__ = [
    "BasisString",
    "BitString",
    "EavesdropperConfig",
    "ExchangeTranscript",
    "NO_EAVESDROPPER",
    "default_rng",
    "generate_random_bases",
    "generate_random_bits",
    "measure",
    "run_exchange",
    "run_exchange_until",
    "sift",
]


def default_rng() -> random.Random:
    return secrets.SystemRandom()


def _draw_bits(n: int, rng: random.Random) -> np.ndarray:
    # getrandbits works on SystemRandom too, so one call serves both paths.
    raw = rng.getrandbits(n).to_bytes((n + 7) // 8, "big")
    return np.unpackbits(np.frombuffer(raw, dtype=np.uint8))[-n:]


class _Symbols:
    """Immutable sequence over a two-letter alphabet, stored as uint8 0/1."""

    alphabet: str = "01"
    __slots__ = ("_data",)

    def __init__(self, values: str | Iterable[int] | np.ndarray) -> None:
        if isinstance(values, str):
            table = {ch: i for i, ch in enumerate(self.alphabet)}
            try:
                arr = np.fromiter((table[ch] for ch in values), dtype=np.uint8, count=len(values))
            except KeyError as exc:
                raise ValueError(
                    f"{type(self).__name__} symbols must be in {self.alphabet!r}, got {exc.args[0]!r}"
                ) from None
        else:
            arr = np.array(values if isinstance(values, np.ndarray) else list(values))
            if arr.ndim != 1:
                raise ValueError(f"{type(self).__name__} must be one-dimensional")
            if arr.size and not np.isin(arr, (0, 1)).all():
                raise ValueError(f"{type(self).__name__} values must be 0 or 1")
            arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self._data = arr

    @property
    def length(self) -> int:
        return int(self._data.size)

    @property
    def array(self) -> np.ndarray:
        """Read-only uint8 view of the underlying values."""
        return self._data

    def __len__(self) -> int:
        return int(self._data.size)

    def __iter__(self) -> Iterator[int]:
        return iter(self._data.tolist())

    def __getitem__(self, index):
        if isinstance(index, slice):
            return type(self)(self._data[index])
        return int(self._data[index])

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return np.array_equal(self._data, other._data)

    def __hash__(self) -> int:
        return hash((type(self).__name__, self._data.tobytes()))

    def __str__(self) -> str:
        return "".join(self.alphabet[v] for v in self._data.tolist())

    def __repr__(self) -> str:
        text = str(self)
        if len(text) > 32:
            text = text[:32] + f"...({len(self)} total)"
        return f"{type(self).__name__}({text!r})"

    @classmethod
    def concat(cls, parts: Iterable[_Symbols]):
        arrays = [p.array for p in parts]
        return cls(np.concatenate(arrays) if arrays else np.zeros(0, dtype=np.uint8))


class BitString(_Symbols):
    alphabet = "01"
    __slots__ = ()

    @property
    def bits(self) -> np.ndarray:
        return self._data

    def count_ones(self) -> int:
        return int(self._data.sum())

    def to_bytes(self) -> bytes:
        """Pack MSB-first; trailing bits that do not fill a byte are dropped."""
        whole = (len(self) // 8) * 8
        return np.packbits(self._data[:whole]).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes, nbits: int | None = None) -> BitString:
        arr = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
        if nbits is not None:
            if nbits > arr.size:
                raise ValueError(f"requested {nbits} bits from {len(data)} bytes")
            arr = arr[:nbits]
        return cls(arr)


class BasisString(_Symbols):
    """Measurement bases; ``Z`` is the computational basis, ``X`` the Hadamard one."""

    alphabet = "ZX"
    __slots__ = ()

    @property
    def bases(self) -> str:
        return str(self)


@dataclass(frozen=True)
class EavesdropperConfig:
    mode: Literal["none", "intercept_resend"] = "none"
    intercept_fraction: float = 0.0

    def __post_init__(self) -> None:
        if self.mode not in ("none", "intercept_resend"):
            raise ValueError(f"unknown eavesdropper mode {self.mode!r}")
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ValueError("intercept_fraction must lie in [0, 1]")
        if self.mode == "none" and self.intercept_fraction != 0.0:
            raise ValueError("intercept_fraction must be 0 when mode is 'none'")

    @classmethod
    def intercept_resend(cls, fraction: float = 1.0) -> EavesdropperConfig:
        return cls("intercept_resend", float(fraction))

    @property
    def active(self) -> bool:
        return self.mode == "intercept_resend" and self.intercept_fraction > 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode, "intercept_fraction": self.intercept_fraction}


NO_EAVESDROPPER = EavesdropperConfig()


@dataclass(frozen=True, eq=False)
class ExchangeTranscript:
    """Everything observable about one simulated exchange.

    ``key_b`` holds Bob's measurements at the sifted positions.  On an
    unattacked channel it equals ``key_a`` bit for bit; under
    intercept-resend it disagrees on roughly a quarter of positions, which
    is what ``qber`` measures.
    """

    alice_bits: BitString
    alice_bases: BasisString
    bob_bases: BasisString
    bob_bits: BitString
    sift_mask: np.ndarray
    key_a: BitString
    key_b: BitString
    match_ratio: float
    qber: float
    eavesdropper: EavesdropperConfig = NO_EAVESDROPPER
    rounds: int = 1

    @property
    def n(self) -> int:
        return len(self.alice_bits)

    @property
    def qubits_consumed(self) -> int:
        return len(self.alice_bits)

    @property
    def sifted_length(self) -> int:
        return len(self.key_a)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExchangeTranscript):
            return NotImplemented
        return (
            self.alice_bits == other.alice_bits
            and self.alice_bases == other.alice_bases
            and self.bob_bases == other.bob_bases
            and self.bob_bits == other.bob_bits
            and np.array_equal(self.sift_mask, other.sift_mask)
            and self.key_a == other.key_a
            and self.key_b == other.key_b
            and self.match_ratio == other.match_ratio
            and self.qber == other.qber
            and self.eavesdropper == other.eavesdropper
            and self.rounds == other.rounds
        )


    def __repr__(self) -> str:
        return (
            f"ExchangeTranscript(n={self.n}, sifted={self.sifted_length}, "
            f"match_ratio={self.match_ratio:.4f}, qber={self.qber:.4f}, rounds={self.rounds})"
        )

    def summary(self) -> dict[str, Any]:
        """Public statistics only; safe to log."""
        return {
            "qubits": self.n,
            "rounds": self.rounds,
            "sifted_bits": self.sifted_length,
            "match_ratio": self.match_ratio,
            "qber": self.qber,
            "eavesdropper": self.eavesdropper.to_dict(),
        }

    def to_dict(self, *, include_key_material: bool = False) -> dict[str, Any]:
        """Serialise to JSON-ready data.

        Raw bit strings are key material and are only emitted when
        ``include_key_material`` is set.
        """
        out = self.summary()
        if include_key_material:
            out.update(
                alice_bits=str(self.alice_bits),
                alice_bases=str(self.alice_bases),
                bob_bases=str(self.bob_bases),
                bob_bits=str(self.bob_bits),
                key_a=str(self.key_a),
                key_b=str(self.key_b),
            )
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExchangeTranscript:
        eve = EavesdropperConfig(**data.get("eavesdropper", {}))
        return _assemble(
            BitString(data["alice_bits"]),
            BasisString(data["alice_bases"]),
            BasisString(data["bob_bases"]),
            BitString(data["bob_bits"]),
            eve,
            rounds=int(data.get("rounds", 1)),
        )


def _check_count(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
        raise ValueError(f"count must be a positive integer, got {n!r}")


def generate_random_bits(n: int, rng: random.Random | None = None) -> BitString:
    _check_count(n)
    return BitString(_draw_bits(int(n), rng or default_rng()))


def generate_random_bases(n: int, rng: random.Random | None = None) -> BasisString:
    _check_count(n)
    return BasisString(_draw_bits(int(n), rng or default_rng()))


def measure(
    alice_bits: BitString,
    alice_bases: BasisString,
    bob_bases: BasisString,
    eve: EavesdropperConfig = NO_EAVESDROPPER,
    rng: random.Random | None = None,
) -> BitString:
    """Bob's raw measurement outcomes for Alice's prepared qubits.

    With an intercept-resend eavesdropper, each position is intercepted
    independently with probability ``eve.intercept_fraction``.  Eve
    measures an intercepted qubit in a random basis and re-prepares her
    outcome in that basis, so Bob then measures her state instead.
    """
    n = len(alice_bits)
    if len(alice_bases) != n or len(bob_bases) != n:
        raise ValueError(
            f"length mismatch: bits={n}, alice_bases={len(alice_bases)}, bob_bases={len(bob_bases)}"
        )
    if n == 0:
        return BitString([])
    rng = rng or default_rng()

    # State Bob receives, described by (basis, bit).
    sent_bases = alice_bases.array
    sent_bits = alice_bits.array

    if eve.active:
        p = eve.intercept_fraction
        if p >= 1.0:
            hit = np.ones(n, dtype=bool)
        else:
            hit = np.fromiter((rng.random() < p for _ in range(n)), dtype=bool, count=n)
        eve_bases = _draw_bits(n, rng)
        eve_coins = _draw_bits(n, rng)
        eve_bits = np.where(eve_bases == sent_bases, sent_bits, eve_coins)
        sent_bases = np.where(hit, eve_bases, sent_bases).astype(np.uint8)
        sent_bits = np.where(hit, eve_bits, sent_bits).astype(np.uint8)

    coins = _draw_bits(n, rng)
    out = np.where(bob_bases.array == sent_bases, sent_bits, coins)
    return BitString(out.astype(np.uint8))


def sift(
    alice_bits: BitString,
    bob_bits: BitString,
    alice_bases: BasisString,
    bob_bases: BasisString,
) -> tuple[np.ndarray, BitString, BitString]:
    """Keep the positions where both parties chose the same basis.

    Returns ``(mask, key_a, key_b)`` with order preserved.
    """
    n = len(alice_bits)
    if not (len(bob_bits) == len(alice_bases) == len(bob_bases) == n):
        raise ValueError("sift inputs must all have the same length")
    mask = alice_bases.array == bob_bases.array
    mask.setflags(write=False)
    return mask, BitString(alice_bits.array[mask]), BitString(bob_bits.array[mask])


def _assemble(
    alice_bits: BitString,
    alice_bases: BasisString,
    bob_bases: BasisString,
    bob_bits: BitString,
    eve: EavesdropperConfig,
    *,
    rounds: int = 1,
) -> ExchangeTranscript:
    mask, key_a, key_b = sift(alice_bits, bob_bits, alice_bases, bob_bases)
    n = len(alice_bits)
    kept = int(mask.sum())
    errors = int(np.count_nonzero(key_a.array != key_b.array))
    return ExchangeTranscript(
        alice_bits=alice_bits,
        alice_bases=alice_bases,
        bob_bases=bob_bases,
        bob_bits=bob_bits,
        sift_mask=mask,
        key_a=key_a,
        key_b=key_b,
        match_ratio=kept / n if n else 0.0,
        qber=errors / kept if kept else 0.0,
        eavesdropper=eve,
        rounds=rounds,
    )


def run_exchange(
    n: int,
    eve: EavesdropperConfig = NO_EAVESDROPPER,
    rng: random.Random | None = None,
) -> ExchangeTranscript:
    _check_count(n)
    rng = rng or default_rng()
    alice_bits = generate_random_bits(n, rng)
    alice_bases = generate_random_bases(n, rng)
    bob_bases = generate_random_bases(n, rng)
    bob_bits = measure(alice_bits, alice_bases, bob_bases, eve, rng)
    return _assemble(alice_bits, alice_bases, bob_bases, bob_bits, eve)


def run_exchange_until(
    target_sifted_bits: int,
    eve: EavesdropperConfig = NO_EAVESDROPPER,
    rng: random.Random | None = None,
) -> ExchangeTranscript:
    """Keep sending qubits until the sifted key reaches ``target_sifted_bits``.

    Each round sends enough qubits to cover the shortfall at the expected
    1/2 sifting rate plus a safety margin; rounds are concatenated, which
    preserves every per-position invariant of a single exchange.
    """
    _check_count(target_sifted_bits)
    rng = rng or default_rng()
    rounds: list[ExchangeTranscript] = []
    have = 0
    while have < target_sifted_bits:
        shortfall = target_sifted_bits - have
        # mean + ~4 sigma of Binomial(n, 1/2) keeps the round count near 1.
        n = 2 * shortfall + 8 * math.isqrt(2 * shortfall) + 8
        part = run_exchange(n, eve, rng)
        rounds.append(part)
        have += part.sifted_length
    if len(rounds) == 1:
        return rounds[0]
    return _assemble(
        BitString.concat(r.alice_bits for r in rounds),
        BasisString.concat(r.alice_bases for r in rounds),
        BasisString.concat(r.bob_bases for r in rounds),
        BitString.concat(r.bob_bits for r in rounds),
        eve,
        rounds=len(rounds),
    )
