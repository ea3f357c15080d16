"""Random-number machinery of the encryptor: C-runtime ``rand``, the
ChaCha20 keystream generator and the per-thread generator fleet.

Everything here is deterministic. A fleet is a pure function of
``(time_seed, processors, arch, entropy_strategy)``.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

MASK32 = 0xFFFFFFFF

LCG_MULTIPLIER = 214013
LCG_INCREMENT = 2531011

ENTROPY_SIZE = 40
KEY_BLOCK_SIZE = 80  # key(32) + iv(16) + two OAEP seeds(16 + 16)
KEY_SIZE = 32
IV_SIZE = 16

_SIGMA = struct.unpack("<4I", b"expand 32-byte k")


class Arch(enum.Enum):
    X86 = "x86"
    X64 = "x64"

    @property
    def long_size(self) -> int:
        """``sizeof(long)`` as read by the generator self-test."""
        return 4 if self is Arch.X86 else 8

    @classmethod
    def parse(cls, value: "str | Arch") -> "Arch":
        if isinstance(value, Arch):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown arch {value!r}; expected x86 or x64") from None


class EntropyStrategy(enum.Enum):
    LOW_BYTE = "low-byte"
    LOW_7_BIT = "low-7-bit"

    @property
    def mask(self) -> int:
        return 0xFF if self is EntropyStrategy.LOW_BYTE else 0x7F

    @classmethod
    def parse(cls, value: "str | EntropyStrategy") -> "EntropyStrategy":
        if isinstance(value, EntropyStrategy):
            return value
        return cls(value)


# ---------------------------------------------------------------------------
# C runtime rand()


@dataclass(frozen=True)
class LcgState:
    state: int

    def __post_init__(self):
        if not 0 <= self.state <= MASK32:
            raise ValueError("LCG state must fit in 32 bits")


def lcg_next(lcg: LcgState) -> tuple[LcgState, int]:
    nxt = (lcg.state * LCG_MULTIPLIER + LCG_INCREMENT) & MASK32
    return LcgState(nxt), (nxt >> 16) & 0x7FFF


def srand(seed: int) -> LcgState:
    return LcgState(seed & MASK32)


def rand_sequence(seed: int, count: int) -> list[int]:
    """First ``count`` outputs of ``rand()`` after ``srand(seed)``."""
    state = seed & MASK32
    out = []
    for _ in range(count):
        state = (state * LCG_MULTIPLIER + LCG_INCREMENT) & MASK32
        out.append((state >> 16) & 0x7FFF)
    return out


@dataclass(frozen=True)
class EntropyBlock:
    data: bytes

    def __post_init__(self):
        if len(self.data) != ENTROPY_SIZE:
            raise ValueError(f"entropy block must be {ENTROPY_SIZE} bytes, got {len(self.data)}")


def derive_entropy(
    lcg: LcgState, strategy: EntropyStrategy = EntropyStrategy.LOW_BYTE
) -> tuple[EntropyBlock, LcgState]:
    """Draw 40 bytes from the rand() stream, one call per byte."""
    mask = strategy.mask
    state = lcg.state
    out = bytearray(ENTROPY_SIZE)
    for k in range(ENTROPY_SIZE):
        state = (state * LCG_MULTIPLIER + LCG_INCREMENT) & MASK32
        out[k] = ((state >> 16) & 0x7FFF) & mask
    return EntropyBlock(bytes(out)), LcgState(state)


# ---------------------------------------------------------------------------
# ChaCha20


def _rotl(v: int, c: int) -> int:
    return ((v << c) & MASK32) | (v >> (32 - c))


def chacha20_block(key_words, nonce_words, counter: int) -> bytes:
    """One 64-byte ChaCha20 block (original 64-bit counter / 64-bit nonce layout)."""
    x = [
        *_SIGMA,
        *key_words,
        counter & MASK32,
        (counter >> 32) & MASK32,
        *nonce_words,
    ]
    s = list(x)
    for _ in range(10):
        for a, b, c, d in (
            (0, 4, 8, 12), (1, 5, 9, 13), (2, 6, 10, 14), (3, 7, 11, 15),
            (0, 5, 10, 15), (1, 6, 11, 12), (2, 7, 8, 13), (3, 4, 9, 14),
        ):
            s[a] = (s[a] + s[b]) & MASK32
            s[d] = _rotl(s[d] ^ s[a], 16)
            s[c] = (s[c] + s[d]) & MASK32
            s[b] = _rotl(s[b] ^ s[c], 12)
            s[a] = (s[a] + s[b]) & MASK32
            s[d] = _rotl(s[d] ^ s[a], 8)
            s[c] = (s[c] + s[d]) & MASK32
            s[b] = _rotl(s[b] ^ s[c], 7)
    return struct.pack("<16I", *((s[i] + x[i]) & MASK32 for i in range(16)))


@dataclass
class ChaChaPrng:
    """Stateful ChaCha20 keystream reader.

    Reads are stream-consistent: ``read(n) + read(m) == read(n + m)``.
    """

    key: bytes
    nonce: bytes
    block_counter: int = 0
    buffered: bytearray = field(default_factory=bytearray)
    total_bytes_emitted: int = 0

    def __post_init__(self):
        if len(self.key) != 32 or len(self.nonce) != 8:
            raise ValueError("ChaCha20 needs a 32-byte key and an 8-byte nonce")
        self._key_words = struct.unpack("<8I", self.key)
        self._nonce_words = struct.unpack("<2I", self.nonce)

    def read(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("read length must be non-negative")
        while len(self.buffered) < n:
            self.buffered += chacha20_block(self._key_words, self._nonce_words, self.block_counter)
            self.block_counter = (self.block_counter + 1) & 0xFFFFFFFFFFFFFFFF
        out = bytes(self.buffered[:n])
        del self.buffered[:n]
        self.total_bytes_emitted += n
        return out

    def clone(self) -> "ChaChaPrng":
        return ChaChaPrng(
            self.key, self.nonce, self.block_counter, bytearray(self.buffered), self.total_bytes_emitted
        )


def prng_init(entropy: EntropyBlock | bytes, arch: Arch = Arch.X64) -> ChaChaPrng:
    """Key a generator from 40 entropy bytes and run the ``sizeof(long)`` self-test.

    Bytes 0..31 become the key, 32..39 the nonce; the self-test draw is
    discarded, so the first usable byte is keystream byte 4 (x86) or 8 (x64).
    """
    data = entropy.data if isinstance(entropy, EntropyBlock) else bytes(entropy)
    if len(data) != ENTROPY_SIZE:
        raise ValueError(f"entropy must be {ENTROPY_SIZE} bytes, got {len(data)}")
    prng = ChaChaPrng(key=data[:32], nonce=data[32:])
    prng.read(Arch.parse(arch).long_size)
    return prng


# ---------------------------------------------------------------------------
# Fleet


class UnusedGeneratorError(RuntimeError):
    pass


@dataclass
class PrngFleet:
    generators: list[ChaChaPrng]
    processors: int
    arch: Arch
    lcg_steps: int

    def thread(self, thread_id: int) -> ChaChaPrng:
        """Generator bound to encryption thread ``thread_id`` (1-based)."""
        if thread_id == 0:
            raise UnusedGeneratorError("generator 0 is initialised but never used for encryption")
        if not 1 <= thread_id <= self.processors:
            raise IndexError(f"thread id {thread_id} outside 1..{self.processors}")
        return self.generators[thread_id]

    @property
    def discard(self) -> int:
        return self.arch.long_size

    def clone(self) -> "PrngFleet":
        return PrngFleet([g.clone() for g in self.generators], self.processors, self.arch, self.lcg_steps)


def fleet_init(
    time_seed: int,
    processors: int,
    arch: Arch | str = Arch.X64,
    strategy: EntropyStrategy | str = EntropyStrategy.LOW_BYTE,
) -> PrngFleet:
    """Initialise ``processors + 1`` generators from one rand() stream seeded with ``time_seed``."""
    if processors < 1:
        raise ValueError("processors must be >= 1")
    arch = Arch.parse(arch)
    strategy = EntropyStrategy.parse(strategy)
    lcg = srand(time_seed)
    generators = []
    for _ in range(processors + 1):
        block, lcg = derive_entropy(lcg, strategy)
        generators.append(prng_init(block, arch))
    return PrngFleet(generators, processors, arch, lcg_steps=ENTROPY_SIZE * (processors + 1))


def split_key_block(block: bytes) -> tuple[bytes, bytes, bytes, bytes]:
    """Split an 80-byte per-file draw into (key, iv, oaep_seed_key, oaep_seed_iv)."""
    if len(block) != KEY_BLOCK_SIZE:
        raise ValueError(f"key block must be {KEY_BLOCK_SIZE} bytes")
    return block[:32], block[32:48], block[48:64], block[64:80]
