"""Intermittent AES-256-CTR encryption, the RSA-OAEP footer and helpers
shared by the simulator and the decryptor."""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass

import gmpy2
import numpy as np
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import rsa
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

MIB = 1 << 20
WINDOW = MIB

RSA_BLOCK = 512
FOOTER_RESERVED = 8
FOOTER_VERSION_SIZE = 4
FOOTER_SIZE = 2 * RSA_BLOCK + FOOTER_RESERVED + FOOTER_VERSION_SIZE
assert FOOTER_SIZE == 0x40C

DEFAULT_VERSION = b"\x01\x00\x00\x00"
OAEP_HASH_NAME = "blake2b-128"
OAEP_HLEN = 16


@dataclass(frozen=True)
class OffsetPlan:
    size: int
    div: int
    offsets: tuple[int, ...]

    @property
    def windows(self) -> list[tuple[int, int]]:
        """(offset, length) pairs, clipped at end of file."""
        return [(o, min(WINDOW, self.size - o)) for o in self.offsets]

    @property
    def encrypted_bytes(self) -> int:
        return sum(n for _, n in self.windows)


def offset_plan(file_size: int) -> OffsetPlan:
    if file_size < 0:
        raise ValueError("file size must be non-negative")
    if file_size >= 4 * MIB:
        div = 4
    elif file_size >= MIB:
        div = file_size // MIB
    else:
        div = 1
    if file_size == 0:
        return OffsetPlan(0, div, ())
    step = file_size // div
    return OffsetPlan(file_size, div, tuple(step * i for i in range(div)))


def _counter_blocks(iv: bytes, start_block: int, nblocks: int) -> bytes:
    """``nblocks`` consecutive 128-bit little-endian counter values beginning at iv + start_block."""
    lo0 = int.from_bytes(iv[:8], "little")
    hi0 = int.from_bytes(iv[8:], "little")
    base = (lo0 | (hi0 << 64)) + start_block
    lo0 = base & 0xFFFFFFFFFFFFFFFF
    hi0 = (base >> 64) & 0xFFFFFFFFFFFFFFFF
    idx = np.arange(nblocks, dtype=np.uint64)
    lo = idx + np.uint64(lo0)  # wraps modulo 2**64
    hi = np.full(nblocks, hi0, dtype=np.uint64) + (lo < np.uint64(lo0)).astype(np.uint64)
    out = np.empty((nblocks, 2), dtype="<u8")
    out[:, 0] = lo
    out[:, 1] = hi
    return out.tobytes()


def ctr_keystream(key: bytes, iv: bytes, length: int, offset: int = 0) -> bytes:
    """AES-256-CTR keystream with a little-endian 128-bit counter starting at ``iv``.

    ``offset`` is a byte position within the stream.
    """
    if len(key) != 32 or len(iv) != 16:
        raise ValueError("AES-256-CTR needs a 32-byte key and a 16-byte iv")
    if length <= 0:
        return b""
    first = offset // 16
    last = (offset + length + 15) // 16
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    stream = enc.update(_counter_blocks(iv, first, last - first))
    skip = offset - first * 16
    return stream[skip : skip + length]


def _xor(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, dtype=np.uint8) ^ np.frombuffer(b, dtype=np.uint8)).tobytes()


def apply_plan(data: bytes, key: bytes, iv: bytes) -> bytes:
    """XOR every plan window with one continuous keystream; self-inverse."""
    plan = offset_plan(len(data))
    windows = plan.windows
    total = sum(n for _, n in windows)
    stream = ctr_keystream(key, iv, total)
    out = bytearray(data)
    pos = 0
    for off, n in windows:
        out[off : off + n] = _xor(data[off : off + n], stream[pos : pos + n])
        pos += n
    return bytes(out)


def ctr_xor(data: bytes, key: bytes, iv: bytes) -> bytes:
    """XOR ``data`` with the keystream from its start (no plan applied)."""
    return _xor(data, ctr_keystream(key, iv, len(data))) if data else b""


def first_window(data: bytes) -> bytes:
    plan = offset_plan(len(data))
    if not plan.offsets:
        return b""
    off, n = plan.windows[0]
    return data[off : off + n]


# ---------------------------------------------------------------------------
# RSA-OAEP with caller-supplied randomness


def _h(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=OAEP_HLEN).digest()


def _mgf1(seed: bytes, length: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < length:
        out += _h(seed + struct.pack(">I", counter))
        counter += 1
    return bytes(out[:length])


def oaep_encode(message: bytes, k: int, seed: bytes, label: bytes = b"") -> bytes:
    if len(seed) != OAEP_HLEN:
        raise ValueError(f"OAEP seed must be {OAEP_HLEN} bytes")
    if len(message) > k - 2 * OAEP_HLEN - 2:
        raise ValueError("message too long for OAEP")
    db = _h(label) + b"\x00" * (k - len(message) - 2 * OAEP_HLEN - 2) + b"\x01" + message
    masked_db = _xor(db, _mgf1(seed, len(db)))
    masked_seed = _xor(seed, _mgf1(masked_db, OAEP_HLEN))
    return b"\x00" + masked_seed + masked_db


def oaep_decode(em: bytes, k: int, label: bytes = b"") -> bytes:
    if len(em) != k or em[0] != 0:
        raise ValueError("OAEP decoding error")
    masked_seed, masked_db = em[1 : 1 + OAEP_HLEN], em[1 + OAEP_HLEN :]
    seed = _xor(masked_seed, _mgf1(masked_db, OAEP_HLEN))
    db = _xor(masked_db, _mgf1(seed, len(masked_db)))
    if db[:OAEP_HLEN] != _h(label):
        raise ValueError("OAEP decoding error")
    rest = db[OAEP_HLEN:].lstrip(b"\x00")
    if not rest or rest[0] != 1:
        raise ValueError("OAEP decoding error")
    return rest[1:]


def rsa_oaep_encrypt(public_key: rsa.RSAPublicKey, message: bytes, seed: bytes) -> bytes:
    nums = public_key.public_numbers()
    k = (nums.n.bit_length() + 7) // 8
    m = int.from_bytes(oaep_encode(message, k, seed), "big")
    return pow(m, nums.e, nums.n).to_bytes(k, "big")


def rsa_oaep_decrypt(private_key: rsa.RSAPrivateKey, ciphertext: bytes) -> bytes:
    nums = private_key.private_numbers()
    n = nums.public_numbers.n
    k = (n.bit_length() + 7) // 8
    m = pow(int.from_bytes(ciphertext, "big"), nums.d, n)
    return oaep_decode(m.to_bytes(k, "big"), k)


def generate_rsa_key(bits: int = 4096, seed: int | None = None) -> rsa.RSAPrivateKey:
    """RSA keypair; reproducible when ``seed`` is given."""
    if seed is None:
        return rsa.generate_private_key(public_exponent=65537, key_size=bits)
    rng = random.Random(seed)
    e = 65537
    half = bits // 2
    while True:
        p = _prime(rng, half, e)
        q = _prime(rng, half, e)
        n = p * q
        if p != q and n.bit_length() == bits:
            break
    d = pow(e, -1, (p - 1) * (q - 1))
    pub = rsa.RSAPublicNumbers(e, n)
    priv = rsa.RSAPrivateNumbers(
        p, q, d, rsa.rsa_crt_dmp1(d, p), rsa.rsa_crt_dmq1(d, q), rsa.rsa_crt_iqmp(p, q), pub
    )
    return priv.private_key()


def _prime(rng: random.Random, bits: int, e: int) -> int:
    while True:
        cand = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        p = int(gmpy2.next_prime(cand))
        if p.bit_length() == bits and (p - 1) % e:
            return p


def private_key_pem(key: rsa.RSAPrivateKey) -> bytes:
    return key.private_bytes(
        serialization.Encoding.PEM, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()
    )


def load_private_key(pem: bytes) -> rsa.RSAPrivateKey:
    return serialization.load_pem_private_key(pem, password=None)


# ---------------------------------------------------------------------------
# Footer


@dataclass(frozen=True)
class EncryptedFooter:
    rsa_key_ct: bytes
    rsa_iv_ct: bytes
    reserved: bytes = b"\x00" * FOOTER_RESERVED
    version: bytes = DEFAULT_VERSION

    def to_bytes(self) -> bytes:
        out = self.rsa_key_ct + self.rsa_iv_ct + self.reserved + self.version
        if len(out) != FOOTER_SIZE:
            raise ValueError(f"footer must serialise to {FOOTER_SIZE} bytes, got {len(out)}")
        return out

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncryptedFooter":
        if len(raw) != FOOTER_SIZE:
            raise ValueError(f"footer must be {FOOTER_SIZE} bytes")
        return cls(
            raw[:RSA_BLOCK],
            raw[RSA_BLOCK : 2 * RSA_BLOCK],
            raw[2 * RSA_BLOCK : 2 * RSA_BLOCK + FOOTER_RESERVED],
            raw[2 * RSA_BLOCK + FOOTER_RESERVED :],
        )


def encrypt_file(
    data: bytes,
    key: bytes,
    iv: bytes,
    public_key: rsa.RSAPublicKey,
    oaep_randoms: tuple[bytes, bytes] | bytes,
    version: bytes = DEFAULT_VERSION,
) -> bytes:
    """Intermittently encrypt ``data`` and append the 0x40C-byte footer."""
    if len(key) != 32:
        raise ValueError(f"key must be 32 bytes, got {len(key)}")
    if len(iv) != 16:
        raise ValueError(f"iv must be 16 bytes, got {len(iv)}")
    if isinstance(oaep_randoms, (bytes, bytearray)):
        if len(oaep_randoms) != 2 * OAEP_HLEN:
            raise ValueError("need 32 bytes of OAEP randomness")
        oaep_randoms = (bytes(oaep_randoms[:16]), bytes(oaep_randoms[16:]))
    footer = EncryptedFooter(
        rsa_oaep_encrypt(public_key, key, oaep_randoms[0]),
        rsa_oaep_encrypt(public_key, iv, oaep_randoms[1]),
        version=version,
    )
    return apply_plan(data, key, iv) + footer.to_bytes()
