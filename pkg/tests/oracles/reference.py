"""Independent reference implementations used as test oracles."""

import shutil
import subprocess
from pathlib import Path

from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

HERE = Path(__file__).parent

# First ten rand() outputs after srand(1) on the Microsoft C runtime, as widely published.
MSVCRT_SRAND1_FIRST10 = [41, 18467, 6334, 26500, 19169, 15724, 11478, 29358, 26962, 24464]


def build_msvcrt_oracle(workdir: Path) -> Path | None:
    cc = shutil.which("cc") or shutil.which("gcc") or shutil.which("clang")
    if cc is None:
        return None
    exe = workdir / "msvcrt_rand"
    subprocess.run([cc, "-O2", "-o", str(exe), str(HERE / "msvcrt_rand.c")], check=True)
    return exe


def msvcrt_outputs(exe: Path, seeds: list[int], count: int) -> list[list[int]]:
    out = subprocess.run([str(exe), str(count), *map(str, seeds)], check=True, capture_output=True, text=True)
    return [list(map(int, line.split())) for line in out.stdout.splitlines()]


def chacha20_keystream(key: bytes, nonce8: bytes, length: int, counter: int = 0) -> bytes:
    """ChaCha20 keystream from the OpenSSL-backed `cryptography` package.

    Its 16-byte nonce is the 64-bit block counter followed by the 64-bit nonce.
    """
    full_nonce = counter.to_bytes(8, "little") + nonce8
    enc = Cipher(algorithms.ChaCha20(key, full_nonce), mode=None).encryptor()
    return enc.update(b"\x00" * length)


def aes_ctr_le(key: bytes, iv: bytes, length: int) -> bytes:
    """Block-by-block AES-CTR with a little-endian 128-bit counter using Python ints."""
    ecb = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    ctr = int.from_bytes(iv, "little")
    out = bytearray()
    while len(out) < length:
        out += ecb.update(ctr.to_bytes(16, "little"))
        ctr = (ctr + 1) % (1 << 128)
    return bytes(out[:length])


def offset_plan_bruteforce(size: int) -> list[tuple[int, int]]:
    """Windows of the intermittent plan, from the piecewise rule stated case by case."""
    mib = 1 << 20
    if size == 0:
        return []
    if size < mib:
        return [(0, size)]
    if size < 2 * mib:
        parts = 1
    elif size < 3 * mib:
        parts = 2
    elif size < 4 * mib:
        parts = 3
    else:
        parts = 4
    part = size // parts
    return [(part * i, mib) for i in range(parts)]
