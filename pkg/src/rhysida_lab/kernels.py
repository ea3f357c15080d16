"""Compiled inner loops for the seed scan.

These mirror ``csprng`` (rand + ChaCha20 fleet) and AES-256 so a seed
trial costs a few microseconds. The pure-Python paths remain the
reference; tests check the two agree.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# ---------------------------------------------------------------------------
# AES tables


def _build_sbox() -> np.ndarray:
    def mul(a, b):
        r = 0
        while b:
            if b & 1:
                r ^= a
            a = ((a << 1) ^ 0x11B) if a & 0x80 else (a << 1)
            b >>= 1
        return r

    inv = [0] * 256
    for a in range(1, 256):
        for b in range(1, 256):
            if mul(a, b) == 1:
                inv[a] = b
                break
    sbox = np.zeros(256, dtype=np.uint8)
    for x in range(256):
        b = inv[x]
        s = b
        for i in range(1, 5):
            s ^= ((b << i) | (b >> (8 - i))) & 0xFF
        sbox[x] = s ^ 0x63
    return sbox


SBOX = _build_sbox()


def _build_te() -> np.ndarray:
    te = np.zeros((4, 256), dtype=np.uint32)
    for x in range(256):
        s = int(SBOX[x])
        s2 = ((s << 1) ^ 0x11B) & 0xFF if s & 0x80 else s << 1
        s3 = s2 ^ s
        w = (s2 << 24) | (s << 16) | (s << 8) | s3
        for r in range(4):
            te[r, x] = ((w >> (8 * r)) | (w << (32 - 8 * r))) & 0xFFFFFFFF if r else w
    return te


TE = _build_te()
RCON = np.array([0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40], dtype=np.uint32)
SBOX32 = SBOX.astype(np.uint32)


@njit(cache=True, nogil=True)
def aes256_expand(key, rk):
    """Fill ``rk`` (60 uint32 words) from a 32-byte key."""
    for i in range(8):
        rk[i] = (
            (np.uint32(key[4 * i]) << 24)
            | (np.uint32(key[4 * i + 1]) << 16)
            | (np.uint32(key[4 * i + 2]) << 8)
            | np.uint32(key[4 * i + 3])
        )
    for i in range(8, 60):
        t = rk[i - 1]
        if i % 8 == 0:
            t = ((t << 8) | (t >> 24)) & 0xFFFFFFFF
            t = (
                (SBOX32[(t >> 24) & 0xFF] << 24)
                | (SBOX32[(t >> 16) & 0xFF] << 16)
                | (SBOX32[(t >> 8) & 0xFF] << 8)
                | SBOX32[t & 0xFF]
            )
            t ^= RCON[i // 8 - 1] << 24
        elif i % 8 == 4:
            t = (
                (SBOX32[(t >> 24) & 0xFF] << 24)
                | (SBOX32[(t >> 16) & 0xFF] << 16)
                | (SBOX32[(t >> 8) & 0xFF] << 8)
                | SBOX32[t & 0xFF]
            )
        rk[i] = rk[i - 8] ^ t


@njit(cache=True, nogil=True)
def aes256_encrypt_block(rk, inp, out):
    s0 = ((np.uint32(inp[0]) << 24) | (np.uint32(inp[1]) << 16) | (np.uint32(inp[2]) << 8) | np.uint32(inp[3])) ^ rk[0]
    s1 = ((np.uint32(inp[4]) << 24) | (np.uint32(inp[5]) << 16) | (np.uint32(inp[6]) << 8) | np.uint32(inp[7])) ^ rk[1]
    s2 = ((np.uint32(inp[8]) << 24) | (np.uint32(inp[9]) << 16) | (np.uint32(inp[10]) << 8) | np.uint32(inp[11])) ^ rk[2]
    s3 = ((np.uint32(inp[12]) << 24) | (np.uint32(inp[13]) << 16) | (np.uint32(inp[14]) << 8) | np.uint32(inp[15])) ^ rk[3]
    T0 = TE[0]
    T1 = TE[1]
    T2 = TE[2]
    T3 = TE[3]
    for r in range(1, 14):
        k = 4 * r
        t0 = T0[s0 >> 24] ^ T1[(s1 >> 16) & 0xFF] ^ T2[(s2 >> 8) & 0xFF] ^ T3[s3 & 0xFF] ^ rk[k]
        t1 = T0[s1 >> 24] ^ T1[(s2 >> 16) & 0xFF] ^ T2[(s3 >> 8) & 0xFF] ^ T3[s0 & 0xFF] ^ rk[k + 1]
        t2 = T0[s2 >> 24] ^ T1[(s3 >> 16) & 0xFF] ^ T2[(s0 >> 8) & 0xFF] ^ T3[s1 & 0xFF] ^ rk[k + 2]
        t3 = T0[s3 >> 24] ^ T1[(s0 >> 16) & 0xFF] ^ T2[(s1 >> 8) & 0xFF] ^ T3[s2 & 0xFF] ^ rk[k + 3]
        s0, s1, s2, s3 = t0, t1, t2, t3
    S = SBOX32
    f0 = ((S[s0 >> 24] << 24) | (S[(s1 >> 16) & 0xFF] << 16) | (S[(s2 >> 8) & 0xFF] << 8) | S[s3 & 0xFF]) ^ rk[56]
    f1 = ((S[s1 >> 24] << 24) | (S[(s2 >> 16) & 0xFF] << 16) | (S[(s3 >> 8) & 0xFF] << 8) | S[s0 & 0xFF]) ^ rk[57]
    f2 = ((S[s2 >> 24] << 24) | (S[(s3 >> 16) & 0xFF] << 16) | (S[(s0 >> 8) & 0xFF] << 8) | S[s1 & 0xFF]) ^ rk[58]
    f3 = ((S[s3 >> 24] << 24) | (S[(s0 >> 16) & 0xFF] << 16) | (S[(s1 >> 8) & 0xFF] << 8) | S[s2 & 0xFF]) ^ rk[59]
    for i, w in enumerate((f0, f1, f2, f3)):
        out[4 * i] = (w >> 24) & 0xFF
        out[4 * i + 1] = (w >> 16) & 0xFF
        out[4 * i + 2] = (w >> 8) & 0xFF
        out[4 * i + 3] = w & 0xFF


@njit(cache=True, nogil=True)
def ctr_le_keystream(rk, iv, nblocks, out):
    """``nblocks`` AES-CTR keystream blocks, little-endian counter from ``iv``."""
    ctr = iv.copy()
    for b in range(nblocks):
        aes256_encrypt_block(rk, ctr, out[16 * b : 16 * b + 16])
        for i in range(16):
            ctr[i] = (ctr[i] + 1) & 0xFF
            if ctr[i] != 0:
                break


# ---------------------------------------------------------------------------
# ChaCha20


@njit(cache=True, nogil=True, inline="always")
def _rotl(v, c):
    return ((v << c) | (v >> (32 - c))) & 0xFFFFFFFF


@njit(cache=True, nogil=True, inline="always")
def _qr(x, a, b, c, d):
    x[a] = (x[a] + x[b]) & 0xFFFFFFFF
    x[d] = _rotl(x[d] ^ x[a], 16)
    x[c] = (x[c] + x[d]) & 0xFFFFFFFF
    x[b] = _rotl(x[b] ^ x[c], 12)
    x[a] = (x[a] + x[b]) & 0xFFFFFFFF
    x[d] = _rotl(x[d] ^ x[a], 8)
    x[c] = (x[c] + x[d]) & 0xFFFFFFFF
    x[b] = _rotl(x[b] ^ x[c], 7)


@njit(cache=True, nogil=True)
def chacha20_block(entropy, counter, out, work, init):
    """Keystream block ``counter`` for key = entropy[:32], nonce = entropy[32:40]."""
    init[0] = 0x61707865
    init[1] = 0x3320646E
    init[2] = 0x79622D32
    init[3] = 0x6B206574
    for i in range(10):
        init[4 + i] = (
            np.uint32(entropy[4 * i])
            | (np.uint32(entropy[4 * i + 1]) << 8)
            | (np.uint32(entropy[4 * i + 2]) << 16)
            | (np.uint32(entropy[4 * i + 3]) << 24)
        )
    # words 12..13 are the block counter, 14..15 the nonce
    init[14] = init[12]
    init[15] = init[13]
    init[12] = np.uint32(counter & 0xFFFFFFFF)
    init[13] = np.uint32((counter >> 32) & 0xFFFFFFFF)
    for i in range(16):
        work[i] = init[i]
    for _ in range(10):
        _qr(work, 0, 4, 8, 12)
        _qr(work, 1, 5, 9, 13)
        _qr(work, 2, 6, 10, 14)
        _qr(work, 3, 7, 11, 15)
        _qr(work, 0, 5, 10, 15)
        _qr(work, 1, 6, 11, 12)
        _qr(work, 2, 7, 8, 13)
        _qr(work, 3, 4, 9, 14)
    for i in range(16):
        v = (work[i] + init[i]) & 0xFFFFFFFF
        out[4 * i] = v & 0xFF
        out[4 * i + 1] = (v >> 8) & 0xFF
        out[4 * i + 2] = (v >> 16) & 0xFF
        out[4 * i + 3] = (v >> 24) & 0xFF


@njit(cache=True, nogil=True)
def first_key_blocks(seed, processors, discard, entropy_mask, out):
    """Write each thread's first 48 usable keystream bytes (key || iv) into out[P, 48]."""
    state = np.uint32(seed)
    entropy = np.empty(40, dtype=np.uint8)
    ks = np.empty(128, dtype=np.uint8)
    work = np.empty(16, dtype=np.uint32)
    init = np.empty(16, dtype=np.uint32)
    nblocks = (discard + 48 + 63) // 64
    for g in range(processors + 1):
        for k in range(40):
            state = np.uint32((np.uint64(state) * np.uint64(214013) + np.uint64(2531011)) & np.uint64(0xFFFFFFFF))
            entropy[k] = ((state >> 16) & 0x7FFF) & entropy_mask
        if g == 0:
            continue
        for b in range(nblocks):
            chacha20_block(entropy, b, ks[64 * b : 64 * b + 64], work, init)
        for i in range(48):
            out[g - 1, i] = ks[discard + i]


# ---------------------------------------------------------------------------
# Seed scan

MODE_MASK = 0
MODE_ENTROPY = 1


@njit(cache=True, nogil=True)
def _entropy_bits(buf, n):
    hist = np.zeros(256, dtype=np.int64)
    for i in range(n):
        hist[buf[i]] += 1
    h = 0.0
    for v in range(256):
        c = hist[v]
        if c:
            p = c / n
            h -= p * np.log2(p)
    return h


@njit(cache=True, nogil=True)
def scan_seeds(
    seed_high,
    count,
    processors,
    discard,
    entropy_mask,
    ct,
    expected,
    mask,
    lengths,
    nblocks,
    mode,
    threshold,
    hit_seed,
    hit_thread,
    hit_file,
):
    """Trial every seed in ``seed_high, seed_high-1, ...`` (``count`` of them).

    For each thread's first key, the first ``nblocks`` CTR blocks are XORed
    onto every file's ciphertext prefix ``ct[f]`` and tested. Returns the
    number of hits written, or -1 if the hit buffers overflowed.
    """
    nfiles = ct.shape[0]
    firsts = np.empty((processors, 48), dtype=np.uint8)
    rk = np.empty(60, dtype=np.uint32)
    stream = np.empty(16 * nblocks, dtype=np.uint8)
    plain = np.empty(16 * nblocks, dtype=np.uint8)
    cap = hit_seed.shape[0]
    nhits = 0
    for i in range(count):
        seed = seed_high - i
        first_key_blocks(seed, processors, discard, entropy_mask, firsts)
        for t in range(processors):
            aes256_expand(firsts[t, :32], rk)
            ctr_le_keystream(rk, firsts[t, 32:48], nblocks, stream)
            for f in range(nfiles):
                n = lengths[f]
                ok = True
                if mode == MODE_MASK:
                    for j in range(n):
                        if mask[f, j] and (ct[f, j] ^ stream[j]) != expected[f, j]:
                            ok = False
                            break
                else:
                    for j in range(n):
                        plain[j] = ct[f, j] ^ stream[j]
                    ok = _entropy_bits(plain, n) < threshold
                if ok:
                    if nhits >= cap:
                        return -1
                    hit_seed[nhits] = seed
                    hit_thread[nhits] = t + 1
                    hit_file[nhits] = f
                    nhits += 1
    return nhits
