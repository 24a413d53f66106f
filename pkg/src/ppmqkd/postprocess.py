"""Reconciliation bookkeeping and Toeplitz privacy amplification.

Error correction is idealised: it succeeds and reveals ``(log2 N - beta I_AB)`` bits
per symbol.  Privacy amplification hashes the corrected bit string with a random
binary Toeplitz matrix.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy.signal import fftconvolve

BLOCK_SYMBOLS = 4000


@dataclass(frozen=True)
class PaParams:
    beta: float = 0.90
    eps_EC: float = 1e-10
    eps_PA: float = 1e-10
    eps_bar: float = 1e-10
    delta_FK: float | None = None
    delta_FK_coeff: float = 7.0

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        for name in ("eps_EC", "eps_PA", "eps_bar"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")
        if self.delta_FK is not None and self.delta_FK < 0:
            raise ValueError("delta_FK must be >= 0")

    def finite_key_penalty(self, n_blocks: int = 1) -> float:
        """Finite-size deduction in bits per block.

        An explicit ``delta_FK`` wins.  Otherwise a placeholder
        ``c sqrt(n_blocks) log2(1/eps)`` is used, ``eps`` being the smallest of the
        three failure probabilities; the constant ``c`` is a modelling choice.
        """
        if self.delta_FK is not None:
            return self.delta_FK
        eps = min(self.eps_EC, self.eps_PA, self.eps_bar)
        return self.delta_FK_coeff * math.sqrt(n_blocks) * math.log2(1.0 / eps)


@dataclass
class SiftedBlock:
    alice: np.ndarray
    bob: np.ndarray
    N: int

    def __post_init__(self):
        self.alice = np.asarray(self.alice, dtype=np.int64)
        self.bob = np.asarray(self.bob, dtype=np.int64)
        if self.alice.shape != self.bob.shape or self.alice.ndim != 1:
            raise ValueError("alice and bob symbol arrays must be 1-D and equally long")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two >= 2")
        for arr in (self.alice, self.bob):
            if arr.size and (arr.min() < 0 or arr.max() >= self.N):
                raise ValueError("symbols must lie in [0, N)")

    def __len__(self) -> int:
        return len(self.alice)

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.N))

    @property
    def raw_bits(self) -> int:
        return len(self) * self.bits_per_symbol


def split_blocks(alice, bob, N: int, size: int = BLOCK_SYMBOLS) -> list[SiftedBlock]:
    """Cut sifted symbol streams into full blocks; a trailing partial block is dropped."""
    alice, bob = np.asarray(alice), np.asarray(bob)
    return [SiftedBlock(alice[i:i + size], bob[i:i + size], N)
            for i in range(0, len(alice) - size + 1, size)]


def reconcile_model(block: SiftedBlock, beta: float, I_AB: float) -> tuple[np.ndarray, int]:
    """Idealised error correction: Bob ends with Alice's symbols.

    Returns the corrected symbols and the leakage in whole bits,
    ``ceil(n (log2 N - beta I_AB))``.
    """
    if len(block) == 0:
        raise ValueError("cannot reconcile an empty block")
    if beta is None or not 0.0 < beta <= 1.0:
        raise ValueError("beta must lie in (0, 1]")
    k = block.bits_per_symbol
    if beta * I_AB > k + 1e-12:
        raise ValueError(f"beta*I_AB={beta * I_AB} exceeds log2 N={k}")
    leak = max(0.0, (k - beta * I_AB) * len(block))
    return block.alice.copy(), int(math.ceil(leak - 1e-9))


def symbols_to_bits(symbols, N: int) -> np.ndarray:
    """Big-endian binary expansion, ``log2 N`` bits per symbol."""
    k = int(math.log2(N))
    s = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(k - 1, -1, -1)
    return ((s[:, None] >> shifts) & 1).astype(np.uint8).ravel()


def toeplitz_hash(bits, seed_bits, m: int) -> np.ndarray:
    """Multiply ``bits`` (length n) by the m x n binary Toeplitz matrix over GF(2).

    ``seed_bits`` has length ``n + m - 1``: its first ``m`` entries form the first
    column (top to bottom) and the remaining ``n - 1`` the first row after the
    corner, so ``T[i, j] = seed[i - j]`` for ``i >= j`` and ``seed[m - 1 + j - i]``
    otherwise.
    """
    x = np.asarray(bits, dtype=np.uint8)
    s = np.asarray(seed_bits, dtype=np.uint8)
    n = len(x)
    if m < 0 or m > n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    if len(s) != n + m - 1:
        raise ValueError(f"seed must have n + m - 1 = {n + m - 1} bits, got {len(s)}")
    if m == 0:
        return np.zeros(0, dtype=np.uint8)
    # diagonal d = i - j runs from -(n-1) to m-1; lay the seed out by diagonal
    diag = np.concatenate([s[m:][::-1], s[:m]])  # index d + n - 1
    # y_i = sum_j diag[i - j + n - 1] x_j is a slice of the full convolution
    if n * m <= 1 << 22:
        conv = np.convolve(diag.astype(np.int64), x.astype(np.int64))
    else:
        conv = np.rint(fftconvolve(diag.astype(np.float64), x.astype(np.float64))).astype(np.int64)
    return (conv[n - 1:n - 1 + m] & 1).astype(np.uint8)


def privacy_amplify(n_bits: int, pie_bits_per_detection: float, detections: int,
                    delta_FK: float) -> int:
    """Final key length floor(detections * pie - delta_FK), clamped to [0, n_bits]."""
    if min(n_bits, detections, delta_FK) < 0 or pie_bits_per_detection < 0:
        raise ValueError("inputs must be nonnegative")
    m = math.floor(detections * pie_bits_per_detection - delta_FK)
    return int(min(max(m, 0), n_bits))


@dataclass
class BlockResult:
    raw_bits: int
    leakage: int
    pa_discard: int
    key_bits: int
    key: np.ndarray


def process_block(block: SiftedBlock, I_AB: float, chi_E: float, pa: PaParams,
                  rng: np.random.Generator, n_blocks: int = 1) -> BlockResult:
    """Reconcile and hash one block.

    The accounting ``key_bits + leakage + pa_discard == raw_bits`` holds exactly.
    """
    corrected, leak = reconcile_model(block, pa.beta, I_AB)
    raw = block.raw_bits
    pie_bits = max(0.0, pa.beta * I_AB - chi_E)
    m = privacy_amplify(raw, pie_bits, len(block), pa.finite_key_penalty(n_blocks))
    m = min(m, raw - leak)
    bits = symbols_to_bits(corrected, block.N)
    seed = rng.integers(0, 2, raw + m - 1, dtype=np.uint8) if m else np.zeros(max(raw - 1, 0), np.uint8)
    key = toeplitz_hash(bits, seed, m)
    return BlockResult(raw_bits=raw, leakage=leak, pa_discard=raw - leak - m, key_bits=m, key=key)


def block_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def process_blocks(blocks, I_AB: float, chi_E: float, pa: PaParams, seed: int) -> list[BlockResult]:
    """Blocks are independent; block ``i`` hashes with a seed derived from ``(seed, i)``."""
    n = len(blocks)
    return [process_block(b, I_AB, chi_E, pa, block_rng(seed, i), n) for i, b in enumerate(blocks)]


def write_key(path: str | os.PathLike, key_bits: np.ndarray, meta: dict) -> tuple[str, str]:
    """Write packed key bytes and a JSON sidecar ``<path>.json``.

    The sidecar records the bit length (the last byte is zero-padded), the SHA-256
    of the key file and whatever ``meta`` carries.
    """
    path = os.fspath(path)
    data = np.packbits(np.asarray(key_bits, dtype=np.uint8)).tobytes()
    with open(path, "wb") as fh:
        fh.write(data)
    side = {"format": "ppmqkd-key", "version": 1, "key_bits": int(len(key_bits)),
            "sha256": hashlib.sha256(data).hexdigest(), **meta}
    side_path = path + ".json"
    with open(side_path, "w") as fh:
        json.dump(side, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")
    return path, side_path


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")
