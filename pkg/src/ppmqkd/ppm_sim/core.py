"""Frame-level Monte Carlo of the PPM protocol.

Frames are processed in fixed-size chunks.  Every random draw for a chunk comes
from a generator keyed on ``(seed, stage, chunk index)``, so a run split over
any number of workers reproduces the single-process run bit for bit as long as
the split falls on chunk boundaries (``simulate`` guarantees that).
Afterpulse memory is reset at chunk boundaries for the same reason.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..channel_model import SourceParams
from ..decoy import DecoyConfig
from ..frame import DetectorModel, FrameConfig
from .kernels import resolve_clicks

CHUNK_FRAMES = 1 << 16

ASE, SPDC = 0, 1
PATH_KEY, PATH_FRANSON, NO_CLICK = 0, 1, -1

_STAGE_SOURCE, _STAGE_CHANNEL, _STAGE_DETECT = 1, 2, 3


def _rng(seed: int, stage: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stage, chunk))))


@dataclass
class FrameBatch:
    """Alice-side frames of one chunk, struct-of-arrays.

    ASE photons all sit in the occupied bin, so they are stored as a count per
    frame.  SPDC photons are stored flat as (frame, bin) pairs.  ``n_emitted``
    keeps the photon number at the source for the test-only oracle.
    """

    N: int
    start: int
    source: np.ndarray
    symbol: np.ndarray
    n_ase: np.ndarray
    n_emitted: np.ndarray
    spdc_frame: np.ndarray
    spdc_bin: np.ndarray

    def __len__(self) -> int:
        return len(self.source)

    @property
    def chunk(self) -> int:
        return self.start // CHUNK_FRAMES


@dataclass
class BobRecords:
    start: int
    click_bin: np.ndarray
    path: np.ndarray

    def __len__(self) -> int:
        return len(self.click_bin)


@dataclass(frozen=True)
class FrameRecord:
    frame_idx: int
    source: int
    symbol: int
    click_bin: int
    path: int


def _chunk_spans(start: int, count: int):
    pos, end = start, start + count
    while pos < end:
        nxt = min(end, (pos // CHUNK_FRAMES + 1) * CHUNK_FRAMES)
        yield pos, nxt - pos
        pos = nxt


def generate_batch(f: FrameConfig, s: SourceParams, seed: int, start: int, count: int) -> FrameBatch:
    if start % CHUNK_FRAMES:
        # a chunk's draws must not depend on where a caller started reading
        raise ValueError("batch start must be chunk-aligned")
    rng = _rng(seed, _STAGE_SOURCE, start // CHUNK_FRAMES)
    N = f.N
    source = np.where(rng.random(count) < s.p_os, ASE, SPDC).astype(np.uint8)
    is_ase = source == ASE
    symbol = np.where(is_ase, rng.integers(0, N, count), -1).astype(np.int16)
    n_ase = np.where(is_ase, rng.poisson(s.mu_ppm, count), 0).astype(np.int32)
    pairs = np.where(is_ase, 0, rng.poisson(s.nu_bin * N, count)).astype(np.int32)
    spdc_frame = np.repeat(np.arange(count, dtype=np.int32), pairs)
    spdc_bin = rng.integers(0, N, len(spdc_frame)).astype(np.int16)
    return FrameBatch(N=N, start=start, source=source, symbol=symbol, n_ase=n_ase,
                      n_emitted=n_ase + pairs, spdc_frame=spdc_frame, spdc_bin=spdc_bin)


def generate_frames(f: FrameConfig, s: SourceParams, seed: int, count: int, start: int = 0):
    """Yield ``FrameBatch`` chunks covering frames ``start .. start + count``.

    ``start`` must be a multiple of ``CHUNK_FRAMES``.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    for pos, n in _chunk_spans(start, count):
        yield generate_batch(f, s, seed, pos, n)


def transmit(batch: FrameBatch, eta: float, seed: int) -> FrameBatch:
    """Independent survival of each photon with probability ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError("eta must lie in [0, 1]")
    rng = _rng(seed, _STAGE_CHANNEL, batch.chunk)
    n_ase = rng.binomial(batch.n_ase, eta).astype(np.int32)
    keep = rng.random(len(batch.spdc_frame)) < eta
    return FrameBatch(N=batch.N, start=batch.start, source=batch.source, symbol=batch.symbol,
                      n_ase=n_ase, n_emitted=batch.n_emitted,
                      spdc_frame=batch.spdc_frame[keep], spdc_bin=batch.spdc_bin[keep])


def _first_dark(rng, p: float, n: int, N: int) -> np.ndarray:
    if p <= 0:
        return np.full(n, N, dtype=np.int64)
    g = rng.geometric(p, n) - 1
    return np.minimum(g, N)


def detect(batch: FrameBatch, d: DetectorModel, split: float, seed: int, tau: float,
           frame_rate: float | None = None, backend: str | None = None) -> BobRecords:
    """Passive routing, gated detection, dark counts, afterpulsing and the TDC cap.

    Returns one outcome per frame: the earliest click over both detectors
    (ties to the key detector) or no click.
    """
    if not 0.0 <= split <= 1.0:
        raise ValueError("split must lie in [0, 1]")
    rng = _rng(seed, _STAGE_DETECT, batch.chunk)
    n, N = len(batch), batch.N

    # ASE: pulse-aligned, thinning of a count stays binomial
    to_key = rng.binomial(batch.n_ase, split)
    det_key = rng.binomial(to_key, d.efficiency)
    det_fr = rng.binomial(batch.n_ase - to_key, d.efficiency)
    sym = batch.symbol.astype(np.int64)
    prompt_key = np.where(det_key > 0, sym, N)
    prompt_fr = np.where(det_fr > 0, sym, N)

    # SPDC: cw light, only the gated fraction of each bin is seen
    m = len(batch.spdc_frame)
    p_det = d.efficiency * d.gate_acceptance(tau)
    route_key = rng.random(m) < split
    seen = rng.random(m) < p_det
    for mask, prompt in ((route_key & seen, prompt_key), (~route_key & seen, prompt_fr)):
        np.minimum.at(prompt, batch.spdc_frame[mask], batch.spdc_bin[mask].astype(np.int64))

    prompt_key = np.minimum(prompt_key, _first_dark(rng, d.dark_prob_per_gate, n, N))
    prompt_fr = np.minimum(prompt_fr, _first_dark(rng, d.dark_prob_per_gate, n, N))

    if d.afterpulse_prob > 0:
        mean_delay = max(d.afterpulse_time / tau, 1.0)
        u_key, u_fr = rng.random(n), rng.random(n)
        delay_key = rng.geometric(1.0 / mean_delay, n)
        delay_fr = rng.geometric(1.0 / mean_delay, n)
    else:
        u_key = u_fr = np.ones(n)
        delay_key = delay_fr = np.ones(n, dtype=np.int64)
    click_bin, path = resolve_clicks(prompt_key, prompt_fr, u_key, u_fr, delay_key, delay_fr,
                                     N, d.afterpulse_prob, backend=backend)

    if math.isfinite(d.max_record_rate) and frame_rate is not None:
        allowed = int(math.floor(d.max_record_rate * n / frame_rate))
        clicked = np.flatnonzero(path != NO_CLICK)
        if len(clicked) > allowed:
            drop = rng.choice(clicked, len(clicked) - allowed, replace=False)
            click_bin[drop] = -1
            path[drop] = NO_CLICK
    return BobRecords(start=batch.start, click_bin=click_bin, path=path)


@dataclass
class EmpiricalStats:
    """Integer tallies; every rate is a derived property, so merging is a plain sum."""

    N: int
    F1: int
    F2: int
    n_frames: int = 0
    n_ase: int = 0
    n_spdc: int = 0
    n_sifted: int = 0
    n_noclick_ase: int = 0
    n_franson_ase: int = 0
    spdc_key_clicks: int = 0
    spdc_sub1_clicks: int = 0
    spdc_sub2_clicks: int = 0
    spdc_franson_clicks: int = 0
    spdc_franson_bin0: int = 0
    confusion: np.ndarray = field(default=None)
    ase_by_photons: np.ndarray = field(default=None)
    sifted_by_photons: np.ndarray = field(default=None)

    MAX_CLASS = 16

    def __post_init__(self):
        if self.confusion is None:
            self.confusion = np.zeros((self.N, self.N), dtype=np.int64)
        if self.ase_by_photons is None:
            self.ase_by_photons = np.zeros(self.MAX_CLASS, dtype=np.int64)
        if self.sifted_by_photons is None:
            self.sifted_by_photons = np.zeros(self.MAX_CLASS, dtype=np.int64)

    def merge(self, other: "EmpiricalStats") -> "EmpiricalStats":
        if (self.N, self.F1, self.F2) != (other.N, other.F1, other.F2):
            raise ValueError("cannot merge statistics of different frame layouts")
        out = EmpiricalStats(self.N, self.F1, self.F2)
        for name in ("n_frames", "n_ase", "n_spdc", "n_sifted", "n_noclick_ase", "n_franson_ase",
                     "spdc_key_clicks", "spdc_sub1_clicks", "spdc_sub2_clicks",
                     "spdc_franson_clicks", "spdc_franson_bin0"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.confusion = self.confusion + other.confusion
        out.ase_by_photons = self.ase_by_photons + other.ase_by_photons
        out.sifted_by_photons = self.sifted_by_photons + other.sifted_by_photons
        return out

    @staticmethod
    def _ratio(a, b):
        return a / b if b else 0.0

    @property
    def Q_mu_hat(self) -> float:
        return self._ratio(self.n_sifted, self.n_ase)

    @property
    def Q_nu_hat(self) -> float:
        return self._ratio(self.spdc_key_clicks, self.n_spdc)

    @property
    def Q_nu1_hat(self) -> float:
        return self._ratio(self.spdc_sub1_clicks, self.n_spdc)

    @property
    def Q_nu2_hat(self) -> float:
        return self._ratio(self.spdc_sub2_clicks, self.n_spdc)

    @property
    def symbol_error_rate(self) -> float:
        total = int(self.confusion.sum())
        return self._ratio(total - int(np.trace(self.confusion)), total)

    @property
    def q1_hat(self) -> float:
        """Oracle: joint probability of a single-photon ASE frame and a sifted click."""
        return self._ratio(int(self.sifted_by_photons[1]), self.n_ase)

    def car_proxy(self, dark_prob_per_gate: float) -> float:
        """Franson-path SPDC click probability per scored gate over the dark probability."""
        scored = self.n_spdc * max(self.N - 1, 1)
        per_gate = self._ratio(self.spdc_franson_clicks - self.spdc_franson_bin0, scored)
        return per_gate / dark_prob_per_gate if dark_prob_per_gate > 0 else math.inf


def sift(batch: FrameBatch, rec: BobRecords, decoy: DecoyConfig | None = None):
    """Pair Alice's ASE symbols with key-path clicks and tally the SPDC decoy gains.

    Returns ``(sent, received, stats)`` for the sifted frames.
    """
    if batch.start != rec.start or len(batch) != len(rec):
        raise ValueError(f"frame index misalignment: Alice [{batch.start}, +{len(batch)}) "
                         f"vs Bob [{rec.start}, +{len(rec)})")
    N = batch.N
    F1, F2 = (decoy.F1_bins, decoy.F2_bins) if decoy is not None else (max(N // 2, 2), max(N // 4, 1))
    st = EmpiricalStats(N, F1, F2)
    is_ase = batch.source == ASE
    key = rec.path == PATH_KEY
    fr = rec.path == PATH_FRANSON
    sifted = is_ase & key

    st.n_frames = len(batch)
    st.n_ase = int(is_ase.sum())
    st.n_spdc = st.n_frames - st.n_ase
    st.n_sifted = int(sifted.sum())
    st.n_franson_ase = int((is_ase & fr).sum())
    st.n_noclick_ase = st.n_ase - st.n_sifted - st.n_franson_ase

    sent = batch.symbol[sifted].astype(np.int64)
    received = rec.click_bin[sifted].astype(np.int64)
    st.confusion = np.bincount(sent * N + received, minlength=N * N).reshape(N, N)

    spdc_key = ~is_ase & key
    b = rec.click_bin[spdc_key]
    st.spdc_key_clicks = int(spdc_key.sum())
    st.spdc_sub1_clicks = int((b < F1).sum())
    st.spdc_sub2_clicks = int((b < F2).sum())
    spdc_fr = ~is_ase & fr
    st.spdc_franson_clicks = int(spdc_fr.sum())
    st.spdc_franson_bin0 = int((spdc_fr & (rec.click_bin == 0)).sum())

    cls = np.minimum(batch.n_emitted, st.MAX_CLASS - 1)
    st.ase_by_photons = np.bincount(cls[is_ase], minlength=st.MAX_CLASS)
    st.sifted_by_photons = np.bincount(cls[sifted], minlength=st.MAX_CLASS)
    return sent, received, st


def frame_records(batch: FrameBatch, rec: BobRecords):
    for i in range(len(batch)):
        yield FrameRecord(batch.start + i, int(batch.source[i]), int(batch.symbol[i]),
                          int(rec.click_bin[i]), int(rec.path[i]))


def visibility_from_car(v_intrinsic: float, car: float) -> float:
    """Accidentals add a flat background to the fringe: V = v (car - 1) / (car + 1)."""
    if math.isinf(car):
        return v_intrinsic
    if car <= 1:
        return 0.0
    return v_intrinsic * (car - 1.0) / (car + 1.0)


def estimate_car(f: FrameConfig, s: SourceParams, eta: float, d: DetectorModel,
                 eta_alice: float | None = None) -> float:
    """Per-gate coincidence-to-accidental ratio of the SPDC pairs.

    True coincidences need both photons of one pair; the twins arrive within
    the correlation time, so the gate acceptance enters once.  Accidentals are
    the product of the two singles probabilities within the gate.  Alice's idler
    arm sees no channel loss (``eta_alice`` defaults to the detector efficiency).
    """
    acc = d.gate_acceptance(f.tau)
    pa = d.efficiency if eta_alice is None else eta_alice
    sig_a = s.nu_bin * pa * acc
    sig_b = s.nu_bin * eta * acc
    true = s.nu_bin * acc * pa * eta
    accidental = (sig_a + d.dark_prob_per_gate) * (sig_b + d.dark_prob_per_gate)
    if accidental <= 0:
        return math.inf
    return true / accidental
