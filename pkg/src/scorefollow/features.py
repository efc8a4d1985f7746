"""Audio feature pipeline shared by the reference and the live stream.

The pipeline turns mono PCM into one 20-dimensional MFCC frame per 10 ms
(high-rate, "HR") and derives a 300 ms-rate variant ("LR") by convolving
the HR frames with a normalized Hann window. Extraction is streaming:
frames come out as soon as their analysis window is filled, and feeding
the same samples in any chunking yields bit-identical frames.

Conventions fixed here so frame indices map exactly to time:

* analysis windows are centered on the 10 ms grid, edges reflect-padded,
  so a signal of duration ``d`` yields ``ceil(d / 0.010)`` frames;
* input is resampled internally to 22,050 Hz before framing;
* mel powers are floored at 1e-10 before the log, and coefficient 0 is
  replaced by the frame log energy, so silence maps to a finite constant
  vector;
* LR window weights sum to one, keeping LR features on the HR scale so a
  single cosine distance serves both trackers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

log = logging.getLogger(__name__)

HR_HOP_S = 0.010
HR_WINDOW_S = 0.020
LR_HOP_S = 0.300
LR_WINDOW_S = 0.600
LR_HOP_FRAMES = 30
LR_WINDOW_FRAMES = 60

INTERNAL_RATE = 22050
MIN_SAMPLE_RATE = 8000
NORM_FLOOR = 1e-12

#: Stand-in for "no path reaches this cell". Large enough to dominate any
#: real accumulated cost, small enough that additions never overflow.
COST_SENTINEL = float(np.finfo(np.float64).max / 4.0)


class FeatureFileError(ValueError):
    """A feature cache file or audio file could not be read or written."""


@dataclass(frozen=True)
class MfccConfig:
    """Knobs of the MFCC pipeline. Defaults are the values used throughout."""

    n_coeffs: int = 20
    n_mels: int = 40
    internal_rate: int = INTERNAL_RATE
    fft_size: int = 512
    fmin_hz: float = 0.0
    fmax_hz: float | None = None  # defaults to internal_rate / 2
    power_floor: float = 1e-10


@dataclass(frozen=True)
class FeatureSequence:
    """Time-ordered feature frames with fixed dimension and frame rate.

    ``data`` is a frames x dims float32 matrix, read-only after
    construction so sequences can be shared freely between workers.
    """

    data: np.ndarray
    hop_s: float
    window_s: float
    sample_rate_hz: int
    resolution: str  # "HR" or "LR"

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] <= 0:
            raise ValueError(f"feature data must be frames x dims, got shape {arr.shape}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("feature data contains non-finite values")
        if self.resolution == "HR":
            expect = (HR_HOP_S, HR_WINDOW_S)
        elif self.resolution == "LR":
            expect = (LR_HOP_S, LR_WINDOW_S)
        else:
            raise ValueError(f"unknown resolution {self.resolution!r}")
        if (self.hop_s, self.window_s) != expect:
            raise ValueError(
                f"{self.resolution} sequences must have hop/window {expect}, "
                f"got ({self.hop_s}, {self.window_s})"
            )
        view = arr.view()
        view.setflags(write=False)
        object.__setattr__(self, "data", view)

    @property
    def frame_count(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> int:
        return self.data.shape[1]


def reflect_indices(indices, length: int):
    """Fold out-of-range indices back into ``[0, length)`` by edge reflection."""
    indices = np.asarray(indices)
    if length <= 1:
        return np.zeros_like(indices)
    period = 2 * (length - 1)
    m = np.mod(indices, period)
    return np.where(m >= length, period - m, m)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int, fft_size: int, rate: int, fmin: float, fmax: float):
    """Triangular mel filterbank (unit peak) over the rfft bin frequencies."""
    pts = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    bin_freqs = np.arange(fft_size // 2 + 1) * (rate / fft_size)
    bank = np.zeros((n_mels, bin_freqs.size))
    for i in range(n_mels):
        left, center, right = pts[i], pts[i + 1], pts[i + 2]
        up = (bin_freqs - left) / max(center - left, 1e-9)
        down = (right - bin_freqs) / max(right - center, 1e-9)
        bank[i] = np.clip(np.minimum(up, down), 0.0, 1.0)
    return bank


def dct_matrix(n_out: int, n_in: int):
    """Orthonormal type-II DCT matrix (n_out x n_in)."""
    n = np.arange(n_in)
    k = np.arange(n_out)[:, None]
    mat = np.cos(np.pi * k * (2 * n[None, :] + 1) / (2 * n_in))
    mat *= np.sqrt(2.0 / n_in)
    mat[0] *= np.sqrt(0.5)
    return mat


class _SincResampler:
    """Streaming windowed-sinc rate converter.

    Output sample ``k`` sits at input position ``k * in_rate / out_rate``
    and is a dot product with a Hann-windowed sinc kernel over a fixed
    input neighborhood; samples outside the stream count as zero. Because
    every output depends on the same input window regardless of chunking,
    streaming output is bit-identical to one-shot conversion.
    """

    TAPS = 24  # one-sided kernel support in input samples

    def __init__(self, in_rate: int, out_rate: int):
        self.in_rate = int(in_rate)
        self.out_rate = int(out_rate)
        self.step = self.in_rate / self.out_rate
        self.cutoff = min(1.0, self.out_rate / self.in_rate)
        self._buf = np.zeros(0, dtype=np.float64)
        self._off = 0  # absolute input index of _buf[0]
        self._n_in = 0
        self._next_out = 0

    def feed(self, samples) -> np.ndarray:
        x = np.asarray(samples, dtype=np.float64).ravel()
        self._buf = np.concatenate([self._buf, x])
        self._n_in += x.size
        # emit every output whose right kernel edge is already available
        k_cap = int((self._n_in - self.TAPS) / self.step) + 2
        return self._emit(k_cap, bounded=True)

    def finalize(self) -> np.ndarray:
        total = -(-self._n_in * self.out_rate // self.in_rate)  # ceil
        return self._emit(int(total), bounded=False)

    def _emit(self, k_end: int, bounded: bool) -> np.ndarray:
        ks = np.arange(self._next_out, max(self._next_out, k_end))
        if ks.size == 0:
            return np.zeros(0, dtype=np.float64)
        pos = ks * self.step
        base = np.floor(pos).astype(np.int64)
        if bounded:
            ok = base + self.TAPS <= self._n_in - 1
            ks, pos, base = ks[ok], pos[ok], base[ok]
            if ks.size == 0:
                return np.zeros(0, dtype=np.float64)
        idx = base[:, None] + np.arange(1 - self.TAPS, self.TAPS + 1)[None, :]
        valid = (idx >= 0) & (idx < self._n_in)
        vals = np.where(valid, self._buf[np.clip(idx - self._off, 0, self._buf.size - 1)], 0.0)
        x = pos[:, None] - idx
        u = x / self.TAPS
        window = np.where(np.abs(u) < 1.0, 0.5 + 0.5 * np.cos(np.pi * u), 0.0)
        kernel = self.cutoff * np.sinc(self.cutoff * x) * window
        out = np.einsum("kt,kt->k", vals, kernel)
        self._next_out = int(ks[-1]) + 1
        keep_from = max(0, int(np.floor(self._next_out * self.step)) - self.TAPS)
        if keep_from - self._off > 1 << 16:
            self._buf = self._buf[keep_from - self._off:]
            self._off = keep_from
        return out


class MfccExtractor:
    """Streaming MFCC extraction, one frame per 10 ms of input.

    ``feed`` returns the frames whose analysis window is complete;
    ``finalize`` flushes the remaining frames using reflected samples at
    the stream end. Frames containing non-finite samples are dropped with
    a logged diagnostic and counted in ``rejected_frames``.
    """

    def __init__(self, sample_rate: int, config: MfccConfig | None = None):
        if sample_rate < MIN_SAMPLE_RATE:
            raise ValueError(
                f"sample rate {sample_rate} Hz unsupported (minimum {MIN_SAMPLE_RATE} Hz)"
            )
        self.config = config or MfccConfig()
        cfg = self.config
        self.input_rate = int(sample_rate)
        self._rate = cfg.internal_rate
        self._resampler = (
            _SincResampler(self.input_rate, self._rate) if self.input_rate != self._rate else None
        )
        self._win_len = int(round(HR_WINDOW_S * self._rate))
        self._half = self._win_len // 2
        self._window = np.hanning(self._win_len)
        fmax = cfg.fmax_hz if cfg.fmax_hz is not None else self._rate / 2
        self._filters = mel_filterbank(cfg.n_mels, cfg.fft_size, self._rate, cfg.fmin_hz, fmax)
        self._dct = dct_matrix(cfg.n_coeffs, cfg.n_mels)
        self._buf = np.zeros(0, dtype=np.float64)
        self._off = 0
        self._n = 0
        self._next_frame = 0
        self._finalized = False
        self.rejected_frames = 0

    def _center(self, t: int) -> int:
        # exact 10 ms grid: floor(t * rate / 100) keeps integer arithmetic
        return (t * self._rate) // 100

    def feed(self, samples) -> list[np.ndarray]:
        if self._finalized:
            raise RuntimeError("feed() after finalize()")
        x = np.asarray(samples, dtype=np.float64).ravel()
        if self._resampler is not None:
            x = self._resampler.feed(x)
        self._append(x)
        out = []
        while self._center(self._next_frame) + self._half <= self._n - 1:
            frame = self._frame_at(self._next_frame)
            self._next_frame += 1
            if frame is not None:
                out.append(frame)
        return out

    def finalize(self) -> list[np.ndarray]:
        if self._finalized:
            return []
        if self._resampler is not None:
            self._append(self._resampler.finalize())
        self._finalized = True
        total = (self._n * 100 + self._rate - 1) // self._rate
        out = []
        while self._next_frame < total:
            frame = self._frame_at(self._next_frame)
            self._next_frame += 1
            if frame is not None:
                out.append(frame)
        return out

    def _append(self, x: np.ndarray):
        if x.size:
            self._buf = np.concatenate([self._buf, x])
            self._n += x.size
        keep_from = max(0, self._center(self._next_frame) - self._half)
        if keep_from - self._off > 1 << 16:
            self._buf = self._buf[keep_from - self._off:]
            self._off = keep_from

    def _frame_at(self, t: int) -> np.ndarray | None:
        idx = self._center(t) + np.arange(-self._half, self._half + 1)
        idx = reflect_indices(idx, max(self._n, 1))
        x = self._buf[idx - self._off]
        if not np.all(np.isfinite(x)):
            self.rejected_frames += 1
            log.warning("frame %d rejected: non-finite samples in analysis window", t)
            return None
        cfg = self.config
        w = x * self._window
        energy = float(np.mean(w * w))
        spectrum = np.fft.rfft(w, cfg.fft_size)
        power = spectrum.real**2 + spectrum.imag**2
        mel = self._filters @ power
        logmel = np.log(np.maximum(mel, cfg.power_floor))
        coeffs = self._dct @ logmel
        coeffs[0] = np.log(max(energy, cfg.power_floor))
        return coeffs.astype(np.float32)


def extract_mfcc(samples, sample_rate: int, config: MfccConfig | None = None) -> FeatureSequence:
    """One-shot HR feature extraction over a complete PCM buffer."""
    extractor = MfccExtractor(sample_rate, config)
    frames = extractor.feed(samples)
    frames += extractor.finalize()
    n_coeffs = extractor.config.n_coeffs
    data = np.vstack(frames) if frames else np.zeros((0, n_coeffs), dtype=np.float32)
    return FeatureSequence(data, HR_HOP_S, HR_WINDOW_S, int(sample_rate), "HR")


def lr_frame_count(hr_frames: int) -> int:
    """Number of LR frames derived from ``hr_frames`` HR frames."""
    if hr_frames <= 0:
        return 0
    return (hr_frames + LR_HOP_FRAMES - 1) // LR_HOP_FRAMES


def lr_window_weights() -> np.ndarray:
    w = np.hanning(LR_WINDOW_FRAMES)
    return w / w.sum()


def downsample_lr(hr: FeatureSequence) -> FeatureSequence:
    """Derive the 300 ms-rate sequence: Hann-weighted mean of 60 HR frames
    around every 30th HR frame, edges reflected."""
    if hr.resolution != "HR":
        raise ValueError("downsample_lr expects an HR sequence")
    m = hr.frame_count
    n_out = lr_frame_count(m)
    if n_out == 0:
        return FeatureSequence(
            np.zeros((0, hr.dims), dtype=np.float32), LR_HOP_S, LR_WINDOW_S, hr.sample_rate_hz, "LR"
        )
    weights = lr_window_weights()
    offsets = np.arange(LR_WINDOW_FRAMES) - LR_WINDOW_FRAMES // 2
    src = hr.data.astype(np.float64)
    out = np.empty((n_out, hr.dims), dtype=np.float64)
    block = 4096
    for lo in range(0, n_out, block):
        hi = min(lo + block, n_out)
        centers = np.arange(lo, hi) * LR_HOP_FRAMES
        idx = reflect_indices(centers[:, None] + offsets[None, :], m)
        out[lo:hi] = np.einsum("w,bwd->bd", weights, src[idx])
    return FeatureSequence(out.astype(np.float32), LR_HOP_S, LR_WINDOW_S, hr.sample_rate_hz, "LR")


def cosine_distance(a, b) -> float:
    """1 - cos(a, b), in [0, 2]; 1.0 when either vector is near zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na < NORM_FLOOR or nb < NORM_FLOOR:
        return 1.0
    return float(np.clip(1.0 - float(a @ b) / (na * nb), 0.0, 2.0))


def precompute_norms(frames: np.ndarray) -> np.ndarray:
    return np.linalg.norm(frames, axis=1)


def distance_profile(frames: np.ndarray, norms: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cosine distance of ``y`` against every row of ``frames`` (vectorized)."""
    ny = float(np.linalg.norm(y))
    if ny < NORM_FLOOR:
        return np.ones(frames.shape[0], dtype=np.float64)
    d = 1.0 - (frames @ y) / (norms * ny + (norms < NORM_FLOOR))
    d[norms < NORM_FLOOR] = 1.0
    return np.clip(d, 0.0, 2.0)


# ---------------------------------------------------------------------------
# file formats

_HEADER_SUFFIX = ".hdr"


def save_features(path, fs: FeatureSequence) -> None:
    """Write little-endian float32 rows plus a key=value header sidecar."""
    path = Path(path)
    fs.data.astype("<f4").tofile(path)
    header = path.with_name(path.name + _HEADER_SUFFIX)
    lines = [
        f"dims={fs.dims}",
        f"hop_s={fs.hop_s}",
        f"window_s={fs.window_s}",
        f"sample_rate_hz={fs.sample_rate_hz}",
        f"resolution={fs.resolution}",
        f"frame_count={fs.frame_count}",
    ]
    header.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_features(path) -> FeatureSequence:
    path = Path(path)
    header = path.with_name(path.name + _HEADER_SUFFIX)
    if not path.exists():
        raise FeatureFileError(f"feature file not found: {path}")
    if not header.exists():
        raise FeatureFileError(f"feature header not found: {header}")
    fields = {}
    for lineno, line in enumerate(header.read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if "=" not in line:
            raise FeatureFileError(f"{header}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    try:
        dims = int(fields["dims"])
        hop_s = float(fields["hop_s"])
        window_s = float(fields["window_s"])
        rate = int(fields["sample_rate_hz"])
        resolution = fields["resolution"]
        frame_count = int(fields["frame_count"])
    except KeyError as exc:
        raise FeatureFileError(f"{header}: missing field {exc}") from exc
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != dims * frame_count:
        raise FeatureFileError(
            f"{path}: expected {dims * frame_count} values ({frame_count} x {dims}), found {raw.size}"
        )
    data = raw.reshape(frame_count, dims)
    try:
        return FeatureSequence(data, hop_s, window_s, rate, resolution)
    except ValueError as exc:
        raise FeatureFileError(f"{path}: {exc}") from exc


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a 16-bit or float WAV as mono float64 in [-1, 1]."""
    path = Path(path)
    if not path.exists():
        raise FeatureFileError(f"audio file not found: {path}")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise FeatureFileError(f"{path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data / 32768.0
    elif data.dtype == np.int32:
        x = data / 2147483648.0
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif data.dtype in (np.float32, np.float64):
        x = data.astype(np.float64)
    else:
        raise FeatureFileError(f"{path}: unsupported sample format {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return np.asarray(x, dtype=np.float64), int(rate)
