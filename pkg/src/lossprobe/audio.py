"""Waveform-domain perturbation support.

White-noise generation, RMS loudness measurement and matching, and
sample-level splicing. Amplitudes are real-valued with a nominal
[-1, 1] full scale; loudness is plain RMS in dB relative to full scale
1.0 (no perceptual weighting).

The dB offsets used for noise matching are interpreted as RELATIVE to
the reference signal's RMS, not as absolute dBFS. An offset of -20 dB
means the scaled noise sits 20 dB below the reference, whatever the
reference's absolute level is.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ValidationError

DEFAULT_SAMPLE_RATE = 32000

# offsets outside this range warn (or fail in strict mode)
OFFSET_DB_RANGE = (-30.0, -12.0)


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Immutable mono signal: float64 samples plus a sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("bad-shape", f"samples must be 1-D, got shape {arr.shape}")
        if not int(self.sample_rate_hz) > 0:
            raise ValidationError("bad-rate", f"sample_rate_hz must be > 0, got {self.sample_rate_hz}")
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValidationError("non-finite-sample", "samples must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class LoudnessSpec:
    """Target noise level as a dB offset below/above the reference RMS."""

    offset_db: float
    strict: bool = False

    def __post_init__(self):
        if not np.isfinite(self.offset_db):
            raise ValidationError("bad-offset", f"offset_db must be finite, got {self.offset_db}")


def rms_db(signal: AudioSignal) -> float:
    """20*log10 of the RMS amplitude relative to full scale 1.0."""
    if len(signal) == 0:
        raise ValidationError("empty-signal", "cannot measure loudness of an empty signal")
    mean_sq = float(np.mean(np.square(signal.samples)))
    if mean_sq == 0.0:
        raise ValidationError("silent-signal", "all-zero signal has no finite dB level")
    return float(10.0 * np.log10(mean_sq))


def white_noise(n_samples: int, seed: int, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> AudioSignal:
    """I.i.d. standard Gaussian samples; deterministic given the seed."""
    if n_samples < 1:
        raise ValidationError("bad-length", f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    return AudioSignal(rng.standard_normal(n_samples), sample_rate_hz)


def match_loudness(noise: AudioSignal, reference: AudioSignal, spec: LoudnessSpec) -> AudioSignal:
    """Scale ``noise`` by one gain so its RMS sits offset_db from the reference's.

    Output samples are NOT clipped; if any exceed the nominal [-1, 1] full
    scale a warning reports the excursion so the caller can decide. In
    strict mode an offset outside the expected [-30, -12] range is an
    error; otherwise it only warns.
    """
    lo, hi = OFFSET_DB_RANGE
    if not lo <= spec.offset_db <= hi:
        msg = f"offset_db {spec.offset_db:+.2f} outside expected range [{lo:g}, {hi:g}]"
        if spec.strict:
            raise ValidationError("offset-out-of-range", msg)
        warnings.warn(msg, stacklevel=2)
    ref_db = rms_db(reference)  # raises on silent/empty reference
    noise_db = rms_db(noise)
    gain = 10.0 ** ((ref_db + spec.offset_db - noise_db) / 20.0)
    scaled = noise.samples * gain
    peak = float(np.max(np.abs(scaled))) if scaled.size else 0.0
    if peak > 1.0:
        warnings.warn(f"scaled noise peaks at {peak:.3f}, beyond full scale 1.0", stacklevel=2)
    return AudioSignal(scaled, noise.sample_rate_hz)


def splice(audio: AudioSignal, start_sample: int, noise: AudioSignal) -> AudioSignal:
    """Replace samples [start, start+len(noise)) of ``audio`` with ``noise``."""
    if audio.sample_rate_hz != noise.sample_rate_hz:
        raise ValidationError(
            "rate-mismatch",
            f"sample rates differ: {audio.sample_rate_hz} vs {noise.sample_rate_hz}",
        )
    if start_sample < 0 or start_sample + len(noise) > len(audio):
        raise ValidationError(
            "window-out-of-bounds",
            f"splice [{start_sample}, {start_sample + len(noise)}) exceeds signal length {len(audio)}",
        )
    out = audio.samples.copy()
    out[start_sample : start_sample + len(noise)] = noise.samples
    return AudioSignal(out, audio.sample_rate_hz)


def tokens_to_seconds(n_tokens: int, frame_rate_hz: float) -> float:
    if not frame_rate_hz > 0:
        raise ValidationError("bad-rate", f"frame_rate_hz must be > 0, got {frame_rate_hz}")
    return n_tokens / frame_rate_hz


def write_wav(path: str | Path, signal: AudioSignal, bits: int = 16) -> None:
    """Mono WAV, 16-bit PCM (samples clipped to full scale) or 32-bit float."""
    from scipy.io import wavfile

    if bits == 16:
        clipped = np.clip(signal.samples, -1.0, 1.0)
        data = np.round(clipped * 32767.0).astype(np.int16)
    elif bits == 32:
        data = signal.samples.astype(np.float32)
    else:
        raise ValidationError("bad-bits", f"supported bit depths are 16 and 32, got {bits}")
    wavfile.write(str(path), signal.sample_rate_hz, data)


def read_wav(path: str | Path, expect_rate_hz: int | None = None) -> AudioSignal:
    """Read a mono WAV; integer PCM is rescaled to [-1, 1]. No resampling."""
    from scipy.io import wavfile

    rate, data = wavfile.read(str(path))
    if data.ndim != 1:
        raise ValidationError("bad-shape", f"expected mono WAV, got shape {data.shape}")
    if expect_rate_hz is not None and rate != expect_rate_hz:
        raise ValidationError("rate-mismatch", f"expected {expect_rate_hz} Hz, file is {rate} Hz")
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32767.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483647.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise ValidationError("bad-dtype", f"unsupported WAV sample type {data.dtype}")
    return AudioSignal(samples, int(rate))


def write_raw_f32(path: str | Path, signal: AudioSignal) -> None:
    """Raw little-endian float32 samples plus a JSON sidecar with the rate."""
    path = Path(path)
    signal.samples.astype("<f4").tofile(path)
    sidecar = {"sample_rate_hz": signal.sample_rate_hz, "n_samples": len(signal), "format": "f32le"}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, sort_keys=True) + "\n")


def read_raw_f32(path: str | Path) -> AudioSignal:
    path = Path(path)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    if not sidecar_path.exists():
        raise ValidationError("missing-sidecar", f"no JSON sidecar at {sidecar_path}")
    sidecar = json.loads(sidecar_path.read_text())
    samples = np.fromfile(path, dtype="<f4").astype(np.float64)
    if "n_samples" in sidecar and int(sidecar["n_samples"]) != samples.size:
        raise ValidationError(
            "length-mismatch",
            f"sidecar declares {sidecar['n_samples']} samples, file holds {samples.size}",
        )
    return AudioSignal(samples, int(sidecar["sample_rate_hz"]))
