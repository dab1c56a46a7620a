"""Multichannel framing, DFT analysis, energy VAD and fractional delay.

The analysis pipeline is: frame the signal into fixed windows, apply a
window function and a real DFT per channel, select the scored frequency
band, and gate frames with an energy threshold relative to the median
frame energy of the utterance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io.wavfile
import scipy.signal

DEFAULT_BAND_HZ = (500.0, 8000.0)
DEFAULT_VAD_THRESHOLD = 0.5
FRACTIONAL_DELAY_TAPS = 81
_MAG_EPS = 1e-12


@dataclass(frozen=True)
class MultichannelAudio:
    """Channel-major sample matrix, shape (M, N)."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ValueError("samples must be a 2-D (channels, samples) array")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", s)

    @property
    def num_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def num_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.num_samples / self.sample_rate_hz


@dataclass
class FrameSpectra:
    """One analysis frame in the frequency domain.

    coefficients holds the one-sided DFT per channel, shape (M, nfft//2+1).
    band_bins marks the contiguous scored bin range; vad_active is set by
    the energy gate.
    """

    coefficients: np.ndarray
    frame_start: int
    window_ms: float
    sample_rate_hz: int
    nfft: int
    band_bins: range | None = None
    vad_active: bool = True

    @property
    def num_channels(self) -> int:
        return self.coefficients.shape[0]

    def bin_freqs(self, bins=None) -> np.ndarray:
        """Center frequency in Hz of the given bins (default: band bins)."""
        if bins is None:
            bins = self.band_bins
            if bins is None:
                bins = range(self.coefficients.shape[1])
        return np.asarray(bins, dtype=float) * self.sample_rate_hz / self.nfft


def frame_signal(
    audio: MultichannelAudio, window_ms: float, hop_ms: float | None = None
) -> np.ndarray:
    """Cut the signal into frames of window_ms every hop_ms.

    Returns an array of shape (num_frames, M, window_samples).  Frame k
    covers samples [k*hop, k*hop + window); a trailing partial frame is
    dropped.  Raises if the window is longer than the signal or the hop
    exceeds the window.
    """
    if hop_ms is None:
        hop_ms = window_ms
    fs = audio.sample_rate_hz
    win = int(round(window_ms * fs / 1000.0))
    hop = int(round(hop_ms * fs / 1000.0))
    if win <= 0 or hop <= 0:
        raise ValueError("window and hop must be positive")
    if hop > win:
        raise ValueError("hop must not exceed the window")
    n = audio.num_samples
    if win > n:
        raise ValueError(f"window of {win} samples exceeds signal length {n}")
    num_frames = (n - win) // hop + 1
    frames = np.empty((num_frames, audio.num_channels, win), dtype=float)
    for k in range(num_frames):
        frames[k] = audio.samples[:, k * hop : k * hop + win]
    return frames


def _window_values(window, length: int) -> np.ndarray:
    if callable(window):
        return np.asarray(window(length), dtype=float)
    if window in (None, "rect", "rectangular", "boxcar"):
        return np.ones(length)
    return scipy.signal.get_window(window, length, fftbins=True)


def dft_frames(
    frames: np.ndarray,
    sample_rate_hz: int,
    hop_samples: int | None = None,
    window: str | None = "hann",
) -> list[FrameSpectra]:
    """Windowed one-sided DFT of each frame, zero-padded to a power of two.

    frames has shape (K, M, W); the DFT length is the next power of two at
    or above W.  The window is applied per channel before the transform.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 3:
        raise ValueError("frames must have shape (num_frames, channels, width)")
    num_frames, _, width = frames.shape
    if hop_samples is None:
        hop_samples = width
    nfft = 1 << (width - 1).bit_length()
    w = _window_values(window, width)
    coeffs = np.fft.rfft(frames * w[None, None, :], n=nfft, axis=2)
    window_ms = 1000.0 * width / sample_rate_hz
    return [
        FrameSpectra(
            coefficients=coeffs[k],
            frame_start=k * hop_samples,
            window_ms=window_ms,
            sample_rate_hz=sample_rate_hz,
            nfft=nfft,
        )
        for k in range(num_frames)
    ]


def band_bin_range(
    nfft: int, sample_rate_hz: int, f_lo: float, f_hi: float
) -> range:
    """Smallest contiguous bin range whose center frequencies span [f_lo, f_hi]."""
    nyquist = sample_rate_hz / 2.0
    if not 0.0 <= f_lo < f_hi <= nyquist:
        raise ValueError(
            f"band [{f_lo}, {f_hi}] must satisfy 0 <= f_lo < f_hi <= {nyquist}"
        )
    lo = int(np.floor(f_lo * nfft / sample_rate_hz))
    hi = int(np.ceil(f_hi * nfft / sample_rate_hz))
    hi = min(hi, nfft // 2)
    return range(lo, hi + 1)


def select_band(
    spectra: FrameSpectra | list[FrameSpectra], f_lo: float, f_hi: float
) -> range:
    """Attach the scored band to the frame(s) and return the bin range."""
    frames = [spectra] if isinstance(spectra, FrameSpectra) else list(spectra)
    if not frames:
        raise ValueError("no frames to select a band on")
    bins = band_bin_range(frames[0].nfft, frames[0].sample_rate_hz, f_lo, f_hi)
    for fr in frames:
        fr.band_bins = bins
    return bins


def frame_energies(frames: np.ndarray) -> np.ndarray:
    """Mean-square energy per frame, averaged over channels and samples."""
    frames = np.asarray(frames, dtype=float)
    return np.mean(frames**2, axis=(1, 2))


def vad_energy(
    frame: np.ndarray, threshold_ratio: float, reference_energy: float
) -> bool:
    """Energy gate for one frame against a reference (median) frame energy.

    True iff the frame mean-square energy is at least threshold_ratio times
    the reference.  Zero-energy frames are always inactive.
    """
    if threshold_ratio < 0:
        raise ValueError("threshold_ratio must be non-negative")
    energy = float(np.mean(np.asarray(frame, dtype=float) ** 2))
    if energy == 0.0:
        return False
    return energy >= threshold_ratio * reference_energy


def vad_flags(
    frames: np.ndarray, threshold_ratio: float = DEFAULT_VAD_THRESHOLD
) -> np.ndarray:
    """Per-frame activity flags relative to the utterance median frame energy."""
    if threshold_ratio < 0:
        raise ValueError("threshold_ratio must be non-negative")
    energies = frame_energies(frames)
    median = float(np.median(energies))
    return (energies > 0) & (energies >= threshold_ratio * median)


def apply_vad(
    spectra: list[FrameSpectra],
    frames: np.ndarray,
    threshold_ratio: float = DEFAULT_VAD_THRESHOLD,
) -> np.ndarray:
    """Set vad_active on each FrameSpectra from the time-domain frames."""
    flags = vad_flags(frames, threshold_ratio)
    if len(flags) != len(spectra):
        raise ValueError("frames and spectra disagree on frame count")
    for fr, flag in zip(spectra, flags):
        fr.vad_active = bool(flag)
    return flags


def fractional_delay(
    signal: np.ndarray, delay_samples: float, num_taps: int = FRACTIONAL_DELAY_TAPS
) -> np.ndarray:
    """Delay a single channel by a possibly fractional number of samples.

    The integer part is an exact index shift; the fractional part is a
    Hann-windowed sinc interpolation filter of num_taps taps.  The output
    has the input length, zero-filled where the shift runs off the ends.
    Accurate to better than -60 dB for signals band-limited to about
    0.9x Nyquist; accuracy degrades right at Nyquist.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1:
        raise ValueError("fractional_delay expects a single channel")
    if num_taps % 2 == 0 or num_taps < 3:
        raise ValueError("num_taps must be odd and >= 3")
    if abs(delay_samples) >= len(x):
        raise ValueError("delay exceeds the signal length")

    n0 = int(np.floor(delay_samples))
    mu = delay_samples - n0
    if mu == 0.0:
        y = x
    else:
        half = num_taps // 2
        offsets = np.arange(-half, half + 1)
        # Hann window centered on the sinc peak, so the filter stays
        # symmetric around the fractional shift.
        window = np.clip(0.5 + 0.5 * np.cos(np.pi * (offsets - mu) / half), 0.0, None)
        taps = np.sinc(offsets - mu) * window
        y = scipy.signal.fftconvolve(x, taps, mode="full")[half : half + len(x)]

    if n0 == 0:
        return y.copy() if y is x else y
    out = np.zeros_like(y)
    if n0 > 0:
        out[n0:] = y[:-n0]
    else:
        out[:n0] = y[-n0:]
    return out


def load_wav(path) -> MultichannelAudio:
    """Read a RIFF/WAVE file as channel-major float samples.

    Accepts 16-bit PCM (rescaled to [-1, 1)) and 32/64-bit float.  No
    resampling happens here; sample-rate checks against a geometry are the
    caller's job.
    """
    fs, data = scipy.io.wavfile.read(path)
    if data.ndim == 1:
        data = data[:, None]
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(float)
    else:
        raise ValueError(f"unsupported WAV sample format {data.dtype}")
    return MultichannelAudio(samples.T, int(fs))


def save_wav(path, audio: MultichannelAudio) -> None:
    """Write channel-major float samples as a 32-bit float WAV."""
    scipy.io.wavfile.write(
        path, audio.sample_rate_hz, audio.samples.T.astype(np.float32)
    )


def analyze(
    audio: MultichannelAudio,
    window_ms: float,
    hop_ms: float | None = None,
    band_hz: tuple[float, float] = DEFAULT_BAND_HZ,
    vad_threshold: float = DEFAULT_VAD_THRESHOLD,
    window: str | None = "hann",
) -> list[FrameSpectra]:
    """Full analysis front end: frame, transform, band-select, VAD-flag."""
    frames = frame_signal(audio, window_ms, hop_ms)
    hop = int(round((hop_ms if hop_ms is not None else window_ms)
                    * audio.sample_rate_hz / 1000.0))
    spectra = dft_frames(frames, audio.sample_rate_hz, hop, window)
    select_band(spectra, *band_hz)
    apply_vad(spectra, frames, vad_threshold)
    return spectra
