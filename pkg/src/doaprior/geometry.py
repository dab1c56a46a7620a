"""Microphone array geometry and far-field steering.

Arrays are planar (2D) and azimuth-only: candidate directions live on a
circle around the array center, elevation is fixed at zero.  Propagation
is modeled as a plane wave, so per-microphone delays depend only on the
arrival azimuth, not on source distance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SPEED_OF_SOUND = 343.0


@dataclass(frozen=True)
class MicArrayGeometry:
    """Planar microphone array.

    mic_positions are (x, y) coordinates in meters relative to the array
    center.  Azimuth 0 points along +x, angles grow counter-clockwise.
    """

    mic_positions: tuple[tuple[float, float], ...]
    sample_rate_hz: int
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND

    def __post_init__(self):
        if len(self.mic_positions) < 2:
            raise ValueError("array needs at least 2 microphones")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        if self.speed_of_sound <= 0:
            raise ValueError("speed_of_sound must be positive")
        pts = [tuple(float(c) for c in p) for p in self.mic_positions]
        if len(set(pts)) != len(pts):
            raise ValueError("microphone positions must be pairwise distinct")
        object.__setattr__(self, "mic_positions", tuple(pts))

    @property
    def num_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def positions(self) -> np.ndarray:
        """Positions as an (M, 2) float array."""
        return np.asarray(self.mic_positions, dtype=float)

    @property
    def aperture(self) -> float:
        """Largest pairwise microphone distance in meters."""
        p = self.positions
        diff = p[:, None, :] - p[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=-1)).max())

    def to_dict(self) -> dict:
        return {
            "mics": [list(p) for p in self.mic_positions],
            "sample_rate_hz": self.sample_rate_hz,
            "speed_of_sound": self.speed_of_sound,
        }


def circular_array(
    num_mics: int,
    radius_m: float,
    offset_rad: float = 0.0,
    sample_rate_hz: int = 16000,
    speed_of_sound: float = DEFAULT_SPEED_OF_SOUND,
) -> MicArrayGeometry:
    """Uniform circular array: mic k sits at angle offset + 2*pi*k/M.

    Parameters
    ----------
    num_mics : number of elements, at least 2.
    radius_m : circle radius in meters, strictly positive.
    offset_rad : azimuth of mic 0.
    """
    if num_mics < 2:
        raise ValueError("circular array needs at least 2 microphones")
    if radius_m <= 0:
        raise ValueError("radius must be positive")
    angles = offset_rad + 2.0 * math.pi * np.arange(num_mics) / num_mics
    positions = tuple(
        (radius_m * math.cos(a), radius_m * math.sin(a)) for a in angles
    )
    return MicArrayGeometry(positions, sample_rate_hz, speed_of_sound)


def tdoa_for_angle(geom: MicArrayGeometry, azimuth_rad: float) -> np.ndarray:
    """Far-field propagation delay per microphone, in seconds.

    delay_m = -(p_m . u) / c with u the unit vector pointing toward the
    source azimuth.  Delays are relative: mics closer to the source get
    more negative values, and adding a constant to all is equivalent.
    """
    return tdoa_matrix(geom, np.asarray([azimuth_rad], dtype=float))[0]


def tdoa_matrix(geom: MicArrayGeometry, azimuths_rad: np.ndarray) -> np.ndarray:
    """Vectorized :func:`tdoa_for_angle`: returns an (A, M) array of seconds."""
    az = np.atleast_1d(np.asarray(azimuths_rad, dtype=float))
    u = np.stack([np.cos(az), np.sin(az)], axis=-1)  # (A, 2)
    proj = u @ geom.positions.T  # (A, M)
    return -proj / geom.speed_of_sound


def steering_vector(
    geom: MicArrayGeometry, azimuth_rad: float, freq_hz: float
) -> np.ndarray:
    """Complex array response for a plane wave: entry m is exp(-j*2*pi*f*delay_m).

    All entries have unit modulus.  Frequencies must lie in (0, fs/2].
    """
    if not 0.0 < freq_hz <= geom.sample_rate_hz / 2:
        raise ValueError(
            f"frequency {freq_hz} Hz outside (0, {geom.sample_rate_hz / 2}] Hz"
        )
    delays = tdoa_for_angle(geom, azimuth_rad)
    return np.exp(-2j * np.pi * freq_hz * delays)


def steering_matrix(
    geom: MicArrayGeometry, azimuths_rad: np.ndarray, freqs_hz: np.ndarray
) -> np.ndarray:
    """Steering vectors for a grid of azimuths and frequencies: (A, M, F)."""
    delays = tdoa_matrix(geom, azimuths_rad)  # (A, M)
    f = np.atleast_1d(np.asarray(freqs_hz, dtype=float))
    return np.exp(-2j * np.pi * delays[:, :, None] * f[None, None, :])


def load_geometry(path) -> MicArrayGeometry:
    """Read a geometry JSON document.

    Expected shape: {"mics": [[x, y], ...], "sample_rate_hz": n,
    "speed_of_sound": c}.  speed_of_sound is optional.
    """
    with open(path) as fh:
        doc = json.load(fh)
    try:
        mics = tuple(tuple(float(c) for c in p) for p in doc["mics"])
        fs = int(doc["sample_rate_hz"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed geometry file {path}: {exc}") from exc
    c = float(doc.get("speed_of_sound", DEFAULT_SPEED_OF_SOUND))
    return MicArrayGeometry(mics, fs, c)


def save_geometry(path, geom: MicArrayGeometry) -> None:
    with open(path, "w") as fh:
        json.dump(geom.to_dict(), fh, indent=2)
        fh.write("\n")
