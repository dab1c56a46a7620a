"""Grid-search DoA back ends: GCC-PHAT, SRP-PHAT, MUSIC and TOPS.

Every estimator scores a set of candidate azimuths for one analysis frame
(or a stack of snapshot frames) and the search picks the argmax, Eq.-style:
the candidate set can be restricted by a free-space prior before scoring,
which shrinks the evaluation count one-for-one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dsp import FrameSpectra
from .geometry import MicArrayGeometry, steering_matrix, tdoa_matrix
from .prior import PriorMap, mask_grid

_MAG_EPS = 1e-12
_SCORE_FLOOR = 1e-30
_BIN_BLOCK = 512


@dataclass(frozen=True)
class AngularGrid:
    """Ordered candidate azimuths in [0, 2*pi)."""

    angles_rad: np.ndarray
    resolution_rad: float

    def __post_init__(self):
        a = np.asarray(self.angles_rad, dtype=float)
        if a.ndim != 1 or len(a) == 0:
            raise ValueError("grid needs a 1-D, non-empty angle list")
        if np.any(a < 0) or np.any(a >= 2 * math.pi):
            raise ValueError("grid angles must lie in [0, 2*pi)")
        if np.any(np.diff(a) <= 0):
            raise ValueError("grid angles must be strictly increasing")
        object.__setattr__(self, "angles_rad", a)

    @classmethod
    def uniform(cls, num_bins: int) -> "AngularGrid":
        """num_bins equally spaced candidates starting at azimuth 0."""
        if num_bins < 1:
            raise ValueError("need at least one grid bin")
        step = 2 * math.pi / num_bins
        return cls(step * np.arange(num_bins), step)

    def restrict(self, keep: np.ndarray) -> "AngularGrid":
        """Subset by boolean mask; nominal resolution is retained."""
        return AngularGrid(self.angles_rad[np.asarray(keep, dtype=bool)],
                           self.resolution_rad)

    @property
    def angles_deg(self) -> np.ndarray:
        return np.degrees(self.angles_rad)

    def __len__(self) -> int:
        return len(self.angles_rad)


@dataclass
class ScoreSpectrum:
    """Scores over the exact candidate set that was evaluated."""

    angles_rad: np.ndarray
    scores: np.ndarray
    method: str
    frame_start: int | None = None

    def __post_init__(self):
        if len(self.angles_rad) != len(self.scores):
            raise ValueError("angles and scores length mismatch")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")

    def best(self) -> tuple[float, float]:
        """(azimuth, score) of the peak; ties go to the smallest angle."""
        idx = int(np.argmax(self.scores))
        return float(self.angles_rad[idx]), float(self.scores[idx])

    def __len__(self) -> int:
        return len(self.angles_rad)


@dataclass(frozen=True)
class DoaEstimate:
    """Per-frame search result, including the candidate count actually scored."""

    frame_index: int
    azimuth_rad: float
    score: float
    vad_active: bool = True
    n_evaluated: int = 0

    @property
    def azimuth_deg(self) -> float:
        return math.degrees(self.azimuth_rad)


def _as_frames(spectra) -> list[FrameSpectra]:
    if isinstance(spectra, FrameSpectra):
        return [spectra]
    frames = list(spectra)
    if not frames:
        raise ValueError("need at least one snapshot frame")
    return frames


def _band_of(frames: Sequence[FrameSpectra], band) -> range:
    if band is not None:
        return band
    if frames[0].band_bins is None:
        raise ValueError("no band given and frames carry no band selection")
    return frames[0].band_bins


def _pair_indices(num_mics: int) -> tuple[np.ndarray, np.ndarray]:
    i, j = np.triu_indices(num_mics, k=1)
    return i, j


def _phat_products(frames: Sequence[FrameSpectra], band: range) -> np.ndarray:
    """Phase-transformed pair cross-spectra averaged over snapshots: (P, B).

    Bins whose cross-power magnitude falls below the guard threshold
    contribute zero weight.
    """
    ii, jj = _pair_indices(frames[0].num_channels)
    bins = np.asarray(band)
    acc = np.zeros((len(ii), len(bins)), dtype=complex)
    for frame in frames:
        x = frame.coefficients[:, bins]
        cross = x[ii] * np.conj(x[jj])
        mag = np.abs(cross)
        np.divide(cross, mag, out=cross, where=mag >= _MAG_EPS)
        cross[mag < _MAG_EPS] = 0.0
        acc += cross
    return acc / len(frames)


def gcc_phat_pair(
    spec_i: np.ndarray, spec_j: np.ndarray, band: range, nfft: int
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized cross-correlation with phase transform for one mic pair.

    spec_i and spec_j are one-sided DFTs of the same frame.  The cross
    spectrum is whitened to unit magnitude, zeroed outside the band, and
    inverse-transformed.  Returns (lags, values) over signed integer lags;
    a positive lag means channel j lags channel i.
    """
    if len(spec_i) != len(spec_j):
        raise ValueError("pair spectra must have equal length")
    cross = np.zeros(len(spec_i), dtype=complex)
    bins = np.asarray(band)
    prod = spec_i[bins] * np.conj(spec_j[bins])
    mag = np.abs(prod)
    np.divide(prod, mag, out=prod, where=mag >= _MAG_EPS)
    prod[mag < _MAG_EPS] = 0.0
    cross[bins] = prod
    cc = np.fft.irfft(cross, n=nfft)
    lags = np.arange(-(nfft // 2), nfft - nfft // 2)
    values = cc[(-lags) % nfft]
    return lags, values


def srp_phat_spectrum(
    spectra,
    geom: MicArrayGeometry,
    grid: AngularGrid,
    band: range | None = None,
) -> ScoreSpectrum:
    """Steered response power with PHAT weighting over the candidate grid.

    Per candidate: the real part of the whitened pair cross-spectra steered
    to the candidate's inter-mic delays, averaged over all pairs and band
    bins.  Scale-invariant by construction.
    """
    frames = _as_frames(spectra)
    band = _band_of(frames, band)
    products = _phat_products(frames, band)
    freqs = frames[0].bin_freqs(band)
    phases = _pair_steering_phases(geom, grid.angles_rad, freqs)
    scores = np.einsum("pb,apb->a", products, phases).real
    scores /= products.shape[0] * products.shape[1]
    return ScoreSpectrum(grid.angles_rad, scores, "srp-phat",
                         frames[0].frame_start)


def _pair_steering_phases(
    geom: MicArrayGeometry, angles_rad: np.ndarray, freqs_hz: np.ndarray
) -> np.ndarray:
    """exp(+j*2*pi*f*(tau_i - tau_j)) per candidate, pair and bin: (A, P, B)."""
    delays = tdoa_matrix(geom, angles_rad)  # (A, M)
    ii, jj = _pair_indices(geom.num_mics)
    diff = delays[:, ii] - delays[:, jj]  # (A, P)
    return np.exp(2j * np.pi * diff[:, :, None] * freqs_hz[None, None, :])


def srp_phat_score(
    spectra,
    geom: MicArrayGeometry,
    azimuth_rad: float,
    band: range | None = None,
) -> float:
    """SRP-PHAT score of a single candidate azimuth."""
    grid = AngularGrid(np.asarray([azimuth_rad % (2 * math.pi)]), 2 * math.pi)
    return float(srp_phat_spectrum(spectra, geom, grid, band).scores[0])


def spatial_covariance(spectra, bin_index: int) -> np.ndarray:
    """Empirical spatial covariance at one bin over the snapshot frames.

    Returns the M x M Hermitian PSD average of outer products x x^H.
    """
    frames = _as_frames(spectra)
    x = np.stack([f.coefficients[:, bin_index] for f in frames])  # (K, M)
    return np.einsum("km,kn->mn", x, np.conj(x)) / len(frames)


def _covariances_by_bin(frames: Sequence[FrameSpectra], bins: np.ndarray) -> np.ndarray:
    x = np.stack([f.coefficients[:, bins] for f in frames])  # (K, M, B)
    return np.einsum("kmb,knb->bmn", x, np.conj(x)) / len(frames)


def music_spectrum(
    spectra,
    geom: MicArrayGeometry,
    grid: AngularGrid,
    band: range | None = None,
    num_sources: int = 1,
) -> ScoreSpectrum:
    """Broadband MUSIC pseudo-spectrum, incoherently averaged over band bins.

    Per bin the covariance is eigendecomposed, the num_sources largest
    eigenpairs form the signal subspace and the rest the noise subspace;
    the candidate score at that bin is the inverse squared projection of
    its steering vector onto the noise subspace.
    """
    frames = _as_frames(spectra)
    m = frames[0].num_channels
    if not 1 <= num_sources < m:
        raise ValueError("num_sources must satisfy 1 <= num_sources < num_mics")
    if len(frames) < num_sources:
        raise ValueError("need at least num_sources snapshot frames")
    band = _band_of(frames, band)
    bins = np.asarray(band)
    freqs = frames[0].bin_freqs(band)
    total = np.zeros(len(grid))
    for lo in range(0, len(bins), _BIN_BLOCK):
        blk = slice(lo, lo + _BIN_BLOCK)
        cov = _covariances_by_bin(frames, bins[blk])
        _, vecs = np.linalg.eigh(cov)  # ascending eigenvalues
        noise = vecs[:, :, : m - num_sources]  # (B, M, Q)
        steer = steering_matrix(geom, grid.angles_rad, freqs[blk])  # (A, M, B)
        proj = np.einsum("bmq,amb->aqb", np.conj(noise), steer)
        denom = np.sum(np.abs(proj) ** 2, axis=1)  # (A, B)
        total += np.sum(1.0 / np.maximum(denom, _SCORE_FLOOR), axis=1)
    scores = total / len(bins)
    return ScoreSpectrum(grid.angles_rad, scores, "music", frames[0].frame_start)


def tops_spectrum(
    spectra,
    geom: MicArrayGeometry,
    grid: AngularGrid,
    band: range | None = None,
    num_sources: int = 1,
    project_out_steering: bool = True,
) -> ScoreSpectrum:
    """Broadband subspace orthogonality test over the candidate grid.

    The signal subspace at the strongest band bin is frequency-shifted to
    every other band bin under each candidate's delays and tested against
    that bin's noise subspace; the score is the reciprocal of the smallest
    singular value of the stacked test matrix.  project_out_steering
    removes the candidate steering component before the test.
    """
    frames = _as_frames(spectra)
    m = frames[0].num_channels
    if not 1 <= num_sources < m:
        raise ValueError("num_sources must satisfy 1 <= num_sources < num_mics")
    band = _band_of(frames, band)
    bins = np.asarray(band)
    if len(bins) < 2:
        raise ValueError("band must contain at least 2 bins")
    freqs = frames[0].bin_freqs(band)

    energy = np.zeros(len(bins))
    for frame in frames:
        energy += np.mean(np.abs(frame.coefficients[:, bins]) ** 2, axis=0)
    ref = int(np.argmax(energy))

    cov = _covariances_by_bin(frames, bins)  # (B, M, M)
    _, vecs = np.linalg.eigh(cov)
    signal_ref = vecs[ref, :, m - num_sources :]  # (M, P), largest eigenpairs
    others = np.asarray([b for b in range(len(bins)) if b != ref])
    noise = vecs[others, :, : m - num_sources]  # (K-1, M, Q)
    delta_f = freqs[others] - freqs[ref]  # (K-1,)

    delays = tdoa_matrix(geom, grid.angles_rad)  # (A, M)
    q = m - num_sources
    d = np.empty((len(grid), num_sources, len(others) * q), dtype=complex)
    for lo in range(0, len(others), _BIN_BLOCK):
        blk = slice(lo, min(lo + _BIN_BLOCK, len(others)))
        shift = np.exp(
            -2j * np.pi * delta_f[None, blk, None] * delays[:, None, :]
        )  # (A, Kb, M)
        moved = shift[:, :, :, None] * signal_ref[None, None, :, :]  # (A, Kb, M, P)
        if project_out_steering:
            steer = np.exp(
                -2j * np.pi * freqs[others][None, blk, None] * delays[:, None, :]
            )  # (A, Kb, M)
            coef = np.einsum("akm,akmp->akp", np.conj(steer), moved) / m
            moved = moved - steer[:, :, :, None] * coef[:, :, None, :]
        rows = np.einsum("akmp,kmq->akpq", np.conj(moved), noise[blk])
        nb = rows.shape[1]
        d[:, :, lo * q : (lo + nb) * q] = rows.reshape(len(grid), nb * q, num_sources
                                                       ).transpose(0, 2, 1)
    sigma_min = np.linalg.svd(d, compute_uv=False)[:, -1]
    scores = 1.0 / np.maximum(sigma_min, _SCORE_FLOOR)
    return ScoreSpectrum(grid.angles_rad, scores, "tops", frames[0].frame_start)


def argmax_with_prior(
    score_fn: Callable[[np.ndarray], np.ndarray],
    grid: AngularGrid,
    prior: PriorMap | None = None,
    frame_index: int = 0,
    vad_active: bool = True,
) -> DoaEstimate:
    """Search step: score only the prior-allowed candidates, return the peak.

    score_fn receives the restricted angle array and must return one score
    per angle; exactly len(restricted) candidates are evaluated, which the
    returned estimate records.  Ties resolve to the smallest angle.
    """
    allowed = mask_grid(grid, prior)
    scores = np.asarray(score_fn(allowed.angles_rad), dtype=float)
    if scores.shape != allowed.angles_rad.shape:
        raise ValueError("score_fn must return one score per candidate")
    idx = int(np.argmax(scores))
    return DoaEstimate(
        frame_index=frame_index,
        azimuth_rad=float(allowed.angles_rad[idx]),
        score=float(scores[idx]),
        vad_active=vad_active,
        n_evaluated=len(allowed),
    )
