"""OAM beamforming with a partial DFT, received-signal models and phase features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateSampleError, DomainError, ModeError
from .physics import (
    TWO_PI,
    LinkGeometry,
    channel_matrix,
    rx_offsets,
    tx_positions,
)


@dataclass(frozen=True)
class ModeSet:
    """The OAM modes transmitted simultaneously, in order."""

    modes: tuple

    def __init__(self, modes: Iterable[int]):
        ms = tuple(int(m) for m in modes)
        if len(ms) < 1:
            raise ModeError("a mode set needs at least one mode")
        if len(set(ms)) != len(ms):
            raise ModeError(f"modes must be distinct, got {ms}")
        object.__setattr__(self, "modes", ms)

    @property
    def U(self) -> int:
        return len(self.modes)

    def check_resolvable(self, n_tx: int) -> None:
        limit = n_tx // 2
        for m in self.modes:
            if abs(m) > limit:
                raise ModeError(f"mode {m} not resolvable by a {n_tx}-element UCA (|l| <= {limit})")
        if len({m % n_tx for m in self.modes}) != len(self.modes):
            raise ModeError(f"modes {self.modes} alias modulo {n_tx}")

    def __iter__(self):
        return iter(self.modes)

    def __str__(self):
        return "(" + ",".join(f"{m:+d}" if m else "0" for m in self.modes) + ")"


@dataclass(frozen=True)
class ReceivedVector:
    samples: np.ndarray
    snr_db: Optional[float] = None


def steering_vector(mode: int, n_tx: int) -> np.ndarray:
    """Row ``f(l)`` of the N_t-point DFT: ``exp(-i 2 pi l n / N_t) / sqrt(N_t)``."""
    if abs(mode) > n_tx // 2:
        raise ModeError(f"mode {mode} not resolvable by a {n_tx}-element UCA")
    n = np.arange(n_tx)
    return np.exp(-1j * TWO_PI * mode * n / n_tx) / math.sqrt(n_tx)


def transmit_vector(ms: ModeSet, n_tx: int) -> np.ndarray:
    """``F_U^H 1_U``: the element excitations carrying every mode of ``ms`` with unit symbols."""
    ms.check_resolvable(n_tx)
    return sum(steering_vector(m, n_tx).conj() for m in ms.modes)


def add_noise(x: np.ndarray, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise at ``snr_db`` relative to the mean element power."""
    p_sig = float(np.mean(np.abs(x) ** 2))
    var = p_sig / 10.0 ** (snr_db / 10.0)
    z = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + z * math.sqrt(var / 2.0)


def receive_exact(
    geom: LinkGeometry,
    ms: ModeSet,
    snr_db: Optional[float] = None,
    seed=None,
) -> ReceivedVector:
    """``x = H F_U^H 1_U (+ z)`` evaluated with exact element distances."""
    x = channel_matrix(geom).entries @ transmit_vector(ms, geom.tx.n_elements)
    if snr_db is not None:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        x = add_noise(x, snr_db, rng)
    return ReceivedVector(x, snr_db)


def receive_farfield(geom: LinkGeometry, ms: ModeSet) -> ReceivedVector:
    """Received vector under the first-order far-field approximation (noiseless).

    Amplitudes use the centre distance D for every path. Each path length is
    replaced by ``|R| - u_hat . r_tx`` where ``R`` runs from the transmit centre
    to the receive element and ``u_hat = R/|R|``; the transmit-side projection is
    the only approximation, so a point source at the centre is reproduced exactly.
    Projecting on the fixed link axis instead would cancel every mode but zero.
    """
    k = geom.wavenumber
    d = geom.center_distance
    rt = tx_positions(geom)
    to_rx = rx_offsets(geom) + np.array([0.0, 0.0, d])
    off = to_rx - np.array([0.0, 0.0, d])
    rng_rx = np.linalg.norm(to_rx, axis=1, keepdims=True)
    # |R| - D without cancellation, then the carrier phase of D applied once
    q = (off * off).sum(axis=1, keepdims=True) + 2.0 * d * off[:, 2:3]
    excess = q / (rng_rx + d) - (to_rx / rng_rx) @ rt.T
    amp = geom.gain * geom.wavelength / (4.0 * math.pi * d)
    carrier = np.exp(-1j * TWO_PI * math.fmod(d / geom.wavelength, 1.0))
    h = amp * carrier * np.exp(-1j * k * excess)
    return ReceivedVector(h @ transmit_vector(ms, geom.tx.n_elements))


def phase_features(x) -> np.ndarray:
    """Principal argument of every sample, in (-pi, pi]."""
    s = np.asarray(x.samples if isinstance(x, ReceivedVector) else x)
    if s.ndim != 1:
        raise DomainError("expected a 1-D received vector")
    if np.any(s == 0):
        raise DegenerateSampleError("zero-magnitude sample has no phase")
    ph = np.angle(s)
    # np.angle returns -pi for a negative real with -0.0 imaginary part
    ph[ph <= -math.pi] = math.pi
    return ph


def wrap_phase(p):
    """Wrap angles into (-pi, pi]."""
    w = np.mod(np.asarray(p, dtype=float) + math.pi, TWO_PI) - math.pi
    w = np.where(w <= -math.pi, math.pi, w)
    return w if np.ndim(w) else float(w)


FEATURE_KINDS = ("absolute", "relative", "gradient")


def feature_vector(x, kind: str = "absolute", embed: bool = False) -> np.ndarray:
    """Classifier input derived from a received vector.

    ``absolute``  principal phases of all N_r samples.
    ``relative``  phases of elements 2..N_r referenced to element 1 (N_r - 1 values);
                  removes the unobservable common carrier phase.
    ``gradient``  wrapped phase step between circularly adjacent elements (N_r values).

    With ``embed`` every phase p is replaced by the pair (cos p, sin p),
    cosines first, which removes the +-pi wrap discontinuity.
    """
    s = np.asarray(x.samples if isinstance(x, ReceivedVector) else x)
    ph = phase_features(s)
    if kind == "absolute":
        out = ph
    elif kind == "relative":
        out = wrap_phase(ph[1:] - ph[0])
    elif kind == "gradient":
        out = wrap_phase(np.roll(ph, -1) - ph)
    else:
        raise DomainError(f"unknown feature kind {kind!r}; expected one of {FEATURE_KINDS}")
    if embed:
        out = np.concatenate([np.cos(out), np.sin(out)])
    return out


def feature_dimension(n_rx: int, kind: str = "absolute", embed: bool = False) -> int:
    n = n_rx - 1 if kind == "relative" else n_rx
    return 2 * n if embed else n


def unwrapped_winding(phases: Sequence[float]) -> float:
    """Total circular phase advance (in turns) around a closed ring of phases."""
    p = np.asarray(phases, dtype=float)
    steps = wrap_phase(np.roll(p, -1) - p)
    return float(np.sum(steps) / TWO_PI)
