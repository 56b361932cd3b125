"""UCA geometry and the line-of-sight channel between two uniform circular arrays.

Lengths are expressed in units of the wavelength unless ``LinkGeometry.wavelength``
is set otherwise. The transmit UCA lies in the z=0 plane centred on the origin;
the receive UCA is centred at (0, 0, D) and tilted by the oblique angle about
the x axis, so a receive element at azimuth theta sits at

    (R_r cos(theta), R_r sin(theta) cos(alpha), D + R_r sin(theta) sin(alpha)).

With that placement the Euclidean transmit-to-receive distance is exactly the
closed form used in :func:`element_distance`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, GeometryError, OamError

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class UcaConfig:
    """A uniform circular array: element count, radius and first-element azimuth."""

    n_elements: int
    radius: float
    initial_angle: float = 0.0

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 1:
            raise GeometryError(f"n_elements must be a positive integer, got {self.n_elements!r}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"radius must be positive and finite, got {self.radius!r}")
        if not (0.0 <= self.initial_angle < TWO_PI):
            raise GeometryError(f"initial_angle must lie in [0, 2pi), got {self.initial_angle!r}")

    def azimuths(self) -> np.ndarray:
        """Azimuth of every element, reduced to [0, 2pi)."""
        n = np.arange(self.n_elements)
        return np.mod(TWO_PI * n / self.n_elements + self.initial_angle, TWO_PI)


@dataclass(frozen=True)
class LinkGeometry:
    """Placement of the transmit and receive UCAs for one link realisation."""

    tx: UcaConfig
    rx: UcaConfig
    center_distance: float
    oblique_angle: float = 0.0
    wavelength: float = 1.0
    gain: float = 1.0

    def __post_init__(self):
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise GeometryError(f"wavelength must be positive, got {self.wavelength!r}")
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise GeometryError(f"gain must be positive, got {self.gain!r}")
        if not (0.0 <= self.oblique_angle < math.pi / 2):
            raise GeometryError(f"oblique_angle must lie in [0, pi/2), got {self.oblique_angle!r}")
        if not (self.center_distance > self.tx.radius + self.rx.radius):
            raise GeometryError(
                f"center_distance {self.center_distance!r} must exceed "
                f"R_t + R_r = {self.tx.radius + self.rx.radius!r}"
            )

    @property
    def wavenumber(self) -> float:
        return TWO_PI / self.wavelength

    def with_position(self, center_distance: float, oblique_angle: float) -> "LinkGeometry":
        """Copy of this geometry with the receiver moved to (D, alpha)."""
        return LinkGeometry(
            self.tx, self.rx, float(center_distance), float(oblique_angle),
            self.wavelength, self.gain,
        )


@dataclass(frozen=True)
class ChannelMatrix:
    """Complex N_r x N_t matrix of line-of-sight coefficients."""

    entries: np.ndarray
    geometry: LinkGeometry = field(repr=False)

    @property
    def shape(self):
        return self.entries.shape


def element_azimuth(cfg: UcaConfig, n: int) -> float:
    """Azimuth of the n-th element (1-based), reduced to [0, 2pi)."""
    if not (1 <= n <= cfg.n_elements):
        raise DomainError(f"element index {n} outside 1..{cfg.n_elements}")
    return math.fmod(TWO_PI * (n - 1) / cfg.n_elements + cfg.initial_angle, TWO_PI)


def _excess_sq(geom: LinkGeometry, phi, theta):
    """``d^2 - D^2`` formed without the large ``D^2`` term."""
    rt, rr, d, a = geom.tx.radius, geom.rx.radius, geom.center_distance, geom.oblique_angle
    return (
        rr**2 + rt**2
        + 2.0 * d * rr * np.sin(theta) * math.sin(a)
        - 2.0 * rr * rt * (np.cos(phi) * np.cos(theta) + np.sin(phi) * np.sin(theta) * math.cos(a))
    )


def _distance_sq(geom: LinkGeometry, phi, theta):
    return geom.center_distance**2 + _excess_sq(geom, phi, theta)


def element_distance(geom: LinkGeometry, n_t: int, n_r: int) -> float:
    """Distance from transmit element ``n_t`` to receive element ``n_r`` (both 1-based)."""
    phi = element_azimuth(geom.tx, n_t)
    theta = element_azimuth(geom.rx, n_r)
    d2 = float(_distance_sq(geom, phi, theta))
    if d2 <= 0:
        raise OamError(f"non-positive squared distance {d2} for elements ({n_t}, {n_r})")
    return math.sqrt(d2)


def distance_matrix(geom: LinkGeometry) -> np.ndarray:
    """All pairwise distances as an (N_r, N_t) array."""
    phi = geom.tx.azimuths()[None, :]
    theta = geom.rx.azimuths()[:, None]
    d2 = _distance_sq(geom, phi, theta)
    if np.any(d2 <= 0):
        raise OamError("non-positive squared distance in distance matrix")
    return np.sqrt(d2)


def channel_coeff(geom: LinkGeometry, d):
    """Free-space coefficient ``gain * wavelength/(4 pi d) * exp(-j 2 pi d / wavelength)``.

    Accepts a scalar or an array of distances.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise DomainError(f"distance must be positive, got {d!r}")
    lam = geom.wavelength
    h = geom.gain * lam / (4.0 * math.pi * d_arr) * np.exp(-1j * TWO_PI * d_arr / lam)
    return complex(h) if h.ndim == 0 else h


def excess_matrix(geom: LinkGeometry) -> np.ndarray:
    """Path length minus the centre distance, ``d - D``, for every element pair.

    Computed as ``(d^2 - D^2) / (d + D)`` so the result keeps full relative
    precision even when D is many orders of magnitude larger.
    """
    phi = geom.tx.azimuths()[None, :]
    theta = geom.rx.azimuths()[:, None]
    q = _excess_sq(geom, phi, theta)
    return q / (np.sqrt(geom.center_distance**2 + q) + geom.center_distance)


def channel_matrix(geom: LinkGeometry) -> ChannelMatrix:
    """Assemble H = [h(d_{n_r, n_t})] of shape (N_r, N_t).

    The common carrier phase of the centre distance is factored out so that the
    per-element phases are not swamped by rounding of kD at long range.
    """
    d = distance_matrix(geom)
    lam = geom.wavelength
    carrier = np.exp(-1j * TWO_PI * math.fmod(geom.center_distance / lam, 1.0))
    h = geom.gain * lam / (4.0 * math.pi * d) * np.exp(-1j * TWO_PI * excess_matrix(geom) / lam)
    return ChannelMatrix(h * carrier, geom)


def tx_positions(geom: LinkGeometry) -> np.ndarray:
    """Cartesian positions (N_t, 3) of the transmit elements."""
    phi = geom.tx.azimuths()
    r = geom.tx.radius
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), np.zeros_like(phi)])


def rx_offsets(geom: LinkGeometry) -> np.ndarray:
    """Receive element positions (N_r, 3) relative to the receive-array centre."""
    theta = geom.rx.azimuths()
    r, a = geom.rx.radius, geom.oblique_angle
    return np.column_stack([
        r * np.cos(theta),
        r * np.sin(theta) * math.cos(a),
        r * np.sin(theta) * math.sin(a),
    ])


def rx_positions(geom: LinkGeometry) -> np.ndarray:
    """Cartesian positions (N_r, 3) of the receive elements."""
    return rx_offsets(geom) + np.array([0.0, 0.0, geom.center_distance])


def offdiagonal_energy_ratio(matrix: np.ndarray) -> float:
    """Relative off-diagonal energy of F H F^H for a square H (unitary DFT F)."""
    h = np.asarray(matrix)
    n = h.shape[0]
    if h.shape != (n, n):
        raise DomainError("matrix must be square")
    f = np.fft.fft(np.eye(n)) / math.sqrt(n)
    m = f @ h @ f.conj().T
    total = float(np.sum(np.abs(m) ** 2))
    off = total - float(np.sum(np.abs(np.diag(m)) ** 2))
    return max(off, 0.0) / total
