"""
Simplified geometry-based stochastic channel model.

H(t, f) = sum_p g_p a_rx(theta_rx, phi_rx) a_tx(theta_tx, phi_tx)^H exp(-j 2 pi f tau_p) exp(j 2 pi nu_p t)

Path parameters are static over one sample window. The antenna pairs are
flattened rx-major, s = rx * N_tx + tx.
"""
import logging

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from core.utils.constants import carrier_frequency, mobility_speeds, slot_duration, speed_of_light, subcarrier_spacing
from core.utils.errors import ChannelModelError

log = logging.getLogger(__name__)

__all__ = [
    "PathParams", "ArrayGeometry", "GridSpec", "CsiTensor",
    "steering_vector", "channel_matrix", "generate_channel", "random_scene",
    "to_real", "to_complex", "normalize_power",
]


class PathParams(BaseModel):
    gain_re: float = Field(..., description="Real part of the complex path gain g_p.")
    gain_im: float = Field(0.0, description="Imaginary part of the complex path gain g_p.")
    theta_tx: float = Field(0.0, ge=-np.pi, le=np.pi, description="Azimuth of departure (rad).")
    phi_tx: float = Field(0.0, ge=-np.pi / 2, le=np.pi / 2, description="Elevation of departure (rad).")
    theta_rx: float = Field(0.0, ge=-np.pi, le=np.pi, description="Azimuth of arrival (rad).")
    phi_rx: float = Field(0.0, ge=-np.pi / 2, le=np.pi / 2, description="Elevation of arrival (rad).")
    delay: float = Field(0.0, ge=0.0, description="Propagation delay tau_p (s).")
    doppler: float = Field(0.0, description="Doppler shift nu_p (Hz).")

    @property
    def gain(self):
        return complex(self.gain_re, self.gain_im)


class ArrayGeometry(BaseModel):
    """Uniform planar array, N_h columns by N_v rows."""
    n_h: int = Field(1, gt=0, description="Elements along the horizontal axis.")
    n_v: int = Field(1, gt=0, description="Elements along the vertical axis.")
    spacing_h: float = Field(0.5, gt=0, description="Horizontal element spacing in wavelengths.")
    spacing_v: float = Field(0.5, gt=0, description="Vertical element spacing in wavelengths.")

    @property
    def n_elements(self):
        return self.n_h * self.n_v


class GridSpec(BaseModel):
    n_time: int = Field(..., ge=1, description="Number of time samples L.")
    n_freq: int = Field(..., ge=1, description="Number of subcarriers K.")
    time_step: float = Field(slot_duration, gt=0, description="Time step between samples (s).")
    freq_step: float = Field(subcarrier_spacing, gt=0, description="Subcarrier spacing (Hz).")
    base_time: float = Field(0.0, description="Time of the first sample (s).")
    base_freq: float = Field(0.0, description="Frequency of the first subcarrier relative to the carrier (Hz).")

    def times(self):
        return self.base_time + self.time_step * np.arange(self.n_time)

    def frequencies(self):
        return self.base_freq + self.freq_step * np.arange(self.n_freq)


class CsiTensor(BaseModel):
    """Real channel tensor of shape L x K x N_s x 2 with its grid metadata."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: np.ndarray
    grid: GridSpec
    n_tx: int = Field(..., ge=1)
    n_rx: int = Field(..., ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.data.ndim != 4 or self.data.shape[-1] != 2:
            raise ValueError(f"CSI tensor must be L x K x N_s x 2, got {self.data.shape}")
        if self.data.shape[2] != self.n_tx * self.n_rx:
            raise ValueError(f"N_s={self.data.shape[2]} is not N_tx*N_rx={self.n_tx * self.n_rx}")
        if self.data.shape[:2] != (self.grid.n_time, self.grid.n_freq):
            raise ValueError(f"tensor {self.data.shape[:2]} disagrees with grid "
                             f"({self.grid.n_time}, {self.grid.n_freq})")
        return self

    @property
    def shape(self):
        return self.data.shape

    def to_complex(self):
        return to_complex(self.data)


def steering_vector(geom, theta, phi):
    """Kronecker-separable UPA response a_h(theta, phi) kron a_v(phi).

    Element (m, n) sits at index m * N_v + n and carries the phase
    2 pi (d_h m sin(theta) cos(phi) + d_v n sin(phi)).
    """
    if not -np.pi <= theta <= np.pi or not -np.pi / 2 <= phi <= np.pi / 2:
        raise ChannelModelError(f"angles (theta={theta}, phi={phi}) outside the array domain")
    a_h = np.exp(1j * 2 * np.pi * geom.spacing_h * np.arange(geom.n_h) * np.sin(theta) * np.cos(phi))
    a_v = np.exp(1j * 2 * np.pi * geom.spacing_v * np.arange(geom.n_v) * np.sin(phi))
    return np.kron(a_h, a_v)


def channel_matrix(paths, grid, geom_tx, geom_rx):
    """Complex channel of shape [L, K, N_rx, N_tx]."""
    if len(paths) == 0:
        raise ChannelModelError("a channel needs at least one path")
    t = grid.times()
    f = grid.frequencies()
    H = np.zeros((grid.n_time, grid.n_freq, geom_rx.n_elements, geom_tx.n_elements), dtype=np.complex128)
    for p in paths:
        a_rx = steering_vector(geom_rx, p.theta_rx, p.phi_rx)
        a_tx = steering_vector(geom_tx, p.theta_tx, p.phi_tx)
        spatial = p.gain * np.outer(a_rx, a_tx.conj())
        temporal = np.exp(1j * 2 * np.pi * p.doppler * t)
        spectral = np.exp(-1j * 2 * np.pi * f * p.delay)
        H += np.einsum("l,k,rs->lkrs", temporal, spectral, spatial)
    return H


def to_real(H):
    """[L, K, N_rx, N_tx] complex -> [L, K, N_rx*N_tx, 2] real, rx-major."""
    L, K = H.shape[:2]
    flat = H.reshape(L, K, -1)
    return np.stack([flat.real, flat.imag], axis=-1)


def to_complex(x):
    x = np.asarray(x)
    if x.shape[-1] != 2:
        raise ChannelModelError(f"last axis must hold (re, im), got shape {x.shape}")
    return x[..., 0] + 1j * x[..., 1]


def generate_channel(paths, grid, geom_tx, geom_rx):
    """Evaluate the multipath sum on the grid and map it to a CsiTensor."""
    H = channel_matrix(paths, grid, geom_tx, geom_rx)
    return CsiTensor(data=to_real(H), grid=grid, n_tx=geom_tx.n_elements, n_rx=geom_rx.n_elements)


def normalize_power(H):
    """Scale a channel (complex, or real with a trailing re/im axis) to unit mean element power."""
    H = np.asarray(H)
    power = np.mean(np.abs(H) ** 2) if np.iscomplexobj(H) else 2.0 * np.mean(H ** 2)
    if not power > 0:
        raise ChannelModelError("cannot normalize an all-zero channel")
    return H / np.sqrt(power)


def random_scene(seed, n_paths, mobility="pedestrian", delay_spread=300e-9, carrier=carrier_frequency,
                 decay=3.0, elevation_spread=np.pi / 4):
    """Draw a list of paths for one sample window.

    Parameters
    ----------
    seed : int
    n_paths : int
        P >= 1.
    mobility : str
        Key of `mobility_speeds`; bounds |nu_p| by v_max f_c / c.
    delay_spread : float
        Delays are uniform in [0, delay_spread] seconds.
    decay : float
        Path powers fall as exp(-decay * p / P) in delay order.

    Returns
    -------
    list of PathParams, sorted by delay, total power 1.
    """
    if n_paths < 1:
        raise ChannelModelError(f"need at least one path, got P={n_paths}")
    if mobility not in mobility_speeds:
        raise ChannelModelError(f"unknown mobility class {mobility!r}, expected one of {sorted(mobility_speeds)}")
    if delay_spread < 0:
        raise ChannelModelError("delay spread must be non-negative")

    rng = np.random.default_rng(seed)
    delays = np.sort(rng.uniform(0.0, delay_spread, n_paths))
    power = np.exp(-decay * np.arange(n_paths) / n_paths)
    power /= power.sum()
    phase = rng.uniform(-np.pi, np.pi, n_paths)
    gains = np.sqrt(power) * np.exp(1j * phase)
    theta_tx = rng.uniform(-np.pi, np.pi, n_paths)
    theta_rx = rng.uniform(-np.pi, np.pi, n_paths)
    phi_tx = rng.uniform(-elevation_spread, elevation_spread, n_paths)
    phi_rx = rng.uniform(-elevation_spread, elevation_spread, n_paths)
    nu_max = mobility_speeds[mobility] * carrier / speed_of_light
    doppler = nu_max * np.cos(rng.uniform(-np.pi, np.pi, n_paths))
    if nu_max == 0:
        doppler = np.zeros(n_paths)

    return [PathParams(gain_re=g.real, gain_im=g.imag, theta_tx=a, phi_tx=b, theta_rx=c, phi_rx=d,
                       delay=tau, doppler=nu)
            for g, a, b, c, d, tau, nu in zip(gains, theta_tx, phi_tx, theta_rx, phi_rx, delays, doppler)]
