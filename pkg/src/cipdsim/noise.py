"""Readout-noise chain: parametric voltage PSD, CDS variance, noise draws.

The voltage noise at the follower output is modeled as a white floor plus a
1/f term,

    S(f) = s_white + a_pink / f      [V^2/Hz],

low-pass filtered by a one-pole amplifier response and read out by
correlated double sampling (CDS), i.e. the difference of two samples taken
``delta_t_cds`` apart. The CDS transfer function is 4 sin^2(pi f dt), so the
charge-referred readout noise is

    sigma_e = sqrt( int S(f) * 4 sin^2(pi f dt) / (1 + (f/f_c)^2) df )
              / volts_per_carrier.

The integral runs from ``f_min`` (the 1/f divergence must be truncated; the
default 0.01 Hz is roughly the inverse observation time of a multi-minute
run) to ``100 * f_cutoff``, beyond which the low-pass has removed the band.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .detector import DetectorParams, volts_per_carrier

#: Relative tolerance demanded of the CDS variance quadrature.
CDS_QUAD_RTOL = 1e-6


class QuadratureError(RuntimeError):
    """The CDS variance integral failed to converge to tolerance."""


@dataclass(frozen=True)
class NoiseSpec:
    """Readout-noise description.

    Either a direct charge-referred sigma (``mode="direct"``) or a
    parametric PSD with CDS timing (``mode="psd"``). Noise is carried
    internally in electrons rms; voltage-referred quantities are converted
    at the boundary.
    """

    mode: str
    sigma_e_direct: float | None = None
    s_white: float = 0.0          # white PSD level, V^2/Hz
    a_pink: float = 0.0           # 1/f coefficient, V^2 (term a_pink / f)
    f_cutoff: float = 1.0e3       # amplifier low-pass cutoff, Hz
    delta_t_cds: float = 12.5e-3  # CDS sample separation, s
    f_min: float = 0.01           # lower integration bound, Hz

    def __post_init__(self) -> None:
        if self.mode not in ("direct", "psd"):
            raise ValueError(f"mode must be 'direct' or 'psd', got {self.mode!r}")
        if self.mode == "direct":
            # sigma 0 is allowed so noiseless simulation runs are expressible
            if self.sigma_e_direct is None or not self.sigma_e_direct >= 0:
                raise ValueError(
                    "direct mode requires sigma_e_direct >= 0, "
                    f"got {self.sigma_e_direct}"
                )
        else:
            if self.s_white < 0 or self.a_pink < 0:
                raise ValueError("s_white and a_pink must be >= 0")
            if self.s_white == 0 and self.a_pink == 0:
                raise ValueError("psd mode requires s_white or a_pink nonzero")
        if not self.f_cutoff > 0:
            raise ValueError(f"f_cutoff must be > 0, got {self.f_cutoff}")
        if not self.delta_t_cds > 0:
            raise ValueError(f"delta_t_cds must be > 0, got {self.delta_t_cds}")
        if not self.f_min > 0:
            raise ValueError(f"f_min must be > 0, got {self.f_min}")
        if not self.f_min < self.f_cutoff:
            raise ValueError(
                f"f_min ({self.f_min}) must be below f_cutoff ({self.f_cutoff})"
            )

    @classmethod
    def direct(cls, sigma_e: float) -> "NoiseSpec":
        """Charge-referred noise given directly in electrons rms."""
        return cls(mode="direct", sigma_e_direct=sigma_e)

    @classmethod
    def psd(
        cls,
        s_white: float,
        a_pink: float,
        f_cutoff: float = 1.0e3,
        delta_t_cds: float = 12.5e-3,
        f_min: float = 0.01,
    ) -> "NoiseSpec":
        """White + 1/f PSD with CDS timing."""
        return cls(
            mode="psd",
            s_white=s_white,
            a_pink=a_pink,
            f_cutoff=f_cutoff,
            delta_t_cds=delta_t_cds,
            f_min=f_min,
        )


def psd_value(spec: NoiseSpec, f):
    """One-sided voltage noise PSD at frequency ``f`` (V^2/Hz).

    ``f`` may be a scalar or array; every entry must be positive. Only
    meaningful for ``mode="psd"``.
    """
    if spec.mode != "psd":
        raise ValueError("psd_value requires a NoiseSpec in psd mode")
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr <= 0):
        raise ValueError("frequency must be > 0")
    out = spec.s_white + spec.a_pink / f_arr
    return float(out) if np.isscalar(f) else out


def _cds_band_integrals(spec: NoiseSpec) -> tuple[float, float, float, float]:
    """Smooth and cosine parts of the CDS band integral, with quad errors.

    Uses 4 sin^2(pi f dt) = 2 (1 - cos(2 pi f dt)): the smooth part is an
    ordinary adaptive quadrature, the oscillatory part goes through the
    cosine-weighted rule.
    """
    f_lo, f_hi = spec.f_min, 100.0 * spec.f_cutoff
    fc = spec.f_cutoff

    def band_psd(f):
        return (spec.s_white + spec.a_pink / f) / (1.0 + (f / fc) ** 2)

    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            i_smooth, err_smooth = quad(
                band_psd, f_lo, f_hi, epsabs=0.0, epsrel=1e-9, limit=400
            )
            i_cos, err_cos = quad(
                band_psd,
                f_lo,
                f_hi,
                weight="cos",
                wvar=2.0 * math.pi * spec.delta_t_cds,
                epsabs=max(1e-10 * abs(i_smooth), 1e-300),
                epsrel=1e-9,
                limit=400,
            )
        except IntegrationWarning as exc:
            raise QuadratureError(f"CDS variance quadrature failed: {exc}") from exc
    return i_smooth, i_cos, err_smooth, err_cos


def cds_sigma(spec: NoiseSpec, params: DetectorParams) -> float:
    """Charge-referred readout noise after CDS (electrons rms).

    In ``direct`` mode this is the configured sigma unchanged. In ``psd``
    mode the voltage variance is obtained by adaptive quadrature of the PSD
    times the CDS and low-pass transfer functions over
    ``[f_min, 100 * f_cutoff]`` and converted to electrons.

    Raises
    ------
    QuadratureError
        If the quadrature cannot deliver the variance to a relative 1e-6
        (relative to the pre-CDS band power when CDS cancellation makes the
        variance itself vanish, as for delta_t_cds -> 0).
    """
    if spec.mode == "direct":
        assert spec.sigma_e_direct is not None
        return spec.sigma_e_direct
    i_smooth, i_cos, err_smooth, err_cos = _cds_band_integrals(spec)
    variance = 2.0 * (i_smooth - i_cos)
    err_total = 2.0 * (err_smooth + err_cos)
    scale = max(abs(variance), 1e-2 * 2.0 * abs(i_smooth))
    if err_total > CDS_QUAD_RTOL * scale:
        raise QuadratureError(
            f"CDS variance quadrature error {err_total:.3e} exceeds "
            f"tolerance {CDS_QUAD_RTOL:.0e} * {scale:.3e}"
        )
    return math.sqrt(max(variance, 0.0)) / volts_per_carrier(params)


def sample_read_noise(sigma_e: float, rng: np.random.Generator, size=None):
    """Draw zero-mean Gaussian read noise with std dev ``sigma_e`` electrons.

    ``size=None`` returns one float; otherwise an array. ``sigma_e = 0`` is
    allowed and yields exact zeros.
    """
    if sigma_e < 0:
        raise ValueError(f"sigma_e must be >= 0, got {sigma_e}")
    if sigma_e == 0:
        return 0.0 if size is None else np.zeros(size)
    return rng.normal(0.0, sigma_e, size)
