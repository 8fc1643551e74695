"""Photo-carrier statistics for gated attenuated coherent pulses.

A CW laser gated into pulses carries Poissonian photon numbers; fiber
coupling and detection are independent per-photon losses, so the carrier
count per pulse stays Poissonian with the mean scaled by the efficiencies
(Poisson thinning).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import DetectorParams


@dataclass(frozen=True)
class PulseConfig:
    """Pulsed-source settings.

    ``mean_photons_at_fiber`` is the mean photon number per pulse arriving
    at the fiber focuser, before coupling and detection losses.
    """

    mean_photons_at_fiber: float
    pulse_width: float = 2.5e-3   # s
    rep_rate: float = 40.0        # Hz

    def __post_init__(self) -> None:
        if not self.mean_photons_at_fiber >= 0:
            raise ValueError(
                f"mean_photons_at_fiber must be >= 0, got {self.mean_photons_at_fiber}"
            )
        if not self.pulse_width > 0:
            raise ValueError(f"pulse_width must be > 0, got {self.pulse_width}")
        if not self.rep_rate > 0:
            raise ValueError(f"rep_rate must be > 0, got {self.rep_rate}")
        if not self.pulse_width < 1.0 / self.rep_rate:
            raise ValueError(
                f"pulse_width ({self.pulse_width}) must fit in the frame "
                f"period (1/{self.rep_rate} s)"
            )


def mean_carriers(cfg: PulseConfig, params: DetectorParams) -> float:
    """Mean photo-carriers generated per pulse."""
    return cfg.mean_photons_at_fiber * params.eta_c * params.eta_q


def sample_photocarriers(
    cfg: PulseConfig,
    params: DetectorParams,
    rng: np.random.Generator,
    mode: str = "direct",
    size=None,
):
    """Draw per-pulse photo-carrier counts.

    ``mode="direct"`` draws Poisson with mean ``mean_carriers``;
    ``mode="two_stage"`` draws the photon number first and thins it with a
    binomial of success probability ``eta_c * eta_q``. The two modes produce
    the same distribution (thinning theorem) and are kept separate so that
    equivalence is testable.
    """
    if mode == "direct":
        return rng.poisson(mean_carriers(cfg, params), size)
    if mode == "two_stage":
        photons = rng.poisson(cfg.mean_photons_at_fiber, size)
        return rng.binomial(photons, params.eta_c * params.eta_q)
    raise ValueError(f"mode must be 'direct' or 'two_stage', got {mode!r}")
