import json

import pytest

from cipdsim import DetectorParams, NoiseSpec, default_config_path


@pytest.fixture
def device():
    """Reference device: 0.054 pF, unity follower gain, 80%/80% efficiencies."""
    return DetectorParams(
        c_input=0.054e-12,
        g_m=1.0,
        eta_q=0.8,
        eta_c=0.8,
        leakage_rate=500.0 / 3600.0,
        reset_threshold=30e-3,
    )


@pytest.fixture
def calibrated_noise():
    """PSD noise solved so the total dark sigma is 0.26 e at 40 Hz."""
    raw = json.loads(default_config_path().read_text())["noise"]
    return NoiseSpec.psd(
        s_white=raw["s_white_v2hz"],
        a_pink=raw["a_pink_v2"],
        f_cutoff=raw["f_cutoff_hz"],
        delta_t_cds=raw["delta_t_cds_s"],
        f_min=raw["f_min_hz"],
    )
