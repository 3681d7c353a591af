import warnings

import numpy as np
import pytest

from invmode.plant import InverterParams, LineParams
from invmode.synth import ModePoint, apply_mode_point, default_params

# separation warnings are part of normal operation for stress designs
warnings.filterwarnings("ignore", category=UserWarning)

TABLE_LINE = LineParams(R=1e-3, L=1e-3)  # bench parameter set (analysis only)
SIM_LINE = LineParams(R=0.5, L=1e-3)  # lumped realistic series resistance

V0 = 169.7
RATING = 10.0


@pytest.fixture
def line():
    return TABLE_LINE


@pytest.fixture
def sim_line():
    return SIM_LINE


@pytest.fixture
def filter_params():
    return InverterParams(Li=1e-3, Ri=0.05, Ci=15e-6, vdc=450.0, v0=V0, rating=RATING)


def nominal_synth(line=SIM_LINE, **over):
    """The tuned baseline design used by the bundled scenarios."""
    kw = dict(a_d=0.767, a_q=0.26, alpha_th=600.0, wtheta=900.0)
    kw.update(over)
    return default_params(line, **kw)


def gfm_point(line=SIM_LINE, droop_d=1.2729, droop_q_hz=1.0):
    kv = 1.0 / (droop_d - line.Z)
    kth = RATING / (V0 * 2 * np.pi * droop_q_hz)
    return ModePoint(kv, kth)


@pytest.fixture
def nominal_gfm():
    p = nominal_synth()
    return apply_mode_point(p, gfm_point())
