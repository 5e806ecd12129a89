import csv

import numpy as np
import pytest

from hcpkit.measures import GridMeasure
from hcpkit.model import CaseTag, classify_case, linear_schedule, make_rate_spec, rate_spec_from
from hcpkit.ode import closed_endpoint, endpoint_check, evolve_epoch_ode, invariant_drift
from hcpkit.spp import IntervalLawPreset, interval_law_preset

SCH = linear_schedule(8)
MU = interval_law_preset(IntervalLawPreset("geometric", {"p": 0.5}, 1.0, 64.0))
AT_ZERO = GridMeasure(1.0, 0.0, np.array([1.0]))
S = np.geomspace(0.1, 5.0, 12)


@pytest.fixture(scope="module")
def traj():
    spec = make_rate_spec("ising_t0", 2, SCH)
    return evolve_epoch_ode(MU, AT_ZERO, spec, 20.0, 0.05, S, nu_x_max=64.0)


def test_mass_accounting(traj):
    assert np.allclose(traj.mu.sum(axis=1) + traj.leak_mu, 1.0, atol=1e-12)
    assert np.allclose(traj.nu.sum(axis=1) + traj.leak_nu, 1.0, atol=1e-12)
    assert traj.t[0] == 0.0 and traj.t[-1] == pytest.approx(20.0)
    # the active window empties out
    assert traj.H0[-1] < 1e-6 < traj.H0[0]


def test_conserved_functionals(traj):
    case = CaseTag("II", 0.0)
    assert invariant_drift(traj, case) < 1e-8
    assert invariant_drift(traj, case, which="leftmost") < 1e-8
    with pytest.raises(ValueError):
        invariant_drift(traj, case, s_grid=S[:-1])


def test_endpoint(traj):
    case = CaseTag("II", 0.0)
    ref = closed_endpoint(traj, case)
    out = endpoint_check(traj, case)
    assert out["G"] < 1e-6 and out["L"] < 1e-6
    assert endpoint_check(traj, {"G": ref["G"]}).keys() == {"G", "H0_end"}


@pytest.mark.parametrize("preset", ["paste_all", "east"])
def test_other_presets_conserve(preset):
    params = {"left_rate": 1.0} if preset == "east" else {}
    spec = make_rate_spec(preset, 2, SCH, params)
    case = classify_case(spec)
    tr = evolve_epoch_ode(MU, AT_ZERO, spec, 5.0, 0.05, S, nu_x_max=64.0)
    # RK4 error at this step size, well inside the default drift tolerance
    assert invariant_drift(tr, case) < 1e-6


def test_step_size_precondition():
    spec = make_rate_spec("ising_t0", 2, SCH)
    with pytest.raises(ValueError, match="exceeds 0.1"):
        evolve_epoch_ode(MU, None, spec, 1.0, 0.2)
    with pytest.raises(ValueError, match="multiple"):
        evolve_epoch_ode(MU, None, spec, 1.0, 0.03)


def test_general_rates_have_no_functional():
    spec = rate_spec_from(1.0, 0.3, 0.5, 2.0, 3.0)
    tr = evolve_epoch_ode(MU, None, spec, 1.0, 0.05, S)
    assert np.allclose(tr.mu.sum(axis=1) + tr.leak_mu, 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        invariant_drift(tr, CaseTag("general", None))
    with pytest.raises(ValueError):
        tr.first_point_at(0)


def test_csv_columns(traj, tmp_path):
    p = tmp_path / "ode.csv"
    traj.to_csv(p, CaseTag("II", 0.0))
    with open(p) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "s", "G", "H", "L", "drift"]
    assert len(rows) == 1 + len(traj.t) * len(S)
    assert float(rows[1][5]) == 0.0
