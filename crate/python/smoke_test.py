"""Smoke test for the gasmix extension module: steady state and a short
simulation of a single pipe."""

import math

import gasmix

PIPE = """
[gas]
sigma1_m_s = 377.0
sigma2_m_s = 1055.6

[[nodes]]
id = "in"
role = "slack"

[[nodes]]
id = "out"
role = "withdrawal"

[[pipes]]
id = "pipe"
from = "in"
to = "out"
length_km = 20.0
diameter_m = 0.5
friction = 0.011

[boundaries.in]
pressure_mpa = 6.0
h2_mass_fraction = 0.1

[boundaries.out]
outflow_flux_kg_m2_s = 60.0

[simulation]
horizon_hr = 1.0
samples = 10
refinement_km = 0.5
"""


def test_steady_matches_pipe_law():
    state = gasmix.steady(PIPE)
    c2 = 0.9 * 377.0**2 + 0.1 * 1055.6**2
    want = math.sqrt(6e6**2 - 0.011 * c2 * 60.0**2 * 20e3 / 0.5) / 1e6
    assert abs(state["out"]["p_mpa"] - want) < 1e-2 * want
    assert state["in"]["p_mpa"] == 6.0


def test_simulate_returns_columns():
    t, cols = gasmix.simulate(PIPE)
    assert len(t) == 11
    assert len(cols["out.p_mpa"]) == len(t)


def test_bad_input_raises_value_error():
    try:
        gasmix.steady("[gas]")
    except ValueError:
        return
    raise AssertionError("expected ValueError")


if __name__ == "__main__":
    test_steady_matches_pipe_law()
    test_simulate_returns_columns()
    test_bad_input_raises_value_error()
    print("gasmix", gasmix.__version__, "ok")
