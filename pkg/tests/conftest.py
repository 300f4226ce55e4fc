import numpy as np
import pytest

from pdesrc.domain import Box, SensorNetwork, SourceSet, UniformGrid


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_uniform_net_1d(n_sensors=41, dt=0.05, T=10.0, lo=0.0, hi=1.0):
    dx = (hi - lo) / (n_sensors - 1)
    grid = UniformGrid((n_sensors,), (dx,), (lo,))
    times = np.arange(0, T + 1e-12, dt)
    return SensorNetwork.uniform(grid, times, Box([lo], [hi]))


def scaled_parameter_errors(truth: SourceSet, estimate: SourceSet, scaling, T):
    """Max over sources/parameters of the scaled mismatch, after matching."""
    from pdesrc.estimator import match_sources

    perm, _ = match_sources(truth, estimate, scaling)
    est_loc = scaling.to_scaled(estimate.locations[perm])
    true_loc = scaling.to_scaled(truth.locations)
    loc = float(np.max(np.abs(est_loc - true_loc)))
    tau = float(np.max(np.abs(estimate.activations[perm] - truth.activations))) / T
    amp = float(
        np.max(np.abs(estimate.intensities[perm] - truth.intensities))
        / np.max(np.abs(truth.intensities))
    )
    return max(loc, tau, amp), {"location": loc, "activation": tau, "intensity": amp}
