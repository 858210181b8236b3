import itertools
import math

import numpy as np
import pytest
from scipy.special import i0

from holonomylab.dynamics import (
    DiskRegion,
    FlowSpec,
    PhasePoint,
    SublevelRegion,
    contraction_defect,
    fibrewise_hamiltonian_field,
    flow,
    flow_arrays,
    flow_jacobian_determinant,
    liouville_drift,
    resonance_classify,
    time_average,
    torus_average,
)
from holonomylab.errors import ConfigurationError, InputError, ResourceError, ShapeError
from holonomylab.families import GeneralizedOscillatorFamily, QuarticFamily


class TestFlow:
    @pytest.fixture
    def setup(self):
        """Exact oscillator flow and leapfrog quartic flow"""
        oscillator = FlowSpec(family=GeneralizedOscillatorFamily(), x=(2.0, 0.3, 1.5))
        quartic = FlowSpec(family=QuarticFamily(), x=(1.0,), dt=1e-3, scheme="leapfrog")
        return oscillator, quartic

    def test_exact_flow_conserves_energy(self, setup):
        """The exact oscillator flow keeps H to rounding"""
        oscillator, _ = setup
        family = oscillator.family
        q = np.array([0.3, -1.2, 0.8])
        p = np.array([1.0, 0.1, -0.4])
        q_t, p_t = flow_arrays(q, p, oscillator, 37.5)
        np.testing.assert_allclose(
            family.hamiltonian(q_t, p_t, oscillator.x), family.hamiltonian(q, p, oscillator.x), rtol=1e-12
        )

    @pytest.mark.parametrize("s, t", [(3.1, -3.1), (0.4, 1.7), (-2.5, 11.0), (25.0, 0.3)])
    def test_exact_flow_composes(self, setup, s, t):
        """flow(flow(y, s), t) = flow(y, s + t)"""
        oscillator, _ = setup
        start = PhasePoint(q=(0.7,), p=(-0.2,))
        twice = flow(flow(start, oscillator, s), oscillator, t)
        once = flow(start, oscillator, s + t)
        assert twice.q[0] == pytest.approx(once.q[0], abs=1e-10)
        assert twice.p[0] == pytest.approx(once.p[0], abs=1e-10)

    def test_leapfrog_energy_error(self, setup):
        """Leapfrog keeps the quartic energy to O(dt^2)"""
        _, quartic = setup
        q = np.array([1.0, -0.5])
        p = np.array([0.0, 0.8])
        q_t, p_t = flow_arrays(q, p, quartic, 10.0)
        error = np.abs(quartic.family.hamiltonian(q_t, p_t, quartic.x) - quartic.family.hamiltonian(q, p, quartic.x))
        assert np.max(error) < 1e-5

    def test_flows_are_symplectic(self, setup):
        """det DT_t = 1 for both schemes at random points"""
        oscillator, quartic = setup
        rng = np.random.default_rng(17)
        for q, p in rng.uniform(-1.0, 1.0, size=(20, 2)):
            point = PhasePoint(q=(q,), p=(p,))
            assert flow_jacobian_determinant(point, oscillator, 2.0) == pytest.approx(1.0, abs=1e-8)
            assert flow_jacobian_determinant(point, quartic, 1.0, step=1e-5) == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.slow
    def test_leapfrog_long_run_energy(self, setup):
        """Relative quartic energy error stays below 1e-5 up to t = 100"""
        _, quartic = setup
        q = np.array([1.0, -0.5, 0.2, 1.3])
        p = np.array([0.0, 0.8, -1.1, 0.4])
        energy = quartic.family.hamiltonian(q, p, quartic.x)
        for _ in range(10):
            q, p = flow_arrays(q, p, quartic, 10.0)
            drift = np.abs(quartic.family.hamiltonian(q, p, quartic.x) - energy) / energy
            assert np.max(drift) < 1e-5

    def test_scheme_family_mismatch(self, setup):
        """exact-oscillator needs the oscillator; leapfrog needs a separable Hamiltonian"""
        with pytest.raises(ConfigurationError):
            flow_arrays([1.0], [0.0], FlowSpec(family=QuarticFamily(), x=(1.0,)), 1.0)
        sheared = FlowSpec(family=GeneralizedOscillatorFamily(), x=(2.0, 0.3, 1.5), scheme="leapfrog")
        with pytest.raises(ConfigurationError):
            flow_arrays([1.0], [0.0], sheared, 1.0)

    def test_fibrewise_field(self):
        """X_H equals (dH/dp, -dH/dq) and contracts the symplectic form to dH"""
        family = GeneralizedOscillatorFamily()
        x = (2.0, 0.3, 1.5)

        def h(q, p, coords):
            return float(np.sum(family.hamiltonian(q, p, coords)))

        point = PhasePoint(q=(0.4,), p=(-0.9,))
        field = fibrewise_hamiltonian_field(h, point, x)
        dq, dp = family.hamiltonian_gradient(np.array(point.q), np.array(point.p), x)
        np.testing.assert_allclose(field[0], dp, atol=1e-8)
        np.testing.assert_allclose(field[1], -dq, atol=1e-8)
        defect_q, defect_p = contraction_defect(h, point, x, field)
        assert max(abs(defect_q[0]), abs(defect_p[0])) < 1e-7


class TestLiouville:
    def test_rotation_keeps_radial_exactly(self):
        """On the rotation the radial observable does not move and every drift is within 3 sigma"""
        spec = FlowSpec(family=GeneralizedOscillatorFamily(), x=(1.0, 0.0, 1.0))
        report = liouville_drift(
            spec, 10.0, 100_000, ["q", "p", "q_positive", "radial"], DiskRegion(radius=2.0), seed=3
        )
        assert report.passed
        radial = report.observables.index("radial")
        assert report.drifts[radial] < 1e-12
        assert report.max_pointwise_change[radial] < 1e-12
        assert report.substreams == 10

    def test_leapfrog_quartic(self):
        """Uniform measure on a sublevel set stays invariant under leapfrog"""
        spec = FlowSpec(family=QuarticFamily(), x=(1.0,), dt=1e-3, scheme="leapfrog")
        region = SublevelRegion(energy=1.0, half_width=1.5)
        report = liouville_drift(spec, 2.0, 100_000, ["q", "p", "q_positive"], region, seed=5)
        assert report.passed
        assert all(change > 0 for change in report.max_pointwise_change)

    @pytest.mark.slow
    def test_leapfrog_quartic_long_run(self):
        """N = 1e5 uniform points on the quartic sublevel set, flowed to t = 10, keep every mean within 3 sigma"""
        spec = FlowSpec(family=QuarticFamily(), x=(1.0,), dt=1e-3, scheme="leapfrog")
        region = SublevelRegion(energy=1.0, half_width=1.5)
        report = liouville_drift(spec, 10.0, 100_000, ["q", "p", "q_positive"], region, seed=11)
        assert report.passed
        assert report.substreams == 10

    def test_deterministic_across_workers(self):
        """The same seed gives bit-identical results for any worker count"""
        spec = FlowSpec(family=GeneralizedOscillatorFamily(), x=(2.0, 0.3, 1.5))
        region = SublevelRegion(energy=1.0)
        one = liouville_drift(spec, 4.0, 20_000, ["q", "p"], region, seed=9, chunk_size=5000)
        four = liouville_drift(spec, 4.0, 20_000, ["q", "p"], region, seed=9, chunk_size=5000, workers=4)
        assert one.model_dump() == four.model_dump()

    def test_input_errors(self):
        """Too few samples and unknown observables are rejected"""
        spec = FlowSpec(family=GeneralizedOscillatorFamily(), x=(1.0, 0.0, 1.0))
        with pytest.raises(InputError):
            liouville_drift(spec, 1.0, 999, ["q"], DiskRegion(), seed=0)
        with pytest.raises(ConfigurationError):
            liouville_drift(spec, 1.0, 1000, ["momentum"], DiskRegion(), seed=0)


class TestResonance:
    def test_witness(self):
        """Omega = (1, 2) is resonant with witness (2, -1)"""
        verdict = resonance_classify([1.0, 2.0], 10, 1e-9)
        assert verdict.resonant
        assert verdict.witness == (2, -1)

    def test_golden_mean_is_nonresonant(self):
        """(1, golden mean) has no resonance up to |k| <= 10"""
        verdict = resonance_classify([1.0, (1 + math.sqrt(5)) / 2], 10, 1e-9)
        assert not verdict.resonant
        assert verdict.witness is None
        assert verdict.searched == (21**2 - 1) // 2

    def test_matches_brute_force(self):
        """Agreement with an exhaustive search on 100 random frequency vectors"""
        rng = np.random.default_rng(2024)
        for trial in range(100):
            if trial % 2:
                omega = rng.uniform(0.5, 2.0, size=2)
            else:
                omega = np.array([1.0, rng.integers(1, 8) / rng.integers(1, 8)])
            combos = [
                abs(float(np.dot(k, omega)))
                for k in itertools.product(range(-10, 11), repeat=2)
                if any(k)
            ]
            verdict = resonance_classify(omega, 10, 1e-9)
            assert verdict.resonant == (min(combos) < 1e-9)
            assert verdict.smallest_combination == pytest.approx(min(combos), abs=1e-12)

    def test_search_limit(self):
        """Search spaces beyond the vector limit are refused"""
        with pytest.raises(ResourceError):
            resonance_classify(np.ones(8), 10, 1e-9)


class TestTorusAverages:
    def test_spectral_quadrature(self):
        """The trapezoid rule on an analytic integrand is exact to rounding by Q = 32"""
        exact = i0(1.0) ** 2
        average = torus_average(lambda phi: np.exp(np.cos(phi[:, 0]) + np.sin(phi[:, 1])), 2, 32)
        assert abs(average - exact) < 1e-14

    def test_shift_invariance(self):
        """Shifting the sampler by a fixed angle leaves the average unchanged"""

        def sampler(phi):
            return np.exp(np.cos(phi[:, 0]) + np.sin(phi[:, 1]))

        plain = torus_average(sampler, 2, 32)
        for shift in [(0.3, -1.1), (np.pi / 7, 2.0), (5.0, 0.0)]:
            shifted = torus_average(lambda phi, c=np.asarray(shift): sampler(phi + c), 2, 32)
            assert abs(shifted - plain) < 1e-13

    def test_sampler_shape(self):
        """Samplers must return one value per node"""
        with pytest.raises(ShapeError):
            torus_average(lambda phi: np.zeros(3), 2, 8)

    def test_time_average_matches_space_average(self):
        """On a nonresonant torus the time average approaches the torus average"""
        omega = [1.0, math.sqrt(2.0)]
        value = time_average(lambda phi: np.cos(phi[:, 0]) * np.cos(phi[:, 1]), omega, [0.3, 0.1], 1e4)
        assert abs(value) < 1e-3
