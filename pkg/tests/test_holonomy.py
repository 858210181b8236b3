import math

import numpy as np
import pytest

from holonomylab.errors import (
    ChartUnavailableError,
    InputError,
    OverlapDomainError,
    ShapeError,
    StencilError,
)
from holonomylab.families import (
    AnharmonicTorusFamily,
    GeneralizedOscillatorFamily,
    PolynomialGauge,
    QuarticFamily,
    RegaugedFamily,
)
from holonomylab.holonomy import (
    berry_chain,
    berry_overlap,
    berry_phase,
    berry_phases,
    hannay_holonomy,
    hannay_one_form,
    relation_report,
)
from holonomylab.loops import CircleLoop, ConstantLoop, PolylineLoop
from holonomylab.oracles import convergence_sweep, oscillator_hannay_form, reference_loop_integral

MODES = [(m,) for m in range(-3, 4)]


def polygon_area(segments: int, radius: float) -> float:
    return 0.5 * segments * radius**2 * math.sin(2 * math.pi / segments)


class TestOscillatorHolonomy:
    @pytest.fixture
    def setup(self):
        """The oscillator on the standard circle around (2, 0, 1)"""
        family = GeneralizedOscillatorFamily()
        loop = CircleLoop(center=(2.0, 0.0, 1.0), radius=0.5, plane=(0, 1))
        reference = float(reference_loop_integral(oscillator_hannay_form, loop)[0])
        return family, loop, reference

    def test_one_form_matches_closed_form(self, setup):
        """The torus-averaged angle derivative equals -(Z dY - Y dZ) / (2 omega Z)"""
        family, _, _ = setup
        for x in [(2.0, 0.0, 1.0), (2.0, 0.3, 1.5), (0.7, -0.2, 3.0)]:
            sample = hannay_one_form(family, [1.0], x, quadrature=64)
            np.testing.assert_allclose(sample.matrix(), oscillator_hannay_form(x), atol=1e-8)
            assert len(sample.steps) == 3

    def test_angle_matches_smooth_loop_integral(self, setup):
        """theta at K = 512 is within 1e-5 of the line integral on the smooth circle"""
        family, loop, reference = setup
        result = hannay_holonomy(family, [1.0], loop, segments=512, quadrature=256)
        assert result.theta_raw[0] == pytest.approx(reference, abs=1e-5)
        assert result.winding == [0]
        assert result.theta == result.theta_raw

    def test_action_independence(self, setup):
        """The oscillator angle does not depend on the torus"""
        family, loop, _ = setup
        small = hannay_holonomy(family, [0.5], loop, segments=64, quadrature=32)
        large = hannay_holonomy(family, [3.0], loop, segments=64, quadrature=32)
        assert small.theta_raw[0] == pytest.approx(large.theta_raw[0], abs=1e-9)

    def test_relation_on_standard_circle(self, setup):
        """|wrap(beta_m - m theta)| < 1e-6 for m = -3..3 at K = 512, Q = 256"""
        family, loop, _ = setup
        report = relation_report(MODES, family, [1.0], loop, segments=512, quadrature=256)
        assert report.max_residual < 1e-6
        assert report.relation_holds
        assert report.zero_check.holds
        assert report.zero_check.zero_mode_phase == 0.0
        assert report.nondegeneracy.degenerate
        for relation in report.relations:
            assert relation.s_value == pytest.approx(relation.mode[0] * report.theta_raw[0], abs=1e-15)

    def test_constant_loop(self, setup):
        """A constant loop has zero angle and zero phases exactly"""
        family, loop, _ = setup
        constant = ConstantLoop(point=(2.0, 0.0, 1.0))
        assert hannay_holonomy(family, [1.0], constant, segments=64, quadrature=64).theta_raw == [0.0]
        assert berry_phases(MODES, family, [1.0], constant, segments=64, quadrature=64) == [0.0] * len(MODES)
        report = relation_report(MODES, family, [1.0], constant, segments=64, quadrature=64)
        assert report.max_residual == 0.0
        assert report.zero_check.constant_loop_theta == [0.0]

    def test_gauge_invariance(self, setup):
        """A quadratic change of angle origin leaves theta and beta unchanged"""
        family, loop, _ = setup
        gauge = PolynomialGauge(coefficients=[0.3, -0.2, 0.1], exponents=[[1, 0, 0], [0, 2, 0], [1, 0, 1]])
        regauged = RegaugedFamily(family, gauge)
        plain = relation_report(MODES, family, [1.0], loop, segments=128, quadrature=64)
        shifted = relation_report(MODES, regauged, [1.0], loop, segments=128, quadrature=64)
        assert shifted.theta_raw[0] == pytest.approx(plain.theta_raw[0], abs=1e-8)
        for a, b in zip(plain.relations, shifted.relations):
            assert b.berry_phase == pytest.approx(a.berry_phase, abs=1e-8)
        assert shifted.gauge != plain.gauge

    def test_reversal_negates_exactly(self, setup):
        """Walking the loop backwards negates theta and every beta bit for bit"""
        family, loop, _ = setup
        forward = relation_report(MODES, family, [1.0], loop, segments=64, quadrature=32)
        backward = relation_report(MODES, family, [1.0], loop.reversed(), segments=64, quadrature=32)
        assert backward.theta_raw == [-t for t in forward.theta_raw]
        assert [r.berry_phase for r in backward.relations] == [-r.berry_phase for r in forward.relations]

    def test_shifted_base_point(self, setup):
        """Starting the same polygon at another vertex gives the same numbers"""
        family, loop, _ = setup
        segments = 64
        shifted = loop.model_copy(update={"phase": 2 * math.pi * 5 / segments})
        a = relation_report(MODES, family, [1.0], loop, segments=segments, quadrature=32)
        b = relation_report(MODES, family, [1.0], shifted, segments=segments, quadrature=32)
        assert b.theta_raw[0] == pytest.approx(a.theta_raw[0], abs=1e-10)
        for x, y in zip(a.relations, b.relations):
            assert y.berry_phase == pytest.approx(x.berry_phase, abs=1e-10)

    def test_warped_parametrization(self, setup):
        """A non-uniform parametrization converges to the same angle"""
        family, loop, reference = setup
        warped = loop.model_copy(update={"warp": 0.3})
        result = hannay_holonomy(family, [1.0], warped, segments=512, quadrature=64)
        assert result.theta_raw[0] == pytest.approx(reference, abs=2e-5)

    def test_two_turns(self, setup):
        """Two turns on 2K segments give twice one turn on K"""
        family, loop, _ = setup
        once = relation_report(MODES, family, [1.0], loop, segments=64, quadrature=32)
        twice = relation_report(
            MODES, family, [1.0], loop.model_copy(update={"turns": 2}), segments=128, quadrature=32
        )
        assert twice.theta_raw[0] == pytest.approx(2 * once.theta_raw[0], abs=1e-10)
        assert twice.winding == [0]

    def test_polyline_loop(self, setup):
        """Polygonal loops are accepted and satisfy the relation"""
        family, _, _ = setup
        square = PolylineLoop(vertices=[(1.8, -0.2, 1.0), (2.2, -0.2, 1.0), (2.2, 0.2, 1.0), (1.8, 0.2, 1.0)])
        report = relation_report(MODES, family, [1.0], square, segments=256, quadrature=64)
        assert report.theta_raw[0] != 0.0
        assert report.max_residual < 1e-6

    def test_deterministic_across_workers(self, setup):
        """Worker count does not change a single bit"""
        family, loop, _ = setup
        one = relation_report(MODES, family, [1.0], loop, segments=64, quadrature=32)
        four = relation_report(MODES, family, [1.0], loop, segments=64, quadrature=32, workers=4)
        assert one.model_dump() == four.model_dump()

    def test_berry_converges_to_the_angle(self, setup):
        """beta_1 approaches the smooth-loop angle at second order in 1/K"""
        family, loop, reference = setup
        sweep = convergence_sweep(
            lambda k: berry_phase((1,), family, [1.0], loop, segments=k, quadrature=64),
            [32, 64, 128, 256],
            reference=[reference],
        )
        assert sweep.status == "algebraic"
        assert sweep.order > 1.5

    def test_regauge_shifts_one_form(self, setup):
        """Phi -> Phi + g(x) adds exactly dg/dx to every sample of A"""
        family, _, _ = setup
        gauge = PolynomialGauge(
            coefficients=[0.3, -0.2, 0.1, 0.05], exponents=[[1, 0, 0], [0, 2, 0], [1, 0, 1], [0, 3, 0]]
        )
        regauged = RegaugedFamily(family, gauge)
        for x in [(2.0, 0.0, 1.0), (2.0, 0.3, 1.5), (0.7, -0.2, 3.0)]:
            plain = hannay_one_form(family, [1.0], x, quadrature=64).matrix()
            shifted = hannay_one_form(regauged, [1.0], x, quadrature=64).matrix()
            np.testing.assert_allclose(shifted - plain, [gauge.gradient(np.asarray(x))], atol=1e-8)

    def test_loop_without_shear(self, setup):
        """The one-form vanishes on the Y = 0 plane, so a loop inside it has no angle"""
        family, _, _ = setup
        loop = CircleLoop(center=(2.0, 0.0, 1.0), radius=0.5, plane=(0, 2))
        result = hannay_holonomy(family, [1.0], loop, segments=128, quadrature=64)
        assert abs(result.theta_raw[0]) < 1e-8
        assert result.winding == [0]

    def test_angle_converges(self, setup):
        """theta_K approaches the smooth-loop angle at order at least 1"""
        family, loop, reference = setup
        sweep = convergence_sweep(
            lambda k: hannay_holonomy(family, [1.0], loop, segments=k, quadrature=64).theta_raw,
            [64, 128, 256, 512],
            reference=[reference],
        )
        assert sweep.status == "algebraic"
        assert sweep.order >= 1.0

    def test_residuals_converge(self, setup):
        """Every relation residual falls towards zero at order at least 1"""
        family, loop, _ = setup
        sweep = convergence_sweep(
            lambda k: [r.residual for r in relation_report(MODES, family, [1.0], loop, k, quadrature=64).relations],
            [64, 128, 256, 512],
            reference=[0.0] * len(MODES),
        )
        assert sweep.status == "algebraic"
        assert sweep.order >= 1.0
        assert all(later < earlier for earlier, later in zip(sweep.errors, sweep.errors[1:]))

    def test_counts_chart_evaluations(self, setup):
        """Each moving segment evaluates the chart on the inverse grid and two stencil points per direction"""
        family, loop, _ = setup
        result = hannay_holonomy(family, [1.0], loop, segments=16, quadrature=8)
        assert result.evaluations == 16 * (8 + 2 * 8 * 3)
        chain = berry_chain(MODES, family, [1.0], loop, segments=16, quadrature=8)
        assert chain.evaluations == 16 * 3 * 8
        assert chain.phases == berry_phases(MODES, family, [1.0], loop, segments=16, quadrature=8)
        constant = ConstantLoop(point=(2.0, 0.0, 1.0))
        assert hannay_holonomy(family, [1.0], constant, segments=16, quadrature=8).evaluations == 0


class TestTorusFamily:
    @pytest.fixture
    def setup(self):
        """A one-degree anharmonic torus with constant curvature and a zero-mean ripple"""
        family = AnharmonicTorusFamily(omega=[1.0], beta=[0.2], curvature=[0.7], ripple=0.1)
        loop = CircleLoop(center=(0.3, -0.2), radius=1.0)
        return family, loop

    def test_angle_is_curvature_times_area(self, setup):
        """The midpoint sum is kappa times the polygon area"""
        family, loop = setup
        result = hannay_holonomy(family, [1.0], loop, segments=64, quadrature=16)
        assert result.theta_raw[0] == pytest.approx(0.7 * polygon_area(64, 1.0), abs=1e-12)
        assert result.evaluations == 64 * 2 * 16

    def test_phase_is_mode_times_angle(self, setup):
        """beta_m = m theta for a curvature-only chart deformation"""
        family, loop = setup
        report = relation_report([(-2,), (0,), (1,), (3,)], family, [1.0], loop, segments=64, quadrature=16)
        assert report.max_residual < 1e-12
        assert not report.nondegeneracy.degenerate

    def test_winding(self):
        """Angles beyond pi are reported unwrapped with their winding number"""
        family = AnharmonicTorusFamily(omega=[1.0], beta=[0.0], curvature=[2.5])
        loop = CircleLoop(center=(0.0, 0.0), radius=1.0)
        report = relation_report([(1,), (2,)], family, [1.0], loop, segments=256, quadrature=8)
        expected = 2.5 * polygon_area(256, 1.0)
        assert report.theta_raw[0] == pytest.approx(expected, abs=1e-12)
        assert report.winding == [1]
        assert report.theta[0] == pytest.approx(expected - 2 * math.pi, abs=1e-12)
        assert report.max_residual < 1e-12

    def test_two_angles(self):
        """Each angle picks up its own curvature; mixed modes add"""
        family = AnharmonicTorusFamily(omega=[1.0, math.sqrt(2.0)], beta=[0.1, 0.1], curvature=[0.5, -0.3])
        loop = CircleLoop(center=(0.0, 0.0), radius=0.8)
        report = relation_report([(1, 0), (0, 1), (2, -1)], family, [1.0, 1.0], loop, segments=64, quadrature=8)
        area = polygon_area(64, 0.8)
        np.testing.assert_allclose(report.theta_raw, [0.5 * area, -0.3 * area], atol=1e-12)
        assert report.max_residual < 1e-12


class TestHolonomyErrors:
    def test_canonical_family_has_no_chart(self):
        """The quartic family cannot be differentiated in its angle"""
        with pytest.raises(ChartUnavailableError):
            hannay_holonomy(QuarticFamily(), [1.0], ConstantLoop(point=(1.0,)))
        with pytest.raises(ChartUnavailableError):
            berry_phase((1,), QuarticFamily(), [1.0], ConstantLoop(point=(1.0,)))

    def test_stencil_leaves_domain(self):
        """A finite-difference step larger than the distance to the boundary is refused"""
        with pytest.raises(StencilError):
            hannay_one_form(GeneralizedOscillatorFamily(), [1.0], (1.0, 0.0, 1e-6))

    def test_too_few_segments(self):
        """Loops need at least 8 segments"""
        loop = CircleLoop(center=(2.0, 0.0, 1.0), radius=0.5)
        with pytest.raises(InputError):
            hannay_holonomy(GeneralizedOscillatorFamily(), [1.0], loop, segments=4)

    def test_mode_length(self):
        """Modes must have one entry per angle"""
        loop = CircleLoop(center=(2.0, 0.0, 1.0), radius=0.5)
        with pytest.raises(ShapeError):
            berry_phases([(1, 0)], GeneralizedOscillatorFamily(), [1.0], loop, segments=8)

    def test_overlap_outside_domain(self):
        """Overlaps with points outside the chart domain are refused"""
        family = GeneralizedOscillatorFamily()
        with pytest.raises(OverlapDomainError):
            berry_overlap((1,), family, [1.0], (2.0, 0.0, 1.0), (-1.0, 0.0, 1.0))

    def test_overlap_of_nearby_tori(self):
        """Nearby eigenvectors overlap almost fully; the zero mode exactly"""
        family = GeneralizedOscillatorFamily()
        overlap = berry_overlap((1,), family, [1.0], (2.0, 0.0, 1.0), (2.0, 0.01, 1.0))
        assert 0.999 < abs(overlap) <= 1.0 + 1e-15
        assert berry_overlap((0,), family, [1.0], (2.0, 0.0, 1.0), (2.0, 0.01, 1.0)) == 1.0
        reverse = berry_overlap((1,), family, [1.0], (2.0, 0.01, 1.0), (2.0, 0.0, 1.0))
        assert reverse == overlap.conjugate()

    def test_empty_mode_list(self):
        """The relation needs at least one mode"""
        loop = CircleLoop(center=(2.0, 0.0, 1.0), radius=0.5)
        with pytest.raises(InputError):
            relation_report([], GeneralizedOscillatorFamily(), [1.0], loop)
