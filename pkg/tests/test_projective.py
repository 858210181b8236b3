import math

import numpy as np
import pytest

from holonomylab.errors import DegenerateChainError, InputError, NormalizationError, NotALoopError
from holonomylab.koopman import FourierState
from holonomylab.oracles import convergence_sweep
from holonomylab.projective import (
    Ray,
    StateLoop,
    aa_connection_value,
    aa_phase_from_evolution,
    discrete_holonomy,
    fs_distance,
    horizontality_defect,
)
from holonomylab.utils.angles import wrap_scalar


class TestDiscreteHolonomy:
    @pytest.fixture
    def setup(self):
        """Three rays of C^2 whose Bargmann invariant has argument pi/4"""
        s = 1 / math.sqrt(2)
        return StateLoop.from_states(
            [np.array([1.0, 0.0]), np.array([s, s]), np.array([s, 1j * s])]
        )

    def test_bargmann_invariant(self, setup):
        """arg <1|2><2|3><3|1> = pi/4"""
        assert len(setup) == 3
        assert discrete_holonomy(setup) == pytest.approx(math.pi / 4, abs=1e-12)

    def test_rephasing_invariance(self, setup):
        """Changing representatives leaves the phase unchanged"""
        phases = np.exp(1j * np.array([0.3, -2.0, 1.1]))
        rephased = StateLoop(states=setup.states * phases[:, None])
        assert discrete_holonomy(rephased) == pytest.approx(discrete_holonomy(setup), abs=1e-14)

    def test_reversal_negates(self, setup):
        """Traversing the chain backwards negates the phase exactly"""
        assert discrete_holonomy(setup.reversed()) == -discrete_holonomy(setup)

    def test_orthogonal_neighbours(self):
        """A vanishing overlap leaves the phase undefined"""
        chain = StateLoop.from_states([np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0])])
        with pytest.raises(DegenerateChainError):
            discrete_holonomy(chain)


class TestRays:
    def test_fs_distance(self):
        """Distance is the angle between rays, blind to global phase"""
        u = np.array([1.0, 0.0])
        assert fs_distance(u, np.array([0.0, 1.0])) == pytest.approx(math.pi / 2, abs=1e-15)
        assert fs_distance(u, np.array([math.cos(0.3), math.sin(0.3)])) == pytest.approx(0.3, abs=1e-15)
        assert fs_distance(u, np.exp(0.7j) * u) < 1e-15
        assert fs_distance(Ray.of(np.array([3.0, 4.0])), np.array([6.0, 8.0])) < 1e-15

    def test_ray_normalization(self):
        """Ray representatives are unit vectors"""
        ray = Ray.of(np.array([3.0, 4.0j]))
        assert np.linalg.norm(ray.vector) == pytest.approx(1.0, abs=1e-15)
        with pytest.raises(NormalizationError):
            Ray.of(np.zeros(2))
        with pytest.raises(ValueError):
            Ray(vector=np.array([1.0, 1.0], dtype=complex))

    def test_connection_value(self):
        """A(X) = i Im <psi|X>; real directions are horizontal"""
        psi = np.array([1.0, 0.0], dtype=complex)
        assert aa_connection_value(psi, 1j * psi) == 1j
        assert aa_connection_value(psi, np.array([0.0, 1.0])) == 0j
        with pytest.raises(NormalizationError):
            aa_connection_value(2 * psi, psi)

    def test_horizontality_defect(self):
        """A real rotation is horizontal; a pure phase is not"""
        t = np.linspace(0.0, 1.0, 101)
        rotation = np.stack([np.cos(t), np.sin(t)], axis=1).astype(complex)
        assert horizontality_defect(rotation, t[1] - t[0]) < 1e-12
        phase = np.stack([np.exp(1j * t), np.zeros_like(t)], axis=1)
        assert horizontality_defect(phase, t[1] - t[0]) == pytest.approx(1.0, abs=1e-4)
        with pytest.raises(InputError):
            horizontality_defect(rotation[:2], 0.01)


class TestAAPhase:
    def test_eigenstate_has_no_geometric_phase(self):
        """An eigenstate loop carries only the dynamical phase"""
        result = aa_phase_from_evolution(FourierState.basis((1,)), [1.3], 2.0)
        assert abs(result.beta) < 1e-12
        assert abs(result.chain_beta) < 1e-12
        assert result.dynamical_phase == pytest.approx(2.6, rel=1e-15)

    def test_two_mode_state(self):
        """|c_1|^2 = 1/4 over one period gives beta = -pi/2"""
        state = FourierState.from_mapping({(0,): math.sqrt(3) / 2, (1,): 0.5}, n=1, n_max=4)
        result = aa_phase_from_evolution(state, [1.0], 2 * math.pi, chain_samples=10_000)
        assert result.beta == pytest.approx(-math.pi / 2, abs=1e-6)
        assert result.chain_beta == pytest.approx(-math.pi / 2, abs=1e-6)
        assert result.expectation == pytest.approx(0.25, abs=1e-15)
        assert result.closure_distance < 1e-9

    def test_unnormalized_input(self):
        """The state is normalized before evolution"""
        state = FourierState.from_mapping({(0,): math.sqrt(3), (1,): 1.0}, n=1, n_max=4)
        result = aa_phase_from_evolution(state, [1.0], 2 * math.pi, chain_samples=1000)
        assert result.beta == pytest.approx(-math.pi / 2, abs=1e-12)

    def test_open_curve(self):
        """Incommensurate frequencies do not close after one period"""
        state = FourierState.from_mapping({(1, 0): 1.0, (0, 1): 1.0}, n=2, n_max=2)
        with pytest.raises(NotALoopError):
            aa_phase_from_evolution(state, [1.0, math.sqrt(2.0)], 2 * math.pi)


def cone_loop(segments: int, opening: float) -> StateLoop:
    """Spin-1/2 states along a circle of polar angle `opening` on the Bloch sphere"""
    t = 2 * math.pi * np.arange(segments) / segments
    states = np.stack([np.full(segments, math.cos(opening / 2)), math.sin(opening / 2) * np.exp(1j * t)], axis=1)
    return StateLoop(states=states)


class TestRandomChains:
    @pytest.fixture
    def setup(self):
        return np.random.default_rng(7)

    def random_states(self, rng, count, dim=4):
        return rng.normal(size=(count, dim)) + 1j * rng.normal(size=(count, dim))

    def test_fs_distance_is_a_metric(self, setup):
        """Symmetry, zero on the diagonal and the triangle inequality on 1000 random triples"""
        for _ in range(1000):
            a, b, c = self.random_states(setup, 3)
            ab, bc, ac = fs_distance(a, b), fs_distance(b, c), fs_distance(a, c)
            assert fs_distance(b, a) == pytest.approx(ab, abs=1e-14)
            assert 0.0 <= ab <= math.pi / 2
            assert ac <= ab + bc + 1e-12
            assert fs_distance(a, a) < 1e-12

    def test_rephasing_invariance(self, setup):
        """Independent phases on every representative leave random chains unchanged"""
        for length in range(3, 13):
            chain = StateLoop(states=self.random_states(setup, length))
            phases = np.exp(1j * setup.uniform(-math.pi, math.pi, size=length))
            rephased = StateLoop(states=chain.states * phases[:, None])
            difference = wrap_scalar(discrete_holonomy(rephased) - discrete_holonomy(chain))
            assert abs(difference) < 1e-12

    def test_refinement(self):
        """Refining a smooth loop converges to half the enclosed solid angle at order at least 1"""
        opening = 1.0
        limit = wrap_scalar(2 * math.pi * math.sin(opening / 2) ** 2)
        resolutions = [16, 32, 64, 128, 256]
        sweep = convergence_sweep(
            lambda k: discrete_holonomy(cone_loop(k, opening)), resolutions, reference=[limit]
        )
        assert sweep.status == "algebraic"
        assert sweep.order >= 1.0
        betas = [discrete_holonomy(cone_loop(k, opening)) for k in resolutions]
        gaps = [abs(a - b) for a, b in zip(betas, betas[1:])]
        assert all(later < earlier for earlier, later in zip(gaps, gaps[1:]))
