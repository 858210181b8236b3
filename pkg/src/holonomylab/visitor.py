import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from typing import Optional, Union

import numpy as np

from .dynamics import FlowSpec, liouville_drift, resonance_classify
from .errors import ConfigurationError
from .families import CanonicalFamily, HamiltonianFamily, IntegrableFamily
from .holonomy import berry_chain, berry_phases, hannay_holonomy, hannay_one_form, relation_report
from .koopman import FourierState, KoopmanPropagator, composition_apply, evolve
from .oracles import adiabatic_hannay_oracle, convergence_sweep
from .projective import aa_phase_from_evolution, horizontality_defect
from .reports import CommandOutcome, Table
from .runs import (
    AAPhaseRun,
    BerryRun,
    HannayRun,
    KoopmanCheckRun,
    LiouvilleCheckRun,
    ResonanceRun,
    VerifyRelationRun,
)
from .stats import Stats, StatsDict
from .utils.angles import wrap_scalar
from .utils.parallel import SUBSTREAM_SCHEME, substream

logger = logging.getLogger(__name__)


class CommandVisitor(ABC):
    """Abstract base class for command visitors"""

    @abstractmethod
    def visit_hannay(self, run: HannayRun):
        pass

    @abstractmethod
    def visit_berry(self, run: BerryRun):
        pass

    @abstractmethod
    def visit_aa_phase(self, run: AAPhaseRun):
        pass

    @abstractmethod
    def visit_verify_relation(self, run: VerifyRelationRun):
        pass

    @abstractmethod
    def visit_koopman_check(self, run: KoopmanCheckRun):
        pass

    @abstractmethod
    def visit_liouville_check(self, run: LiouvilleCheckRun):
        pass

    @abstractmethod
    def visit_resonance(self, run: ResonanceRun):
        pass


def default_modes(n_dof: int, largest: int = 3) -> list[list[int]]:
    """m e_i for m in -largest..largest along every axis, the zero mode once"""
    modes = [[0] * n_dof]
    for axis in range(n_dof):
        for m in range(-largest, largest + 1):
            if m != 0:
                mode = [0] * n_dof
                mode[axis] = m
                modes.append(mode)
    return sorted(modes)


class ExecutionVisitor(CommandVisitor):
    """Runs a command and collects results, checks, counters and tables"""

    def _oracle(
        self, family: HamiltonianFamily, run: Union[HannayRun, VerifyRelationRun], theta_raw: float, stats: StatsDict
    ) -> tuple[Optional[dict], list[Table]]:
        if run.oracle is None:
            return None, []
        if family.n_dof != 1:
            raise ConfigurationError(
                f"the adiabatic oracle needs one degree of freedom, {family.name} has {family.n_dof}"
            )
        result = adiabatic_hannay_oracle(
            family,
            run.mu[0],
            run.loop,
            run.oracle.eps_list,
            initial_angles=run.oracle.initial_angles,
            steps_per_period=run.oracle.steps_per_period,
            workers=run.workers,
        )
        for r in result.runs:
            stats.add("oracle", Stats(steps=r.steps, samples=len(r.initial_angles)))
        difference = abs(wrap_scalar(theta_raw - result.theta))
        logger.info(f"Oracle theta {result.theta:.9f}, connection theta {theta_raw:.9f}, difference {difference:.3e}")
        table = Table(
            name="oracle-eps",
            header=["eps", "geometric_angle", "action_drift", "action_envelope"],
            rows=[[r.eps, r.geometric_angle, r.action_drift, r.action_envelope] for r in result.runs],
        )
        oracle = {
            "result": result.model_dump(mode="json"),
            "difference": difference,
            "tolerance": run.tolerances.oracle,
            "agrees": difference <= run.tolerances.oracle,
        }
        return oracle, [table]

    def _sweep(
        self,
        name: str,
        computation: Callable[[int], Sequence[float]],
        resolutions: Optional[list[int]],
        workers: int,
        reference: Optional[Sequence[float]] = None,
    ) -> tuple[Optional[dict], list[Table]]:
        if not resolutions:
            return None, []
        sweep = convergence_sweep(computation, resolutions, reference=reference, workers=workers)
        compared = sweep.resolutions[: len(sweep.errors)]
        rows = [[k, e] for k, e in zip(compared, sweep.errors)]
        table = Table(name=f"{name}-convergence", header=["K", "error"], rows=rows)
        logger.info(f"Convergence of {name}: {sweep.status}, order {sweep.order}")
        return {name: sweep.model_dump(mode="json")}, [table]

    def visit_hannay(self, run: HannayRun) -> CommandOutcome:
        family = run.family.build()
        stats = StatsDict()
        step = run.tolerances.fd_step
        holonomy = hannay_holonomy(family, run.mu, run.loop, run.segments, run.quadrature, step, run.workers)
        base = run.loop.vertices(run.segments)[0]
        form = hannay_one_form(family, run.mu, base, run.quadrature, step)
        stats.add("hannay", Stats(evaluations=holonomy.evaluations + form.evaluations, segments=run.segments))
        logger.info(f"Hannay angle {holonomy.theta} (unwrapped {holonomy.theta_raw}, winding {holonomy.winding})")

        results = {"holonomy": holonomy.model_dump(mode="json"), "one_form_at_base": form.model_dump(mode="json")}
        if isinstance(family, IntegrableFamily):
            check = family.nondegeneracy(run.mu, base, run.tolerances.action_step, run.tolerances.degeneracy)
            results["nondegeneracy"] = check.model_dump(mode="json")

        checks = {}
        oracle, tables = self._oracle(family, run, holonomy.theta_raw[0], stats)
        if oracle is not None:
            checks["oracle"] = oracle["agrees"]

        convergence, sweep_tables = self._sweep(
            "hannay",
            lambda k: hannay_holonomy(family, run.mu, run.loop, k, run.quadrature, step).theta_raw,
            run.convergence,
            run.workers,
        )
        tables.extend(sweep_tables)
        return CommandOutcome(
            results=results, oracle=oracle, convergence=convergence, checks=checks, timing=stats, tables=tables
        )

    def visit_berry(self, run: BerryRun) -> CommandOutcome:
        family = run.family.build()
        stats = StatsDict()
        chain = berry_chain(run.modes, family, run.mu, run.loop, run.segments, run.quadrature, run.workers)
        phases = chain.phases
        stats.add("berry", Stats(evaluations=chain.evaluations, segments=run.segments))
        logger.info(f"Berry phases {dict(zip(map(tuple, run.modes), phases))}")

        convergence, tables = self._sweep(
            "berry",
            lambda k: berry_phases(run.modes, family, run.mu, run.loop, k, run.quadrature),
            run.convergence,
            run.workers,
        )
        rows = [[*mode, beta] for mode, beta in zip(run.modes, phases)]
        header = [f"m{i}" for i in range(family.n_dof)] + ["beta"]
        tables.append(Table(name="phases", header=header, rows=rows))
        results = {
            "modes": run.modes,
            "phases": phases,
            "segments": run.segments,
            "quadrature": run.quadrature,
        }
        return CommandOutcome(results=results, convergence=convergence, timing=stats, tables=tables)

    def visit_verify_relation(self, run: VerifyRelationRun) -> CommandOutcome:
        family = run.family.build()
        stats = StatsDict()
        modes = run.modes if run.modes is not None else default_modes(family.n_dof)
        report = relation_report(
            modes,
            family,
            run.mu,
            run.loop,
            run.segments,
            run.quadrature,
            run.tolerances.fd_step,
            run.tolerances.relation,
            run.workers,
        )
        stats.add("relation", Stats(evaluations=report.evaluations, segments=run.segments))
        logger.info(
            f"Relation residual {report.max_residual:.3e} over {len(modes)} modes; S(0) = 0: {report.zero_check.holds}"
        )

        checks = {"relation": report.relation_holds, "s_zero": report.zero_check.holds}
        oracle, tables = self._oracle(family, run, report.theta_raw[0], stats)
        if oracle is not None:
            checks["oracle"] = oracle["agrees"]

        def residual_sweep(k: int) -> list[float]:
            swept = relation_report(modes, family, run.mu, run.loop, k, run.quadrature, run.tolerances.fd_step)
            return [r.residual for r in swept.relations]

        convergence, sweep_tables = self._sweep(
            "relation", residual_sweep, run.convergence, run.workers, reference=[0.0] * len(modes)
        )
        tables.extend(sweep_tables)
        n = family.n_dof
        tables.append(
            Table(
                name="residuals",
                header=[f"m{i}" for i in range(n)] + ["beta", "s", "predicted", "residual"],
                rows=[[*r.mode, r.berry_phase, r.s_value, r.predicted, r.residual] for r in report.relations],
            )
        )
        tables.append(Table(name="s-graph", header=["s", "beta"], rows=[list(pair) for pair in report.s_graph]))
        return CommandOutcome(
            results=report.model_dump(mode="json"),
            oracle=oracle,
            convergence=convergence,
            checks=checks,
            timing=stats,
            tables=tables,
        )

    def visit_aa_phase(self, run: AAPhaseRun) -> CommandOutcome:
        n = len(run.omega)
        state = FourierState.from_mapping(
            {tuple(a.mode): complex(a.re, a.im) for a in run.amplitudes}, n=n, n_max=run.n_max
        )
        result = aa_phase_from_evolution(state, run.omega, run.period, run.chain_samples, run.tolerances.closure)

        # horizontal lift: remove the dynamical phase and measure what is left of <psi|dpsi/dt>
        dt = run.period / run.chain_samples
        times = dt * np.arange(run.chain_samples)
        spectrum = state.modes @ np.asarray(run.omega)
        amplitudes = state.amplitudes / state.norm()
        horizontal = amplitudes[None, :] * np.exp(1j * np.outer(times, spectrum - result.expectation))
        defect = horizontality_defect(horizontal, dt)

        chain_gap = abs(wrap_scalar(result.beta - result.chain_beta))
        stats = StatsDict()
        stats.add("aa-phase", Stats(samples=run.chain_samples, evaluations=run.chain_samples * len(state.modes)))
        logger.info(f"A-A phase {result.beta:.12f}, chain estimate {result.chain_beta:.12f}")
        return CommandOutcome(
            results={
                "phase": result.model_dump(mode="json"),
                "state": state.to_report(),
                "chain_gap": chain_gap,
                "horizontality_defect": defect,
            },
            checks={"chain": chain_gap <= run.tolerances.relation},
            timing=stats,
        )

    def visit_koopman_check(self, run: KoopmanCheckRun) -> CommandOutcome:
        n = len(run.omega)
        tol = run.tolerances
        t, s = run.times
        group_law = unitarity = composition = composition_norm = spectral = 0.0
        for index in range(run.states):
            state = FourierState.random(substream(run.seed, index), n, run.n_max)
            step_t = evolve(state, KoopmanPropagator(omega=tuple(run.omega), t=t))
            both = evolve(step_t, KoopmanPropagator(omega=tuple(run.omega), t=s))
            direct = evolve(state, KoopmanPropagator(omega=tuple(run.omega), t=t + s))
            group_law = max(group_law, float(np.max(np.abs(both.amplitudes - direct.amplitudes))))
            unitarity = max(unitarity, abs(step_t.norm() - state.norm()))
            composed = composition_apply(state, run.omega, t, run.quadrature)
            composition = max(composition, float(np.max(np.abs(composed.to_dense() - step_t.to_dense()))))
            composition_norm = max(composition_norm, abs(composed.norm() - state.norm()))

        h = 1e-6
        for axis in range(n):
            mode = [0] * n
            mode[axis] = 1
            basis = FourierState.basis(mode, run.n_max)
            forward = evolve(basis, KoopmanPropagator(omega=tuple(run.omega), t=h)).amplitude(mode)
            backward = evolve(basis, KoopmanPropagator(omega=tuple(run.omega), t=-h)).amplitude(mode)
            turn = math.atan2(forward.imag, forward.real) - math.atan2(backward.imag, backward.real)
            rate = wrap_scalar(turn) / (2 * h)
            spectral = max(spectral, abs(rate - run.omega[axis]))

        results = {
            "group_law_error": group_law,
            "norm_drift": unitarity,
            "composition_discrepancy": composition,
            "composition_norm_drift": composition_norm,
            "spectral_error": spectral,
            "states": run.states,
            "stream_scheme": SUBSTREAM_SCHEME,
        }
        checks = {
            "group_law": group_law <= tol.group_law,
            "unitarity": unitarity <= tol.group_law,
            "composition": composition <= tol.koopman,
            "composition_unitarity": composition_norm <= tol.koopman,
            "spectral": spectral <= tol.spectral,
        }
        stats = StatsDict()
        stats.add("koopman", Stats(samples=run.states, evaluations=run.states * run.quadrature**n))
        return CommandOutcome(results=results, checks=checks, timing=stats)

    def visit_liouville_check(self, run: LiouvilleCheckRun) -> CommandOutcome:
        family = run.family.build()
        if not isinstance(family, CanonicalFamily):
            raise ConfigurationError(f"liouville-check flows canonical coordinates; {family.name} has none")
        mc = run.monte_carlo
        spec = FlowSpec(family=family, x=tuple(run.x), dt=mc.dt, scheme=mc.scheme)
        report = liouville_drift(
            spec,
            mc.duration,
            mc.samples,
            mc.observables,
            mc.region,
            run.seed,
            mc.chunk_size,
            run.tolerances.sigma,
            run.workers,
        )
        steps = math.ceil(abs(mc.duration) / mc.dt) if mc.scheme == "leapfrog" else 1
        stats = StatsDict()
        stats.add("liouville", Stats(samples=mc.samples, steps=steps * report.substreams))
        return CommandOutcome(
            results=report.model_dump(mode="json"), checks={"drift": report.passed}, timing=stats
        )

    def visit_resonance(self, run: ResonanceRun) -> CommandOutcome:
        verdict = resonance_classify(run.omega, run.k_max, run.tolerances.resonance)
        stats = StatsDict()
        stats.add("resonance", Stats(evaluations=verdict.searched))
        logger.info(f"Omega {run.omega}: {'resonant' if verdict.resonant else 'nonresonant'} up to |k| <= {run.k_max}")
        return CommandOutcome(results=verdict.model_dump(mode="json"), timing=stats)
