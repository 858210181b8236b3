from .config import ToleranceConfig
from .families import (
    AnharmonicTorusFamily,
    GeneralizedOscillatorFamily,
    HamiltonianFamily,
    QuarticFamily,
    RegaugedFamily,
)
from .holonomy import berry_chain, berry_phase, berry_phases, hannay_holonomy, hannay_one_form, relation_report
from .koopman import FourierState, KoopmanPropagator, composition_apply, evolve
from .lab import HolonomyLab
from .loops import CircleLoop, ConstantLoop, PolylineLoop
from .oracles import adiabatic_hannay_oracle, convergence_sweep
from .projective import aa_phase_from_evolution, discrete_holonomy, fs_distance
from .reports import Report
from .stats import Stats
