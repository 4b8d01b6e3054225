"""Scaled relative graphs for operator pairs, nonlinear resolvents and nonsmooth circuit solvers."""

from .extc import INF, conj_invert, z_pair, z_pair_projected
from .srg import PairSrgCloud, apply_calculus, cloud_subset_check, sample_pair_srg
from .regions import (
    Disk,
    DiskComplement,
    FullPlane,
    HalfPlane,
    Semimonotone,
    check_semimonotone_pair,
    contains,
    pair_partner_nonsingular,
    pair_partner_rank_deficient,
    transform,
)
from .resolve import congruence_transform, solve_inclusion, transformed_resolvent, warped_resolvent
from .iterate import km_iterate, primal_dual_iterate, transformed_ppa
from .circuits import AmplifierProblem, LeakyTransistorProblem, solve_amplifier, solve_leaky_transistor, sweep

__version__ = "0.1.0"

__all__ = [
    "INF",
    "conj_invert",
    "z_pair",
    "z_pair_projected",
    "PairSrgCloud",
    "apply_calculus",
    "cloud_subset_check",
    "sample_pair_srg",
    "Disk",
    "DiskComplement",
    "FullPlane",
    "HalfPlane",
    "Semimonotone",
    "check_semimonotone_pair",
    "contains",
    "pair_partner_nonsingular",
    "pair_partner_rank_deficient",
    "transform",
    "congruence_transform",
    "solve_inclusion",
    "transformed_resolvent",
    "warped_resolvent",
    "km_iterate",
    "primal_dual_iterate",
    "transformed_ppa",
    "AmplifierProblem",
    "LeakyTransistorProblem",
    "solve_amplifier",
    "solve_leaky_transistor",
    "sweep",
]
