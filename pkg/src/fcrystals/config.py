"""Run-wide knobs, kept in one dataclass so harness runs are reproducible."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Config:
    # absolute series precision used when building crystals
    precision: int = 24
    # operations whose result precision would drop below this raise
    precision_floor: int = 4
    # allowed relative tower degree over the base F_q
    extension_budget: int = 8
    # residual slack allowed in decomposition / conjugation certificates
    slack: int = 4
    # rule (a) of the level-torsion definition: True = literal nilpotence
    # test on O_+ (+) O_-, False = the alternative "O_+ (+) O_- != 0" reading
    rule_a_literal: bool = True
    # hard cap multiplier for fixed-point loops (cap = factor * precision * r^2)
    iteration_cap_factor: int = 2


DEFAULT = Config()
