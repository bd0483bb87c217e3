"""Constrained-actuation quadruped locomotion lab.

Motor operating regions from spec-sheet constants, gearbox space transforms,
torque saturation inside an RL training loop, the full locomotion reward
suite, and the evaluation protocols built on top (violation ratio,
delta-reward under the feasibility constraint).
"""

__version__ = "0.1.0"
