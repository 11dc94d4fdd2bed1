"""Cluster-state generation with always-on Ising interactions.

Subpackages are plain modules: :mod:`qsim.device` (lattices), :mod:`qsim.statevector`
and :mod:`qsim.stabilizer` (the two simulation backends), :mod:`qsim.schedule`
(pulse schedules and executors), :mod:`qsim.protocols`, :mod:`qsim.analysis`
and :mod:`qsim.cli`.
"""

__version__ = "0.1.0"
