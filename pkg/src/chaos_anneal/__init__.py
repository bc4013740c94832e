"""Simulation tiers for noise-induced suppression of chaos in a driven
Kerr optomechanical cavity.

Three dynamical tiers share one dimensionless parameter set (mechanical
frequency = 1):

* ``meanfield``  -- deterministic complex-amplitude ODEs (RK4),
* ``langevin``   -- stochastic c-number trajectories with vacuum/thermal
  noise, ensemble statistics and phase-space histograms,
* ``hilbert``    -- truncated two-mode Fock space, quantum-jump Monte
  Carlo, and a direct master-equation oracle.

``wigner`` reconstructs cavity phase-space distributions from density
matrices, ``analysis`` provides intensity spectra and the sideband
suppression metric, and ``cli`` orchestrates reproducible runs.
"""

__version__ = "0.1.0"

from .model import DimensionlessParams, PhysicalParams, ScalingTransform  # noqa: F401
