"""symdyn: structure-preserving dynamics learning and verification.

Subpackages/modules:

* ``autodiff`` / ``optim``  -- minimal float64 reverse-mode engine + Adam/AdamW
* ``sympnet``               -- exactly invertible symplectic shear stacks
* ``encoder``               -- bidirectionally trained symplectic encoder (meta-learned)
* ``decoder``               -- causal attention decoder with per-system meta-attention
* ``rollout``               -- autoregressive multi-step inference
* ``datagen``               -- spring-mesh, harmonic-oscillator and monitored
                               open-quantum-system reference simulators
* ``verify``                -- symplectic defect, perturbation bound, energy drift,
                               phase-space area
* ``baseline``              -- naive MLP next-step predictor at matched budget
* ``config`` / ``io``       -- run configuration, trajectory/checkpoint formats
* ``cli``                   -- the ``symdyn`` command-line entry point
"""

from . import autodiff, optim  # noqa: F401

__version__ = "0.1.0"
