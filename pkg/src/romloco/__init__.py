"""Reduced-order-model locomotion control stack.

Step-to-step ALIP planning, SRB/DSRB linear MPC, a dense operator-splitting
QP solver, a nonlinear plant simulator, and a batch experiment harness.
"""

from .params import ModelParams

__all__ = ["ModelParams"]
__version__ = "0.1.0"
