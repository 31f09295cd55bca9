"""Kinematic simulation and evaluation suite for QP-based obstacle-avoidance
controllers on serial manipulators.

The package is organised around a small set of layers:

- ``kinchain``: chain description, forward kinematics, point Jacobians and
  manipulability analysis.
- ``qpsolve``: dense strictly-convex QP solver with inequality rows and box
  bounds, plus the objective/constraint assembly helpers.
- ``worldmodel``: moving point obstacles, distance queries against the chain
  and surveillance-region bookkeeping.
- ``controllers``: the velocity-level avoidance controllers (baseline,
  flacco, ding, escobedo) sharing one task formulation.
- ``scenario_sim``: scripted scenarios and the fixed-step simulation loop
  producing deterministic traces.
- ``metrics``: jerk, manipulability and constraint-activity analysis of
  recorded traces.
- ``cli``: the ``oacbench`` command line front end.
"""

__version__ = "0.1.0"
