"""Offline figure generation for the obstacle-avoidance benchmark.

Consumes only the benchmark's documented CSV outputs (trace.csv and
metrics.csv); the simulation package itself is never imported, so figures
can be produced anywhere the files land.
"""

__version__ = "0.1.0"
