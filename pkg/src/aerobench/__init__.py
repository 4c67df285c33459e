"""Benchmark workbench for pitch control of a 1-DOF fan-driven beam.

Simulates the nonlinear beam, synthesizes LQI and offset-free MPC
controllers, trains a PPO policy on the simulation, and reproduces the
step-response and 80-second tracking evaluation protocol.
"""

__version__ = "0.1.0"
