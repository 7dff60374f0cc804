"""Time-optimal quadrotor trajectory planning and time-adaptive MPC tracking."""

__version__ = "0.1.0"
