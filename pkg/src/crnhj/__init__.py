"""State-constrained Hamilton-Jacobi equations for chemical reaction networks.

Discrete (lattice) and continuous (segment) value functions, exact stochastic
simulation, and large-deviation diagnostics.
"""

__version__ = "0.1.0"
