"""Exact learnability, safety and robustness metrics for small ML models.

Decision trees and fixed-point networks over bounded integer domains are
compiled to boolean circuits, Tseitin-encoded to CNF with the input bits as
projection variables, and counted exactly with a projected DPLL counter.
"""

__version__ = "0.1.0"
