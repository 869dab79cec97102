"""
p-Laplacian Aggregation-Diffusion Laboratory - Backend Package
regime and sharp constants, fields, functionals, solver, orchestration and CLI
"""

__version__ = "1.0.0"
