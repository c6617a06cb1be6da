"""Layer-potential Dirichlet machinery and topological-degree certification."""

__version__ = "0.1.0"
