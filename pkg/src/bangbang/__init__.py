"""Bang-bang (QAOA-style) state preparation for the transverse-field Ising model.

Stage one optimizes uniform gate angles on the infinite chain; stage two
embeds them in finite lattices and re-optimizes only the gates inside the
causal cone of the boundary.
"""

from .model import AngleSchedule, ApConfig, Lattice, SiteResolvedSchedule

__version__ = "0.1.0"

__all__ = ["AngleSchedule", "ApConfig", "Lattice", "SiteResolvedSchedule", "__version__"]
