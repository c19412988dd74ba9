"""dgpair: pairwise visual disambiguation for structure-from-motion.

Classifies whether two visually similar images observe the same 3D
surface or distinct lookalike surfaces, and filters scene-graph edges
by the predicted probability before reconstruction.
"""

__version__ = "0.1.0"
