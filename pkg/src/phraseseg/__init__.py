"""Unsupervised melodic phrase segmentation from temporal prediction errors.

Train next-frame prediction models on folk melodies, detect phrase boundaries
as prominence-filtered peaks of the per-frame loss curve under Pause/Bar
search constraints, aggregate model ensembles by union vote, and score
against human phrase annotations.
"""

__version__ = "0.1.0"
