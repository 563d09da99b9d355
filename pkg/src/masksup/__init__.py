"""Masked supervised learning for semantic segmentation.

Siamese shared-weight training over an image and a randomly masked copy,
with a cross-entropy segmentation loss, a cross-entropy context loss on the
masked branch, and an L2 task-similarity constraint between the branches.
"""

__version__ = "0.1.0"
