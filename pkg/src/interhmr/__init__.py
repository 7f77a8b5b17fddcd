"""Interaction-aware DETR-style multi-person human mesh recovery decoder.

Numpy implementation of the decoder, body model, matching, losses and
evaluation metrics, with synthetic stand-ins for the image encoder and the
human-object interaction detector.
"""

__version__ = "0.1.0"
