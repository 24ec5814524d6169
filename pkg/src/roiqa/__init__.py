"""roiqa: region-of-interest image quality assessment toolkit.

Synthesizes distortion datasets, labels mask-based ROIs with a
full-reference fidelity oracle, trains a mask-based feature extractor
network with multi-task heads, and runs the human annotation protocol
behind an HTTP service and web client.
"""

__version__ = "0.1.0"
