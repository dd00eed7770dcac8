"""flowbrick: streaming network-traffic monitoring engine.

Accumulates flows into per-window hash-binned traffic matrices, tracks
per-bin heavy hitters with a weighted majority sketch, and flags
volumetric and structural anomalies with heavy-tail and connectivity
detectors.
"""

__version__ = "0.1.0"
