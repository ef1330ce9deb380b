"""csibench: a desk-scale Wi-Fi CSI measurement workbench.

Software 802.11 baseband, physically-motivated front-end impairments,
CSI calibration and stitching, and a round-trip scanning protocol over a
deterministic virtual link.
"""

__version__ = "0.1.0"
