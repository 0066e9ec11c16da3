"""Acoustic source localization by segmenting beamformed spectral maps.

The pipeline: simulate (or load) a multichannel recording, sweep a
delay-and-sum beamformer over an azimuth/elevation grid, reduce each steered
waveform to banded spectral features, reproject the grid onto a polar disk,
segment the disk with a small U-Net, and post-process the predicted region
into a direction-of-arrival estimate.
"""

__version__ = "0.1.0"
