"""Event-assisted deblurring of 3D Gaussian splatting scenes on the CPU.

A desk-scale pipeline: simulate blurry frames plus event streams from a
ground-truth Gaussian scene, recover latent sharp frames by event double
integral, then optimize a Gaussian cloud with a deviation-estimating MLP
against blurriness and event-integration losses.
"""

__version__ = "0.1.0"
