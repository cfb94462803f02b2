"""Micro-Doppler coherence loss workbench.

Synthetic micro-Doppler scenes, a complex STFT front end, the normalized
Doppler-cadence loss with analytic gradients, a small numpy hybrid
autoencoder/classifier, and the two-stage training and noise-sweep harness.
"""

from mdcoherence.errors import MdlError

__version__ = "0.1.0"

__all__ = ["MdlError", "__version__"]
