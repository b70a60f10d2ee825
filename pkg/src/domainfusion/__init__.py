"""Multi-domain conditional GAN data augmentation at desk scale.

Subpackages cover the dense-network core (nn), dataset handling (data),
GAN training regimes (gan), sample-quality metrics (metrics), conditional
rejection sampling (drs), downstream augmentation evaluation (augment),
and the experiment pipeline (config, pipeline, cli).
"""

__version__ = "0.1.0"
