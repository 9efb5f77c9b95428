"""fplab: desk-scale federated learning poisoning lab.

Simulates federated image classification under a conditional-GAN targeted
poisoning attack plus label-flip and update-boost baselines, with robust
aggregation defenses (krum, sign-voting learning rate, cluster/clip/noise)
and accuracy / attack-success / model-stealth metrics.
"""

__version__ = "0.1.0"

from . import attacks, data, defenses, fl_core, metrics, psg
from .kernels import active_backend, available_backends

__all__ = [
    "attacks",
    "active_backend",
    "available_backends",
    "data",
    "defenses",
    "fl_core",
    "metrics",
    "psg",
]
