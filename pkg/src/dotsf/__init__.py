"""dotsf: zero-shot skill transfer on a pixel gridworld.

Successor-feature pretraining with a saliency-guided dynamics encoder and a
classifier-free-guided consistency policy, plus an exact tabular oracle
suite for the underlying successor-measure theory.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
