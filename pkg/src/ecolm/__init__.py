"""ecolm: desk-scale simulation of language-model ecosystems that are
re-trained on their own output, with diversity, perplexity, and
distribution-support instrumentation."""

from ._kernels import BACKEND as kernel_backend

__version__ = "0.1.0"

__all__ = ["kernel_backend", "__version__"]
