"""Three-class discrimination of dysarthria, apraxia of speech and neurotypical speech.

The package covers the whole chain: WAV ingestion and resampling, a
28-dimensional handcrafted acoustic feature vector, ANOVA-F feature
selection, RBF support vector machines arranged hierarchically or as
one-vs-one / one-vs-rest ensembles, and a repeated nested
cross-validation protocol with automatic-vs-perceptual reporting.
"""

__version__ = "0.1.0"

from msdclass.labels import ClassLabel

__all__ = ["ClassLabel", "__version__"]
