"""igaiva: a workbench for improving text classifiers by targeting synthetic
training data at error-dense regions of feature space.

Core pipeline: load a labeled message corpus, split it, fit TF-IDF features
on the training side, project to 2-D (PCA / t-SNE), estimate a recall-error
field over the projection, select training examples in suspect regions,
generate synthetic variants with a language-model generator (or the offline
mock), merge, retrain, and compare per-class recall against the baseline.
"""

from .errors import DataError, GeneratorError

__version__ = "0.1.0"

__all__ = ["DataError", "GeneratorError", "__version__"]
