"""Neural-network pruning regimes on a small numpy engine.

Subpackages and modules:

* :mod:`prunelab.nn` - layers, backprop, SGD, checkpoints
* :mod:`prunelab.data` - datasets, IDX/CSV loaders, splits, batching
* :mod:`prunelab.criteria` - magnitude, Taylor and OBD importance scores
* :mod:`prunelab.engine` - masks, unstructured/structured selection
* :mod:`prunelab.schedules` - one-shot, constant, geometric and hybrid plans
* :mod:`prunelab.retrain` - fine-tuning with patience-based early stopping
* :mod:`prunelab.experiment` - pipeline, sweeps, budget comparisons
* :mod:`prunelab.report` - aggregated CSV and SVG charts
"""

from .errors import ConfigurationError, FormatError, InputError, PrunelabError, StateError

__version__ = "0.1.0"

__all__ = ["ConfigurationError", "FormatError", "InputError", "PrunelabError", "StateError", "__version__"]
