"""Generalized few-shot semantic segmentation at desk scale.

The pipeline has two stages. Stage one trains a segmentation model on
background plus base classes. Stage two, per episode, widens the
decoder with novel-class parameters, fits them on a handful of support
images whose masks only label novel classes, then scores the query
prediction over base and novel classes together.

Subpackages: ``numcore`` (tensors, autodiff, SGD), ``models`` (tiny
encoders and decoders), ``data`` (synthetic shapes, file formats),
plus ``protocol`` (the two stages), ``evaluation`` (episodic scoring),
``metrics``, ``splits``, ``config`` and ``cli``.
"""

from .splits import IGNORE_ID, ClassSplit, standard_split

__version__ = "0.1.0"

__all__ = ["IGNORE_ID", "ClassSplit", "standard_split", "__version__"]
