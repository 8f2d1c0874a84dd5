"""Semi-supervised ensemble aggregation by slack minimization.

The library combines binary ensemble members (decision trees, stumps, and
per-node specialists that abstain off their region) into a single bounded
predictor.  Member reliabilities are lower-bounded from labeled data with
Wilson intervals, and the aggregation weights come from minimizing a convex
slack function over the unlabeled scores, which drives most scores into the
hedged band [-1, +1].
"""

from muffle.data import LabeledSet, UnlabeledSet

__all__ = ["LabeledSet", "UnlabeledSet"]
__version__ = "0.1.0"
