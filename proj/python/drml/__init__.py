"""Metric-learning laboratory: softmax vs distance-ratio prototype heads."""

from ._drml import *  # noqa: F401,F403
from ._drml import __doc__  # noqa: F401
