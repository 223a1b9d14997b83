"""Multitask fitted Q-iteration on synthetic low-rank MDP ensembles."""

from mtfqi._core import *  # noqa: F401,F403
from mtfqi._core import __doc__ as _core_doc

__doc__ = _core_doc
