"""AMD fundus dataset preparation and evaluation."""

from ._amdprep import *  # noqa: F401,F403
from ._amdprep import AmdprepError, RevisionConflictError  # noqa: F401

__version__ = "0.1.0"
