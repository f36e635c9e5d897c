"""tclkit: l1-regularized transfer counterfactual learning for subgroup ACE estimation."""
from __future__ import annotations

__version__ = "0.3.0"
