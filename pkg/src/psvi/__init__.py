"""County-level power system vulnerability from 15-minute outage records.

Stages: ``ingest`` (records and customer base), ``events`` (threshold runs),
``features`` (14 county features), ``model`` (boosted trees), ``explain``
(TreeSHAP importances and weights), ``index`` (values, scores, ratings,
hotspots), ``analysis`` (disparity statistics) and ``synth`` (synthetic
scenarios with ground truth).
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
