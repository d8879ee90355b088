"""Benchmark toolkit for head-motion prediction in 360-degree video.

Subpackages cover spherical geometry and overlap metrics (:mod:`hmb.sphere`),
trace ingestion/resampling/windowing and synthetic corpora
(:mod:`hmb.dataset`, :mod:`hmb.synth`), attention-map tooling
(:mod:`hmb.saliency`), a small deterministic neural stack (:mod:`hmb.nn`),
reference predictors (:mod:`hmb.baselines`, :mod:`hmb.models`),
information-theoretic analyses (:mod:`hmb.info`), the evaluation harness
(:mod:`hmb.evaluation`) and the command-line interface (:mod:`hmb.cli`).
"""

__version__ = "0.1.0"
