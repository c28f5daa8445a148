"""Vandalism detection for structured knowledge-base edits.

Library layout:

- entity: revision model, Wikibase JSON parsing, canonical hashing
- diff: structural deltas between parent and child revisions
- features: the 53-feature extraction schema
- ingestion: live API / fixture revision sources
- corpus: revert detection, labeling, train/test splits
- forest: from-scratch random forest with deterministic training
- metrics: ROC-AUC, PR-AUC, filter-rate-at-recall, exact curves
- report: ablation evaluation, tables, curve CSVs, figures
- synth: synthetic fixture generator for desk-scale experiments
- service: HTTP scoring service with cache and precache worker
- cli: the vandal-sentinel entry point
"""

__version__ = "0.1.0"
