"""Fraud detection on per-transaction graphs.

Pipeline: transaction CSV -> balanced, stratified splits -> one small graph
per transaction (projection + covered DBSCAN clustering) -> either a
classically simulated quantum graph classifier or a GraphSAGE baseline ->
threshold metrics and ROC/PR curve data.
"""

__version__ = "0.1.0"
