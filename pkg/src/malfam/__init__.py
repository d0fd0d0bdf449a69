"""malfam: obfuscation-robust malware family classification toolkit.

The package is organized around one module per pipeline stage:

- ``dataset``   feature-space schema, labeled feature matrices, CSV/manifest I/O
- ``forest``    random forests supplying accuracies and feature importances
- ``selection`` dynamic weighted feature selection (importance vs. stability)
- ``callgraph`` call graphs, sensitive-behavior subgraph extraction, stats
- ``obfsim``    synthetic corpus generator and obfuscation transforms
- ``gnn``       message-passing graph classifiers (GCN, GraphSAGE, GAT)
- ``metrics``   confusion matrices, per-family metrics, report rendering
- ``cli``       the ``malfam`` command-line pipeline
"""

__version__ = "0.1.0"
