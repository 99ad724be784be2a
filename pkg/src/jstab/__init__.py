"""Per-regime causal structure learning glued by cover-based aggregation.

Submodules:
    graphs        DAG and partially directed graph containers, d-separation
    stats         partial-correlation tests, local Gaussian scores, p-value combiners
    ci            constraint-based skeleton search and edge orientation
    ges           score-based greedy search with drift and overlap penalties
    synth         linear-Gaussian multi-regime benchmark generator
    aggregate     support tables, threshold rules, pi selection, backdoor gluing
    metrics       structural distances and stability summaries
    interference  sector-dependent attribution pipeline
    runner        batch orchestration and the command line entry point
"""

__version__ = "0.1.0"
