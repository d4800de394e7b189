"""Toolkit for learning generalized value functions over lifted-STRIPS domains.

The package covers the full pipeline: parsing a positive-STRIPS PDDL subset,
grounding, reachable state-space expansion with optimal cost labels, optional
derived-atom augmentation, a relational GNN value model with hand-written
reverse-mode gradients, training objectives, greedy policy execution, and an
evaluation CLI.
"""

__version__ = "0.1.0"
