"""Unanswerable-question benchmark pipeline for multi-page document VQA.

Stages: import/augment documents, corrupt answerable questions via typed
entity substitution, verify unanswerability with a vision judge, evaluate
models across prompt variants and page windows, and report document- and
page-level accuracy across ablation dimensions.
"""

__version__ = "0.1.0"
