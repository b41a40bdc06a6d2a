"""ruletag: rule-guided neural sequence tagging.

Trains a neural POS/NER tagger from unlabeled text plus a four-tier
linguistic rule system embedded directly into a differentiable loss,
with optional supervised fine-tuning, evaluation tooling and
silver-corpus generation.
"""

__version__ = "0.1.0"
