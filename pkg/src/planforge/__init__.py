"""planforge: build planning-augmented fine-tuning mixtures from article corpora.

The package turns finished long-form articles into training data that teaches
a model to plan before it writes: it synthesizes candidate writing steps
(summary, outline, key information) from each article, scores and selects the
best candidate per step kind, assembles the selected plans into instruction
mixtures, and evaluates generated articles with ROUGE and a flip-debiased
side-by-side rating harness.
"""

__version__ = "0.1.0"
