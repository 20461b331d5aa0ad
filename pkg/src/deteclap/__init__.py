"""Audio-visual representation learning with object-label supervision.

Library layout:

- ``deteclap.nn`` — float64 autodiff tensors, transformer blocks, Adam.
- ``deteclap.tokenizer`` — log-mel features, patch grids, random masking.
- ``deteclap.model`` — encoders, cross-modal stack, decoder, label heads.
- ``deteclap.objectives`` — contrastive, reconstruction, and label losses.
- ``deteclap.labels`` — tagger/detector score ingestion, thresholding, merging.
- ``deteclap.corpus`` / ``training`` / ``evaluation`` — synthetic corpora,
  the training loop, and the retrieval/classification harness.
- ``deteclap.cli`` — command-line front door (``deteclap <subcommand>``).
"""

__version__ = "0.1.0"
