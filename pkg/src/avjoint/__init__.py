"""Joint audio-visual scene classification at desk scale.

A long-term spectral front-end (scalogram or log Mel energies over 512 ms
windows), a residual 1-D CNN acoustic encoder, a frozen convolutional visual
encoder, concatenation fusion, and a softmax scene classifier -- trainable
either jointly (acoustic encoder and classifier together, visual encoder
frozen) or in the classic two-stage pipeline (extract embeddings first, then
fit the classifier).  Ships with a synthetic cross-modal dataset generator so
every training property is verifiable on a laptop.
"""

__version__ = "0.1.0"
