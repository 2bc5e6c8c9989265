"""De-biased click modeling toolkit.

Implements an RL-trained pair of value networks (a bias-aware click
predictor and a de-biased relevance predictor) next to the classic
DCM/UBM/DBN probabilistic click models, a synthetic biased-log
simulator with ground-truth sidecars, and a metrics/reporting suite.
"""

__version__ = "0.1.0"
