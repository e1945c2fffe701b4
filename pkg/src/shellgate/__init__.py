"""Shell-command featurization, PCA and classifiers for detecting malicious commands and files."""

__version__ = "0.1.0"
