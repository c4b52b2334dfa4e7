"""Model-agnostic explanation and fairness auditing for tabular binary classifiers."""

__version__ = "0.1.0"
