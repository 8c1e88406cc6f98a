"""Capacitive ear-canal biometrics: chunk features, linear SVM authentication
and identification, and session-based evaluation protocols."""

__version__ = "0.1.0"
