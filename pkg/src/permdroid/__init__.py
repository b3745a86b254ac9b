"""Permission-based Android malware detection with a small transformer
classifier, plus the data, experiment and integrity tooling around it."""

__version__ = "0.1.0"
