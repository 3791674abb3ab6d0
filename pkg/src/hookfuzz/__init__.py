"""Coverage-guided two-phase grammar fuzzer for script interpreters."""

__version__ = "0.1.0"
