"""Natural-language descriptions of large image sets, built by verifying
LLM-hypothesized concepts against the full set in embedding space."""

__version__ = "0.1.0"
