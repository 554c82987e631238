"""ISS-framework immersion-and-invariance adaptive tracking control toolkit."""

__version__ = "0.1.0"
