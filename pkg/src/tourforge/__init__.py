"""tourforge: self-hostable code-tour onboarding platform."""

__version__ = "0.1.0"
