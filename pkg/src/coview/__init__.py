"""Collaborative video censorship engine.

Preference panels, mediated consensus over them, video bundle ingestion,
pluggable content analysis, alignment feedback, and the HTTP service
tying it together.
"""

__version__ = "0.1.0"
