"""Goal extraction, clustering, and goal-model generation from interview transcripts."""

__version__ = "0.1.0"
