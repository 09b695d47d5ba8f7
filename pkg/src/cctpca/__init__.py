"""Parameter reduction for probabilistic critical clearing time studies."""

__version__ = "0.1.0"
