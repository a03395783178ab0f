"""Quality assessment of transcoded video against corrupted (user-generated) references."""

from . import distort, features, harness, maps, media, nn, sampling, stats, synthetic

__version__ = "0.1.0"

__all__ = ["distort", "features", "harness", "maps", "media", "nn", "sampling", "stats", "synthetic"]
