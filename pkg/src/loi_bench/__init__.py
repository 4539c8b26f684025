"""Level-of-Influence workbench for two-player matrix-game gridworlds."""

__version__ = "0.1.0"
