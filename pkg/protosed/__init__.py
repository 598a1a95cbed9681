"""Few-shot bioacoustic sound event detection with a channel-spatial prototypical network"""

__version__ = "0.1.0"
