"""Bean split ratio and split-size histogram estimation from tray images."""

__version__ = "0.1.0"
