"""Top-level package for piezoplate."""

__author__ = """Tara Skiba"""
__email__ = "tskiba@vols.utk.edu"
__version__ = "0.1.0"
