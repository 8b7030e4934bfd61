"""Classification of multipartite pure states under LOCC, SLOCC and multi-copy LOCC."""

__version__ = "0.1.0"
