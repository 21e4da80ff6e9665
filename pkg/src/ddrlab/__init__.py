"""Verification workbench for Nijenhuis operators, twisted derivations and the dd_R-lemma."""
__version__ = "0.1.0"
