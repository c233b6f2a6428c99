"""Workbench for finitely bounded homogeneous CSP templates and generated PCSP pairs."""

__version__ = "0.1.0"
