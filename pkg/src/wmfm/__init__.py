"""Contrastive channel/camera foundation model for ISAC tasks."""

__version__ = "0.1.0"
