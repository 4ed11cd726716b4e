"""Hyperbolic kernel graph networks for multimodal brain-network fusion."""

from .estimator import HKGFClassifier

__all__ = ["HKGFClassifier"]
