"""Adversarial domain adaptation for sentence-pair relation classification:
a staged adversarial adaptation pipeline, a gradient-reversal baseline and
the evaluation harness, on a small numpy autodiff engine."""

__version__ = "0.1.0"
