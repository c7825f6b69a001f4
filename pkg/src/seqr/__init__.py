"""Unsupervised LoRA routing by activation-norm maximization."""
