"""Goal-oriented restaurant-search dialogue agent with a discrete latent
intention policy, trained by semi-supervised variational inference and
fine-tuned with policy gradients."""

__version__ = "0.1.0"
