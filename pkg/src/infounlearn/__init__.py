"""Information-theoretic machine unlearning: MI-regularized training,
closed-form certificates and Wasserstein-2 barycenter neutralization."""

__version__ = "0.1.0"
