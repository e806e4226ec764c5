"""Search engine switch prediction with a Bayesian probit (AdPredictor) learner."""

__version__ = "0.1.0"
