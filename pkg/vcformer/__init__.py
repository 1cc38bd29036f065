"""vcformer - multivariate forecasting with variable correlation attention and a Koopman temporal detector."""

__version__ = "1.0.0"
