"""Training, evaluation, checkpoints, plotting and the command line."""
