"""sslcal.lib: numerics, model, losses, metrics and the training loop.

core_math     = softmax family, entropies, argmax, hinge
model         = MLP forward/backward, SGD with warm-up + cosine schedule
checkpoint    = versioned JSON parameter files
augment       = weak / strong feature-space views, keyed random streams
pseudo_label  = decisions, thresholds, U1/U2 split
objective     = loss terms and logit gradients, margin penalty, LS/FL baselines
calibration   = ECE family, Friedman rank, logit stats, entropy dynamics
data          = synthetic mixtures, long-tail counts, embedding import
config        = run config dataclasses, text format, overrides, hashing
trainer       = training loop, EvalRecord / RunLog
gradcheck     = finite-difference oracle
errors        = exception types
"""
