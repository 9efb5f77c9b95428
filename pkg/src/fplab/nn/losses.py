"""Classification loss used by local client training."""

import numpy as np


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits.

    logits: (N, C) float64, labels: (N,) int. Returns (loss, dlogits).
    """
    z = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(z)
    sumexp = expz.sum(axis=1, keepdims=True)
    logp = z - np.log(sumexp)
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    dlogits = expz / sumexp
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n
