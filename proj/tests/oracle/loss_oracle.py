"""Reference values for the loss unit tests, computed from the formulas with numpy.

Run: python3 tests/oracle/loss_oracle.py
"""
import numpy as np

np.set_printoptions(precision=17)


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def lse(v):
    m = np.max(v)
    return m + np.log(np.sum(np.exp(v - m)))


x = np.array([[0.5, -1.0], [1.5, 0.25]])
theta = np.array([[0.2, -0.3], [0.4, 0.1]])
labels = [0, 1]
counts = np.array([40.0, 4.0])
z = np.array([unit([1, 2]), unit([-1, 0.5])])
keys = np.array([unit([0.8, 1.9]), unit([-1.2, 0.4]), unit([1, 1]), unit([0.3, -1])])
key_labels = [0, 1, 0, 1]
tau, lam_ce, lam_scl, alpha, beta, gamma = 0.5, 1.0, 0.03, 1.0, 1.0, 0.5


def ce(i):
    s = x[i] @ theta + np.log(counts)
    return lse(s) - s[labels[i]]


def positives(i):
    return [a for a, y in enumerate(key_labels) if y == labels[i]]


def scl(i):
    e = keys @ z[i] / tau
    P = positives(i)
    return -np.mean([e[p] - lse(e) for p in P])


def paco(i):
    e = np.concatenate([keys @ z[i] / tau, x[i] @ theta + np.log(counts)])
    P = positives(i)
    g = 1.0 / (alpha * len(P) + beta)
    w = np.zeros_like(e)
    w[P] = alpha * g
    w[len(keys) + labels[i]] += beta * g
    return lse(e) - w @ e


def cibl(i, ce_fn=ce):
    P = len(positives(i))
    d = lam_ce + lam_scl * P
    return (lam_ce * ce_fn(i) + lam_scl * P * scl(i)) / d


def nce(i):
    xs = x[i] / np.linalg.norm(x[i])
    th = theta / np.linalg.norm(theta, axis=0)
    s = xs @ th / gamma
    return -np.log(counts[labels[i]] * np.exp(s[labels[i]]) / np.sum(counts * np.exp(s)))


rows = {
    "balanced_ce": [ce(i) for i in range(2)],
    "supcon": [scl(i) for i in range(2)],
    "summed": [lam_ce * ce(i) + lam_scl * scl(i) for i in range(2)],
    "paco": [paco(i) for i in range(2)],
    "cibl": [cibl(i) for i in range(2)],
    "nce": [nce(i) for i in range(2)],
    "ncibl": [cibl(i, nce) for i in range(2)],
}
for name, vals in rows.items():
    print(f"{name:12s} " + " ".join(f"{v:.15f}" for v in vals) + f"  mean {np.mean(vals):.15f}")
