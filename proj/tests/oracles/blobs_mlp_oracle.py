#!/usr/bin/env python3
"""Naive numpy training loop for the demo MLP on synth-blobs.

Shares no code with the C++ library. It trains a 2-8-2 tanh/softmax network
with plain SGD (step 0.1, batch 10, reshuffled every epoch) on the first 160
rows of the raw CSV and reports the first epoch at which training accuracy
reaches the threshold, for several initialisation seeds.

usage: blobs_mlp_oracle.py path/to/synth_blobs.csv
"""
import sys

import numpy as np

THRESHOLD = 0.98
EPOCHS = 200
LR = 0.1
BATCH = 10
TRAIN_ROWS = 160


def load(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    x = data[:TRAIN_ROWS, :2]
    y = data[:TRAIN_ROWS, 2].astype(int)
    return x, np.eye(2)[y]


def forward(params, x):
    w0, b0, w1, b1 = params
    h = np.tanh(x @ w0 + b0)
    z = h @ w1 + b1
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    return h, p / p.sum(axis=1, keepdims=True)


def accuracy(params, x, t):
    return float((forward(params, x)[1].argmax(1) == t.argmax(1)).mean())


def train(x, t, seed):
    rng = np.random.default_rng(seed)
    params = [rng.normal(0, 0.5, (2, 8)), np.zeros(8), rng.normal(0, 0.5, (8, 2)), np.zeros(2)]
    for epoch in range(1, EPOCHS + 1):
        order = rng.permutation(len(x))
        for start in range(0, len(x), BATCH):
            idx = order[start:start + BATCH]
            xb, tb = x[idx], t[idx]
            h, p = forward(params, xb)
            dz = (p - tb) / len(xb)
            w0, b0, w1, b1 = params
            dh = (dz @ w1.T) * (1 - h * h)
            grads = [xb.T @ dh, dh.sum(0), h.T @ dz, dz.sum(0)]
            params = [w - LR * g for w, g in zip(params, grads)]
        if accuracy(params, x, t) >= THRESHOLD:
            return epoch, accuracy(params, x, t)
    return None, accuracy(params, x, t)


def main():
    x, t = load(sys.argv[1])
    worst = 0
    for seed in range(10):
        epoch, acc = train(x, t, seed)
        print(f"seed {seed}: reached {THRESHOLD} at epoch {epoch} (accuracy {acc:.4f})")
        worst = max(worst, epoch if epoch is not None else EPOCHS + 1)
    print(f"worst epoch: {worst} (limit {EPOCHS})")
    return 0 if worst <= EPOCHS else 1


if __name__ == "__main__":
    sys.exit(main())
