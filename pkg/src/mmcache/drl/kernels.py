"""Numpy kernels for the Q-network forward pass and loss gradients."""

import numpy as np


def trunk_forward(layers, x):
    acts = [x]
    for w, b in layers:
        x = np.maximum(x @ w + b, 0.0)
        acts.append(x)
    return acts


def _combine(net, h):
    p = net.params
    if net.dueling:
        v = h @ p["Wv"] + p["bv"]
        a = h @ p["Wa"] + p["ba"]
        return v + a - a.mean(axis=1, keepdims=True)
    return h @ p["Wq"] + p["bq"]


def q_forward(net, x):
    return _combine(net, trunk_forward(net.trunk(), x)[-1])


def q_loss_and_grads(net, x, actions, targets):
    p = net.params
    layers = net.trunk()
    acts = trunk_forward(layers, x)
    h = acts[-1]
    q = _combine(net, h)
    n = len(x)
    rows = np.arange(n)
    err = q[rows, actions] - targets
    loss = float(np.mean(err ** 2))

    dq = np.zeros_like(q)
    dq[rows, actions] = 2.0 * err / n
    grads = {}
    if net.dueling:
        dv = dq.sum(axis=1, keepdims=True)
        da = dq - dv / net.n_actions
        grads["Wv"] = h.T @ dv
        grads["bv"] = dv.sum(axis=0)
        grads["Wa"] = h.T @ da
        grads["ba"] = da.sum(axis=0)
        dh = dv @ p["Wv"].T + da @ p["Wa"].T
    else:
        grads["Wq"] = h.T @ dq
        grads["bq"] = dq.sum(axis=0)
        dh = dq @ p["Wq"].T
    for i in range(len(layers), 0, -1):
        dz = dh * (acts[i] > 0)
        grads[f"W{i}"] = acts[i - 1].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        if i > 1:
            dh = dz @ layers[i - 1][0].T
    return loss, grads
