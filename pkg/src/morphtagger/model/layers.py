"""Numpy building blocks with explicit backward passes.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache, accumulates parameter gradients
into ``grads`` and returns the gradient with respect to the input.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits, gold, weight):
    """Weighted mean of -log p(gold); returns (loss, dlogits).

    ``weight`` is 1 for tokens that carry a label and 0 otherwise; the mean is
    taken over labelled tokens.
    """
    n = weight.sum()
    if n == 0:
        return 0.0, np.zeros_like(logits)
    logp = log_softmax(logits)
    rows = np.arange(len(gold))
    loss = -(logp[rows, gold] * weight).sum() / n
    d = np.exp(logp)
    d[rows, gold] -= 1.0
    d *= (weight / n)[:, None]
    return float(loss), d


# -- sequence reversal --------------------------------------------------------

def reverse_index(lengths, T):
    """Time index that reverses each sequence within its length, padding fixed."""
    t = np.arange(T)[None, :]
    L = np.asarray(lengths)[:, None]
    return np.where(t < L, L - 1 - t, t)


def gather_time(X, rev):
    b = np.arange(X.shape[0])[:, None]
    return X[b, rev]


def scatter_time(dY, rev):
    out = np.empty_like(dY)
    b = np.arange(dY.shape[0])[:, None]
    out[b, rev] = dY
    return out


# -- LSTM ------------------------------------------------------------------

def lstm_forward(X, Wx, Wh, b):
    B, T, _ = X.shape
    H = Wh.shape[0]
    xs = X @ Wx + b
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    Hs = np.empty((B, T, H))
    steps = []
    for t in range(T):
        z = xs[:, t] + h @ Wh
        i = sigmoid(z[:, :H])
        f = sigmoid(z[:, H:2 * H])
        o = sigmoid(z[:, 2 * H:3 * H])
        g = np.tanh(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        Hs[:, t] = h
        steps.append((i, f, o, g, c_prev, h_prev, tc))
    return Hs, (X, Wx, Wh, steps)


def lstm_backward(dHs, cache, grads, prefix):
    X, Wx, Wh, steps = cache
    B, T, D = X.shape
    H = Wh.shape[0]
    dxs = np.empty((B, T, 4 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in reversed(range(T)):
        i, f, o, g, c_prev, h_prev, tc = steps[t]
        dh = dHs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc * tc) + dc_next
        dz = np.concatenate([dc * g * i * (1.0 - i),
                             dc * c_prev * f * (1.0 - f),
                             do * o * (1.0 - o),
                             dc * i * (1.0 - g * g)], axis=1)
        dc_next = dc * f
        dWh += h_prev.T @ dz
        dh_next = dz @ Wh.T
        dxs[:, t] = dz
    flat = dxs.reshape(-1, 4 * H)
    grads[prefix + "Wx"] += X.reshape(-1, D).T @ flat
    grads[prefix + "Wh"] += dWh
    grads[prefix + "b"] += flat.sum(axis=0)
    return dxs @ Wx.T


# -- GRU -------------------------------------------------------------------

def gru_forward(X, W, U_zr, U_n, b):
    """GRU with ``n = tanh(x Wn + (r * h) Un + bn)``; W holds [z | r | n]."""
    B, T, _ = X.shape
    H = U_n.shape[0]
    xs = X @ W + b
    h = np.zeros((B, H))
    Hs = np.empty((B, T, H))
    steps = []
    for t in range(T):
        zr = sigmoid(xs[:, t, :2 * H] + h @ U_zr)
        z, r = zr[:, :H], zr[:, H:]
        rh = r * h
        n = np.tanh(xs[:, t, 2 * H:] + rh @ U_n)
        h_prev = h
        h = (1.0 - z) * n + z * h_prev
        Hs[:, t] = h
        steps.append((z, r, n, h_prev, rh))
    return Hs, (X, W, U_zr, U_n, steps)


def gru_backward(dHs, cache, grads, prefix):
    X, W, U_zr, U_n, steps = cache
    B, T, D = X.shape
    H = U_n.shape[0]
    dxs = np.empty((B, T, 3 * H))
    dU_zr = np.zeros_like(U_zr)
    dU_n = np.zeros_like(U_n)
    dh_next = np.zeros((B, H))
    for t in reversed(range(T)):
        z, r, n, h_prev, rh = steps[t]
        dh = dHs[:, t] + dh_next
        dn_pre = dh * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh * (h_prev - n) * z * (1.0 - z)
        drh = dn_pre @ U_n.T
        dU_n += rh.T @ dn_pre
        dr_pre = drh * h_prev * r * (1.0 - r)
        dzr = np.concatenate([dz_pre, dr_pre], axis=1)
        dU_zr += h_prev.T @ dzr
        dh_next = dh * z + drh * r + dzr @ U_zr.T
        dxs[:, t, :2 * H] = dzr
        dxs[:, t, 2 * H:] = dn_pre
    flat = dxs.reshape(-1, 3 * H)
    grads[prefix + "W"] += X.reshape(-1, D).T @ flat
    grads[prefix + "Uzr"] += dU_zr
    grads[prefix + "Un"] += dU_n
    grads[prefix + "b"] += flat.sum(axis=0)
    return dxs @ W.T


# -- context window ------------------------------------------------------------

def window_stack(X, k):
    """Concatenate each position with its ``k`` left and right neighbours.

    Positions outside the (zero-padded) batch read zeros; the caller keeps
    padded positions at zero so sentences never see each other's padding.
    """
    B, T, D = X.shape
    P = np.zeros((B, T + 2 * k, D))
    P[:, k:k + T] = X
    return np.concatenate([P[:, j:j + T] for j in range(2 * k + 1)], axis=2)


def window_unstack(dS, k, D):
    B, T, _ = dS.shape
    dP = np.zeros((B, T + 2 * k, D))
    for j in range(2 * k + 1):
        dP[:, j:j + T] += dS[:, :, j * D:(j + 1) * D]
    return dP[:, k:k + T]


# -- optimizer -----------------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        if self.lr == 0:
            return
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k in sorted(params):
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_by_global_norm(grads, max_norm):
    if not max_norm:
        return 1.0
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
