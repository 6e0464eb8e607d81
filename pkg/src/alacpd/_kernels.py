"""Compiled inner loops of the ASC-LSTM cell.

The windows are short (a handful of steps) and the hidden size is small, so
plain numpy spends most of its time on call overhead. These kernels run the
same recurrences as explicit loops under numba.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _sig(x):
    return 0.5 + 0.5 * np.tanh(0.5 * x)


@njit(cache=True)
def cell_forward(inputs, W, b, Ws, a, skip):
    steps, n_in = inputs.shape
    U = Ws.shape[0]
    H = np.zeros((steps, U))
    C = np.zeros((steps, U))
    G = np.zeros((steps, 4 * U))
    S = np.zeros((steps, U))
    M = np.zeros((steps, U))
    z = np.empty(4 * U)
    for t in range(steps):
        for k in range(4 * U):
            acc = b[k]
            for j in range(n_in):
                acc += inputs[t, j] * W[j, k]
            if t > 0:
                for j in range(U):
                    acc += H[t - 1, j] * W[n_in + j, k]
            z[k] = acc
        for k in range(U):
            i = _sig(z[k])
            f = _sig(z[U + k])
            o = _sig(z[2 * U + k])
            g = np.tanh(z[3 * U + k])
            G[t, k] = i
            G[t, U + k] = f
            G[t, 2 * U + k] = o
            G[t, 3 * U + k] = g
            c_prev = C[t - 1, k] if t > 0 else 0.0
            c = f * c_prev + i * g
            C[t, k] = c
            M[t, k] = np.tanh(c) * o
        if t >= skip:
            for k in range(U):
                acc = 0.0
                for j in range(U):
                    acc += H[t - skip, j] * Ws[j, k]
                s = np.tanh(acc)
                S[t, k] = s
                H[t, k] = a * M[t, k] + (1.0 - a) * s
        else:
            for k in range(U):
                H[t, k] = M[t, k]
    return H, C, G, S, M


@njit(cache=True)
def cell_backward(inputs, W, Ws, a, skip, H, C, G, S, M, dH_in):
    steps, n_in = inputs.shape
    U = Ws.shape[0]
    dH = dH_in.copy()
    dW = np.zeros(W.shape)
    db = np.zeros(4 * U)
    dWs = np.zeros(Ws.shape)
    dX = np.zeros((steps, n_in))
    dalpha = 0.0
    dc_next = np.zeros(U)
    dz = np.empty(4 * U)
    dpre = np.empty(U)
    for t in range(steps - 1, -1, -1):
        fired = t >= skip
        for k in range(U):
            dh = dH[t, k]
            if fired:
                dm = a * dh
                dalpha += dh * (M[t, k] - S[t, k])
                dpre[k] = (1.0 - a) * dh * (1.0 - S[t, k] * S[t, k])
            else:
                dm = dh
            i = G[t, k]
            f = G[t, U + k]
            o = G[t, 2 * U + k]
            g = G[t, 3 * U + k]
            tc = np.tanh(C[t, k])
            c_prev = C[t - 1, k] if t > 0 else 0.0
            dc = dc_next[k] + dm * o * (1.0 - tc * tc)
            dz[k] = dc * g * i * (1.0 - i)
            dz[U + k] = dc * c_prev * f * (1.0 - f)
            dz[2 * U + k] = dm * tc * o * (1.0 - o)
            dz[3 * U + k] = dc * i * (1.0 - g * g)
            dc_next[k] = dc * f
        if fired:
            for j in range(U):
                hs = H[t - skip, j]
                acc = 0.0
                for k in range(U):
                    dWs[j, k] += hs * dpre[k]
                    acc += Ws[j, k] * dpre[k]
                dH[t - skip, j] += acc
        for k in range(4 * U):
            db[k] += dz[k]
        for j in range(n_in):
            x = inputs[t, j]
            acc = 0.0
            for k in range(4 * U):
                dW[j, k] += x * dz[k]
                acc += W[j, k] * dz[k]
            dX[t, j] = acc
        if t > 0:
            for j in range(U):
                hp = H[t - 1, j]
                acc = 0.0
                for k in range(4 * U):
                    dW[n_in + j, k] += hp * dz[k]
                    acc += W[n_in + j, k] * dz[k]
                dH[t - 1, j] += acc
    return dX, dW, db, dWs, dalpha
