"""Hot training kernels: RNN epoch (forward + BPTT) and the deep FBSDE
rollout epoch (forward + backward through the discretized system).

Each kernel is one epoch's worth of work so the numba boundary is crossed
once per epoch.  The backward passes are hand-derived reverse-mode gradients
of the exact forward graphs; tests pin them against the autodiff tape and
central finite differences.  With WEALTHGAME_NUMBA=0 the same source runs as
plain numpy (vectorized over the batch; python loop over time steps only).
"""

import numpy as np

from .._accel import maybe_jit


@maybe_jit
def rnn_epoch(x, target, Wi, bi, Wh, bh, wo, bo):
    """One training epoch of the tanh recurrence with linear readout.

    x: (K+1, B, d_in), target: (K+1, B), wo: (m,), bo: scalar.
    Returns (loss, gWi, gbi, gWh, gbh, gwo, gbo).
    """
    Kp1, B, _ = x.shape
    m = Wh.shape[0]
    H = np.empty((Kp1, B, m))
    out = np.empty((Kp1, B))
    Hprev = np.zeros((B, m))
    for k in range(Kp1):
        a = np.dot(x[k], Wi) + bi + np.dot(Hprev, Wh) + bh
        Hk = np.tanh(a)
        H[k] = Hk
        out[k] = np.dot(Hk, wo) + bo
        Hprev = Hk
    err = out - target
    loss = np.sum(err * err) / (Kp1 * B)

    dout = 2.0 * err / (Kp1 * B)
    gWi = np.zeros_like(Wi)
    gbi = np.zeros_like(bi)
    gWh = np.zeros_like(Wh)
    gbh = np.zeros_like(bh)
    gwo = np.zeros_like(wo)
    gbo = 0.0
    WhT = np.ascontiguousarray(Wh.T)
    dHnext = np.zeros((B, m))
    for k in range(Kp1 - 1, -1, -1):
        Hk = H[k]
        dH = np.outer(dout[k], wo) + dHnext
        gwo += np.dot(np.ascontiguousarray(Hk.T), dout[k])
        gbo += np.sum(dout[k])
        da = dH * (1.0 - Hk * Hk)
        gWi += np.dot(np.ascontiguousarray(x[k].T), da)
        gbi += np.sum(da, axis=0)
        if k > 0:
            gWh += np.dot(np.ascontiguousarray(H[k - 1].T), da)
        gbh += np.sum(da, axis=0)
        dHnext = np.dot(da, WhT)
    return loss, gWi, gbi, gWh, gbh, gwo, gbo


@maybe_jit
def rnn_predict(x, Wi, bi, Wh, bh, wo, bo):
    """Forward pass only; x: (K+1, B, d_in) -> (K+1, B)."""
    Kp1, B, _ = x.shape
    m = Wh.shape[0]
    out = np.empty((Kp1, B))
    Hprev = np.zeros((B, m))
    for k in range(Kp1):
        Hprev = np.tanh(np.dot(x[k], Wi) + bi + np.dot(Hprev, Wh) + bh)
        out[k] = np.dot(Hprev, wo) + bo
    return out


@maybe_jit
def stage2_epoch(hhat, S, tgrid, dzeta, dtil, Amat, x0, Y0,
                 W1, b1, W2, b2, W3, b3, sigma_S, dt):
    """One training epoch of the deep FBSDE solver.

    hhat: (B, K+1, N) per-agent drift estimates, S: (B, K+1) prices,
    dzeta: (B, K, N) innovation increments, dtil: (N,) effective risk,
    Amat: (N, N) competition matrix, x0/Y0: (N,) initial wealth and the
    learnable initial value.  The single shared network maps (hhat, S, t)
    to Z.  Returns (loss, gW1, gb1, gW2, gb2, gW3, gb3, gY0, z0).
    """
    B, Kp1, N = hhat.shape
    K = Kp1 - 1
    din = N + 2
    m = W2.shape[0]
    inp = np.empty((K, B, din))
    H1 = np.empty((K, B, m))
    H2 = np.empty((K, B, m))
    bmat = np.empty((K, B, N))
    X = np.empty((B, N))
    Y = np.empty((B, N))
    for j in range(B):
        for i in range(N):
            X[j, i] = x0[i]
            Y[j, i] = Y0[i]
    z0 = np.zeros((B, N))
    for k in range(K):
        for j in range(B):
            for i in range(N):
                inp[k, j, i] = hhat[j, k, i]
                bmat[k, j, i] = hhat[j, k, i] / sigma_S
            inp[k, j, N] = S[j, k]
            inp[k, j, N + 1] = tgrid[k]
        h1 = np.maximum(np.dot(inp[k], W1) + b1, 0.0)
        H1[k] = h1
        h2 = np.maximum(np.dot(h1, W2) + b2, 0.0)
        H2[k] = h2
        z = np.dot(h2, W3) + b3
        if k == 0:
            z0 = z.copy()
        bk = bmat[k]
        dzk = np.ascontiguousarray(dzeta[:, k, :])
        X = X + (z * bk + dtil * bk * bk) * dt + (z + dtil * bk) * dzk
        Y = Y + z * dzk + (z * bk + 0.5 * dtil * bk * bk) * dt

    AmatT = np.ascontiguousarray(Amat.T)
    resid = Y - np.dot(X, AmatT)
    loss = np.sum(resid * resid) / B

    gY = (2.0 / B) * resid
    gX = -np.dot(gY, Amat)
    gS = gY + gX
    gW1 = np.zeros_like(W1)
    gb1 = np.zeros_like(b1)
    gW2 = np.zeros_like(W2)
    gb2 = np.zeros_like(b2)
    gW3 = np.zeros_like(W3)
    gb3 = np.zeros_like(b3)
    W3T = np.ascontiguousarray(W3.T)
    W2T = np.ascontiguousarray(W2.T)
    for k in range(K - 1, -1, -1):
        dzk = np.ascontiguousarray(dzeta[:, k, :])
        dz = gS * (bmat[k] * dt + dzk)
        h2 = H2[k]
        gW3 += np.dot(np.ascontiguousarray(h2.T), dz)
        gb3 += np.sum(dz, axis=0)
        dh2 = np.dot(dz, W3T)
        da2 = np.where(h2 > 0.0, dh2, 0.0)
        h1 = H1[k]
        gW2 += np.dot(np.ascontiguousarray(h1.T), da2)
        gb2 += np.sum(da2, axis=0)
        dh1 = np.dot(da2, W2T)
        da1 = np.where(h1 > 0.0, dh1, 0.0)
        gW1 += np.dot(np.ascontiguousarray(inp[k].T), da1)
        gb1 += np.sum(da1, axis=0)
    gY0 = np.sum(gY, axis=0)
    return loss, gW1, gb1, gW2, gb2, gW3, gb3, gY0, z0


@maybe_jit
def stage2_rollout(hhat, S, tgrid, dzeta, dtil, x0, Y0,
                   W1, b1, W2, b2, W3, b3, sigma_S, dt):
    """Forward rollout with a trained network; no gradients.

    Returns (Z, X, Y) each of shape (B, K+1, N); the network is evaluated at
    every grid node including the terminal one, while X and Y advance K steps.
    """
    B, Kp1, N = hhat.shape
    K = Kp1 - 1
    din = N + 2
    Z = np.empty((B, Kp1, N))
    X = np.empty((B, Kp1, N))
    Y = np.empty((B, Kp1, N))
    inp = np.empty((B, din))
    for j in range(B):
        for i in range(N):
            X[j, 0, i] = x0[i]
            Y[j, 0, i] = Y0[i]
    for k in range(Kp1):
        for j in range(B):
            for i in range(N):
                inp[j, i] = hhat[j, k, i]
            inp[j, N] = S[j, k]
            inp[j, N + 1] = tgrid[k]
        h1 = np.maximum(np.dot(inp, W1) + b1, 0.0)
        h2 = np.maximum(np.dot(h1, W2) + b2, 0.0)
        z = np.dot(h2, W3) + b3
        for j in range(B):
            for i in range(N):
                Z[j, k, i] = z[j, i]
        if k < K:
            for j in range(B):
                for i in range(N):
                    bk = hhat[j, k, i] / sigma_S
                    dzk = dzeta[j, k, i]
                    zz = z[j, i]
                    X[j, k + 1, i] = X[j, k, i] + (zz * bk + dtil[i] * bk * bk) * dt \
                        + (zz + dtil[i] * bk) * dzk
                    Y[j, k + 1, i] = Y[j, k, i] + zz * dzk + (zz * bk + 0.5 * dtil[i] * bk * bk) * dt
    return Z, X, Y
