"""NumPy implementations of the inner kernels; used when the extension is absent."""

import numpy as np


def block_conjugate(x, u_blocks, d_rest):
    nblk, r, _ = u_blocks.shape
    n = x.shape[0]
    if n != nblk * r * d_rest or x.shape != (n, n):
        raise ValueError("shape mismatch between operator and block unitaries")
    x6 = x.reshape(nblk, r, d_rest, nblk, r, d_rest)
    left = np.einsum("jab,jbxkcy->jaxkcy", u_blocks, x6)
    out = np.einsum("jaxkdy,kcd->jaxkcy", left, u_blocks.conj())
    return np.ascontiguousarray(out.reshape(n, n))


def kraus_apply(kraus, x, d_rest):
    m, dout, din = kraus.shape
    n = x.shape[0]
    if n != din * d_rest or x.shape != (n, n):
        raise ValueError("operator dimension does not match Kraus input dimension")
    x4 = x.reshape(din, d_rest, din, d_rest)
    left = np.einsum("mab,bxcy->maxcy", kraus, x4)
    out = np.einsum("maxdy,mcd->axcy", left, kraus.conj())
    return np.ascontiguousarray(out.reshape(dout * d_rest, dout * d_rest))
