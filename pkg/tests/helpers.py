"""Random instance generators shared by the unit and acceptance tests."""

import numpy as np

from qcap.linalg import (
    PureState,
    SystemLayout,
    haar_unitary,
    partial_trace,
    random_density_matrix,
    random_pure_vector,
)


def random_tripartite(dims, rng):
    """Random pure state on ``A B C`` and its ``AB`` and ``AC`` marginals."""
    lay = SystemLayout.of(("A", dims[0]), ("B", dims[1]), ("C", dims[2]))
    psi = PureState(random_pure_vector(int(np.prod(dims)), rng), lay).density()
    return psi, partial_trace(psi, ["A", "B"]), partial_trace(psi, ["A", "C"])


def schmidt_state(p: float):
    """``sqrt(p)|00> + sqrt(1-p)|11>`` on ``[A, B]``."""
    v = np.array([np.sqrt(p), 0, 0, np.sqrt(1 - p)])
    return PureState(v, SystemLayout.of(("A", 2), ("B", 2))).density()


def composition_instance(rng):
    """Blocks for the composition bound with ``sigma`` a perturbation of ``rho``.

    Returns ``(rho_blocks, sigma_blocks, p_cond)``; ``p(k|k)`` is close to 1 and
    each ``sigma_{kk'}`` mixes ``rho_k`` with noise of random strength.
    """
    nblk = int(rng.integers(2, 5))
    da = int(rng.integers(1, 4))
    rho_blocks = [random_density_matrix(da, None, rng) for _ in range(nblk)]
    leak = rng.uniform(0, 0.3, nblk)
    p = rng.dirichlet(np.ones(nblk), nblk) * leak[:, None]
    p[np.arange(nblk), np.arange(nblk)] += 1 - leak
    sigma = np.empty((nblk, nblk, da, da), dtype=np.complex128)
    for k in range(nblk):
        for kp in range(nblk):
            w = rng.uniform(0, 0.5)
            sigma[k, kp] = (1 - w) * rho_blocks[k] + w * random_density_matrix(da, None, rng)
    return rho_blocks, sigma, p


def coherent_instance(rng):
    """``(probs, varrho_k, phi_k, d_B)`` for the coherent purification bound.

    ``phi_k`` purifies a perturbation of ``varrho_k`` on ``A (x) B``.
    """
    nblk = int(rng.integers(1, 4))
    da = int(rng.integers(1, 4))
    db = da + int(rng.integers(0, 2))
    probs = rng.dirichlet(np.ones(nblk))
    states, phis = [], []
    for _ in range(nblk):
        rho_k = random_density_matrix(da, None, rng)
        w = rng.uniform(0, 0.4)
        target = (1 - w) * rho_k + w * random_density_matrix(da, None, rng)
        val, vec = np.linalg.eigh(target)
        m = (vec * np.sqrt(np.clip(val, 0, None))) @ haar_unitary(db, rng)[:da]
        states.append(rho_k)
        phis.append(m.reshape(-1))
    return probs, states, phis, db


def coherent_vector(probs, phis, da, db):
    """``sum_k sqrt(p_k) |k>|k>|phi_k>`` ordered ``X, Y, A, B``."""
    nblk = len(probs)
    out = np.zeros((nblk, nblk, da * db), dtype=np.complex128)
    for k in range(nblk):
        out[k, k] = np.sqrt(probs[k]) * phis[k]
    return out.reshape(-1)


def xa_marginal(vec, nblk, da, db):
    t = vec.reshape(nblk, nblk, da, db)
    return np.einsum("kyab,lycb->kalc", t, t.conj()).reshape(nblk * da, nblk * da)
