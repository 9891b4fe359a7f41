"""Small dense linear-algebra helpers for Hermitian positive-definite matrices.

Everything here works on single matrices or on stacks with the matrix in the
last two axes.
"""

import numpy as np

JITTER = 1e-12


def hermitian(a):
    """Return ``(a + a^H) / 2`` over the last two axes."""
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def herm_t(a):
    """Conjugate transpose over the last two axes."""
    return np.conj(np.swapaxes(a, -1, -2))


def _jittered(a):
    n = a.shape[-1]
    tr = np.real(np.trace(a, axis1=-2, axis2=-1))
    scale = JITTER * np.maximum(np.abs(tr), 1e-300) / n
    return a + scale[..., None, None] * np.eye(n)


def cholesky_pd(a):
    """Cholesky factor of a (symmetrized) PD matrix, retrying once with jitter.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the matrix is not positive definite even after the jitter.
    """
    a = hermitian(a)
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        return np.linalg.cholesky(_jittered(a))


def inv_pd(a):
    """Inverse of a Hermitian positive-definite matrix via Cholesky."""
    low = cholesky_pd(a)
    n = a.shape[-1]
    eye = np.broadcast_to(np.eye(n, dtype=low.dtype), low.shape)
    linv = np.linalg.solve(low, eye)
    return hermitian(herm_t(linv) @ linv)


def logdet_pd(a):
    """Natural log-determinant of a Hermitian positive-definite matrix."""
    low = cholesky_pd(a)
    diag = np.real(np.diagonal(low, axis1=-2, axis2=-1))
    return 2.0 * np.sum(np.log(diag), axis=-1)


def realify_hermitian(p):
    """Real symmetric matrix R with ``z^H P z = x^T R x`` for ``x = [Re z; Im z]``."""
    pr, pi = np.real(p), np.imag(p)
    return np.block([[pr, -pi], [pi, pr]])


def realify_vector(q):
    """Real vector c with ``Re(q^H z) = c^T x`` for ``x = [Re z; Im z]``."""
    return np.concatenate([np.real(q), np.imag(q)])


def complexify(x):
    """Inverse of the ``[Re z; Im z]`` stacking."""
    n = x.shape[0] // 2
    return x[:n] + 1j * x[n:]
