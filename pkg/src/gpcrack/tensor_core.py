"""Closed-form 3x3 tensor algebra.

Every function accepts a single matrix of shape ``(3, 3)`` or a stack of shape
``(..., 3, 3)`` and broadcasts over the leading axes.  Row index = ambient
(deformed) component, column index = reference component, so ``G[j, i]`` is
the index-notation entry G^j_i.

The minor table has a fixed layout of 20 entries::

    [0]      order 0: the constant 1
    [1:10]   order 1: G[j, i], row-major (j outer, i inner)
    [10:19]  order 2: cof(G)[j, i], row-major; cof(G)[j, i] is the signed
             2x2 minor complementary to G[j, i]
    [19]     order 3: det(G)
"""

import numpy as np

# Levi-Civita symbol
EPS = np.zeros((3, 3, 3))
EPS[0, 1, 2] = EPS[1, 2, 0] = EPS[2, 0, 1] = 1.0
EPS[0, 2, 1] = EPS[2, 1, 0] = EPS[1, 0, 2] = -1.0

N_MINORS = 20
MINOR_SLICES = {0: slice(0, 1), 1: slice(1, 10), 2: slice(10, 19), 3: slice(19, 20)}


def cof3(G):
    """Cofactor matrix, ``G @ cof3(G).T == det3(G) * I``."""
    G = np.asarray(G, dtype=float)
    a, b, c = G[..., 0, 0], G[..., 0, 1], G[..., 0, 2]
    d, e, f = G[..., 1, 0], G[..., 1, 1], G[..., 1, 2]
    g, h, i = G[..., 2, 0], G[..., 2, 1], G[..., 2, 2]
    C = np.empty(G.shape)
    C[..., 0, 0] = e * i - f * h
    C[..., 0, 1] = f * g - d * i
    C[..., 0, 2] = d * h - e * g
    C[..., 1, 0] = c * h - b * i
    C[..., 1, 1] = a * i - c * g
    C[..., 1, 2] = b * g - a * h
    C[..., 2, 0] = b * f - c * e
    C[..., 2, 1] = c * d - a * f
    C[..., 2, 2] = a * e - b * d
    return C


def det3(G):
    """Determinant by cofactor expansion along the first row."""
    G = np.asarray(G, dtype=float)
    C = cof3(G)
    return G[..., 0, 0] * C[..., 0, 0] + G[..., 0, 1] * C[..., 0, 1] + G[..., 0, 2] * C[..., 0, 2]


def minors(G):
    """All 20 minors of ``G`` in the layout documented at module level."""
    G = np.asarray(G, dtype=float)
    C = cof3(G)
    out = np.empty(G.shape[:-2] + (N_MINORS,))
    out[..., 0] = 1.0
    out[..., 1:10] = G.reshape(G.shape[:-2] + (9,))
    out[..., 10:19] = C.reshape(G.shape[:-2] + (9,))
    out[..., 19] = G[..., 0, 0] * C[..., 0, 0] + G[..., 0, 1] * C[..., 0, 1] + G[..., 0, 2] * C[..., 0, 2]
    return out


def graph_jacobian(G):
    """Jacobian of the graph map x -> (x, Gx): sqrt of the sum of squared minors."""
    M = minors(G)
    return np.sqrt(np.sum(M * M, axis=-1))


def d_det(G):
    """Gradient of det at ``G`` (equals the cofactor)."""
    return cof3(G)


def d_cof(G, H):
    """Directional derivative of cof at ``G`` along ``H``.

    cof is a homogeneous quadratic, so the polarization identity gives the
    derivative exactly: cof(G + H) - cof(G) - cof(H).
    """
    G = np.asarray(G, dtype=float)
    H = np.asarray(H, dtype=float)
    return cof3(G + H) - cof3(G) - cof3(H)


def d_cof_adjoint(G, P):
    """Adjoint of ``H -> d_cof(G, H)``: returns X with <P, d_cof(G, H)> = <X, H>."""
    return np.einsum("ijk,abc,...ia,...kc->...jb", EPS, EPS, P, G)


def frobenius(T):
    """Frobenius norm over the trailing two axes."""
    T = np.asarray(T, dtype=float)
    return np.sqrt(np.sum(T * T, axis=(-2, -1)))
