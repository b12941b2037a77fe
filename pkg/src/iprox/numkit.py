"""Dense numerical kernels shared by the solver modules.

Matrices are plain 2-D float64 numpy arrays throughout the package. This
module provides the singular value decomposition used by the shrinkage
operators, orthonormal 2-D transforms (DCT-II, Walsh-Hadamard, DFT),
partial measurement operators built from randomly selected transform
coefficients, and a seeded random source with named substreams.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft as _spfft

RNG_ALGORITHM = "pcg64"

DCT2 = "dct2"
WHT = "wht"
FFT2 = "fft2"
KINDS = (DCT2, WHT, FFT2)

_SQRT2 = math.sqrt(2.0)


class SvdError(RuntimeError):
    """Raised when the SVD backend fails to converge."""


def as_matrix(a, name="matrix"):
    """Coerce to a finite 2-D float64 array, copying only if needed."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def svd(mat):
    """Thin singular value decomposition ``mat = U @ diag(s) @ V.T``.

    Parameters
    ----------
    mat : (m, n) array_like
        Real matrix with finite entries.

    Returns
    -------
    U : (m, k) ndarray
    s : (k,) ndarray
        Singular values in nonincreasing order, ``k = min(m, n)``.
    V : (n, k) ndarray

    ``U`` and ``V`` have orthonormal columns and the reconstruction error
    is at machine-precision scale relative to ``max(1, ||mat||_F)``.
    """
    m = as_matrix(mat, "svd input")
    try:
        u, s, vh = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(
            "SVD did not converge: shape=%s frobenius=%.6e max_abs=%.6e"
            % (m.shape, np.linalg.norm(m), np.abs(m).max(initial=0.0))
        ) from exc
    return u, s, vh.T


def fwht(vec):
    """Orthonormal fast Walsh-Hadamard transform in natural order.

    The input length must be a power of two. The transform is scaled by
    ``1/sqrt(n)`` so it is orthonormal, hence also self-inverse.
    """
    v = np.asarray(vec, dtype=np.float64).ravel()
    n = v.size
    if n == 0 or n & (n - 1):
        raise ValueError(f"Walsh-Hadamard length must be a power of two, got {n}")
    a = v.copy()
    h = 1
    while h < n:
        a = a.reshape(-1, 2, h)
        s = a[:, 0, :] + a[:, 1, :]
        d = a[:, 0, :] - a[:, 1, :]
        a = np.stack((s, d), axis=1)
        h *= 2
    return a.ravel() / math.sqrt(n)


def orthonormal_transform(kind, image, inverse=False):
    """Apply an orthonormal 2-D transform, or its inverse, to ``image``.

    ``dct2`` is the orthonormal DCT-II along both axes. ``wht`` applies the
    orthonormal Walsh-Hadamard transform to the row-major vectorized image
    (the total size must be a power of two) and reshapes back; it is its
    own inverse. ``fft2`` is the orthonormal 2-D DFT with complex output.
    All three preserve the Euclidean norm.
    """
    a = np.asarray(image)
    if a.ndim != 2:
        raise ValueError(f"transform input must be 2-D, got shape {a.shape}")
    if kind == DCT2:
        if inverse:
            return _spfft.idctn(a, type=2, norm="ortho")
        return _spfft.dctn(a, type=2, norm="ortho")
    if kind == WHT:
        # self-inverse, so the flag is accepted but changes nothing
        return fwht(a.ravel()).reshape(a.shape)
    if kind == FFT2:
        if inverse:
            return np.fft.ifft2(a, norm="ortho")
        return np.fft.fft2(a, norm="ortho")
    raise ValueError(f"unknown transform kind {kind!r}")


def fft2_half_domain(image_rows, image_cols):
    """Flat indices of one representative per DFT conjugate pair.

    Keeps frequency (r, c) iff it is lexicographically smaller than its
    conjugate ((-r) mod rows, (-c) mod cols); self-conjugate frequencies
    are dropped. Restricting sampling to this set keeps the stacked
    real/imaginary measurement rows orthonormal.
    """
    r = np.arange(image_rows)[:, None]
    c = np.arange(image_cols)[None, :]
    rr = (-r) % image_rows
    cc = (-c) % image_cols
    keep = (r < rr) | ((r == rr) & (c < cc))
    return np.flatnonzero(keep.ravel())


@dataclass(frozen=True)
class MeasurementOp:
    """Partial orthonormal measurement operator on real images.

    Measures ``q`` coefficients, at fixed flat ``indices``, of an
    orthonormal 2-D transform of an ``image_rows x image_cols`` matrix.
    The rows of the operator are orthonormal, so ``apply(adjoint(b)) == b``
    and ``adjoint(apply(X))`` is an orthogonal projection of ``X``.

    For the complex DFT kind, each selected frequency contributes its real
    and imaginary part scaled by sqrt(2), giving a real measurement vector
    of length ``2 q``; the selectable frequencies are restricted to one
    representative per conjugate pair (see :func:`fft2_half_domain`).
    """

    kind: str
    image_rows: int
    image_cols: int
    indices: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown measurement kind {self.kind!r}")
        if self.image_rows < 1 or self.image_cols < 1:
            raise ValueError("image dimensions must be positive")
        mn = self.image_rows * self.image_cols
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size < 1:
            raise ValueError("at least one measurement index is required")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("indices must be strictly increasing")
        if idx[0] < 0 or idx[-1] >= mn:
            raise ValueError("indices out of range")
        if self.kind == WHT and mn & (mn - 1):
            raise ValueError(f"wht needs a power-of-two image size, got {mn}")
        if self.kind == FFT2:
            valid = fft2_half_domain(self.image_rows, self.image_cols)
            if not np.all(np.isin(idx, valid)):
                raise ValueError(
                    "fft2 indices must each name one representative of a "
                    "conjugate frequency pair"
                )
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def q(self):
        """Number of selected transform coefficients."""
        return int(self.indices.size)

    @property
    def complex_mode(self):
        return self.kind == FFT2

    @property
    def measurement_dim(self):
        """Length of the real measurement vector (``2 q`` for fft2)."""
        return 2 * self.q if self.complex_mode else self.q

    def apply(self, image):
        """Measure ``image``: transform, then subsample coefficients."""
        x = np.asarray(image, dtype=np.float64)
        if x.shape != (self.image_rows, self.image_cols):
            raise ValueError(
                f"expected image shape {(self.image_rows, self.image_cols)}, "
                f"got {x.shape}"
            )
        coef = orthonormal_transform(self.kind, x)
        flat = coef.ravel()[self.indices]
        if self.complex_mode:
            return _SQRT2 * np.concatenate([flat.real, flat.imag])
        return np.asarray(flat, dtype=np.float64)

    def adjoint(self, b):
        """Adjoint map: zero-fill coefficients, inverse transform."""
        v = np.asarray(b, dtype=np.float64).ravel()
        if v.size != self.measurement_dim:
            raise ValueError(
                f"expected measurement vector of length {self.measurement_dim}, "
                f"got {v.size}"
            )
        mn = self.image_rows * self.image_cols
        if self.complex_mode:
            z = np.zeros(mn, dtype=np.complex128)
            z[self.indices] = v[: self.q] + 1j * v[self.q :]
            full = orthonormal_transform(
                self.kind, z.reshape(self.image_rows, self.image_cols), inverse=True
            )
            return _SQRT2 * full.real
        z = np.zeros(mn, dtype=np.float64)
        z[self.indices] = v
        out = orthonormal_transform(
            self.kind, z.reshape(self.image_rows, self.image_cols), inverse=True
        )
        return np.asarray(out, dtype=np.float64)


def make_measurement_op(kind, image_rows, image_cols, q, rng):
    """Draw a :class:`MeasurementOp` with ``q`` indices sampled uniformly
    without replacement from the kind's valid coefficient set.

    Same ``rng`` seed, same operator. For ``fft2`` the valid set is one
    representative per conjugate pair, so ``q`` is capped at roughly half
    the image size; for ``wht`` the image size must be a power of two.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown measurement kind {kind!r}")
    mn = image_rows * image_cols
    if kind == FFT2:
        domain = fft2_half_domain(image_rows, image_cols)
    else:
        domain = np.arange(mn, dtype=np.int64)
    if not 1 <= q <= domain.size:
        raise ValueError(
            f"q={q} out of range [1, {domain.size}] for kind {kind!r} on a "
            f"{image_rows}x{image_cols} image"
        )
    idx = rng.choice_without_replacement(domain, q)
    return MeasurementOp(kind, image_rows, image_cols, idx)


class SeededRng:
    """Deterministic random source (PCG64) with named substreams.

    The same seed reproduces the same draws on any platform. Substreams
    are derived by name with :meth:`derive`, so for instance the stream
    that picks a sparse support never collides with the stream that picks
    measurement indices. Normal variates come from the generator's
    ziggurat sampler.
    """

    algorithm_id = RNG_ALGORITHM

    def __init__(self, seed, _path=()):
        self.seed = int(seed)
        self._path = tuple(int(k) for k in _path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def derive(self, label):
        """Independent substream keyed by ``label`` (and this stream's path)."""
        digest = hashlib.sha256(label.encode("utf8")).digest()
        words = (
            int.from_bytes(digest[:4], "big"),
            int.from_bytes(digest[4:8], "big"),
        )
        return SeededRng(self.seed, self._path + words)

    def normal(self, rows, cols=None):
        """Standard normal draws: a vector, or a ``rows x cols`` matrix."""
        if cols is None:
            return self.generator.standard_normal(int(rows))
        return self.generator.standard_normal((int(rows), int(cols)))

    def uniform(self, lo, hi, n):
        """n draws uniform on [lo, hi)."""
        if not lo < hi:
            raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
        return self.generator.uniform(lo, hi, size=int(n))

    def choice_without_replacement(self, pool, k):
        """Sorted sample of ``k`` distinct elements of ``pool``."""
        picked = self.generator.choice(pool, size=int(k), replace=False)
        return np.sort(picked)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, path={self._path})"
