"""Gaussian mollifiers, box grid functions, and the discrete negative-order norm.

The mollifier is delta_eps(X) = (pi eps)^(-3/2) exp(-|X|^2/eps) with Fourier
transform exp(-eps |xi|^2 / 4).  The H^{-m1} norm is surrogated by a
Fourier-weighted l2 norm on the bounding box: (sum |fhat|^2 (1+|xi|^2)^{-m1}
dxi / (2 pi)^3)^{1/2}, which reduces to the plain L2 norm at m1 = 0.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve1d

_MAGIC = b"PDGF"


@dataclass
class GridFunction:
    """Real samples at the cell centers of a uniform box grid."""

    box_lo: np.ndarray
    box_hi: np.ndarray
    values: np.ndarray   # (nx, ny, nz)

    def __post_init__(self):
        self.box_lo = np.asarray(self.box_lo, dtype=float).reshape(3)
        self.box_hi = np.asarray(self.box_hi, dtype=float).reshape(3)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or min(self.values.shape) < 4:
            raise ValueError("grid values must be 3-d with at least 4 cells per axis")

    @property
    def shape(self):
        return self.values.shape

    @property
    def spacing(self) -> np.ndarray:
        return (self.box_hi - self.box_lo) / np.asarray(self.shape, dtype=float)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_coords(self, axis: int) -> np.ndarray:
        n = self.shape[axis]
        return self.box_lo[axis] + (np.arange(n) + 0.5) * self.spacing[axis]

    def copy_with(self, values) -> "GridFunction":
        return GridFunction(self.box_lo.copy(), self.box_hi.copy(), np.asarray(values, dtype=float))


def mollifier_values(eps: float, X) -> np.ndarray:
    """delta_eps(X) = (pi eps)^(-3/2) exp(-|X|^2/eps)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    X = np.asarray(X, dtype=float)
    r2 = np.sum(X * X, axis=-1)
    return np.exp(-r2 / eps) / (np.pi * eps) ** 1.5


def mollifier_fourier(eps: float, xi) -> float:
    """Fourier transform of delta_eps: exp(-eps |xi|^2 / 4)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    xi = np.asarray(xi, dtype=float)
    return float(np.exp(-eps * float(np.sum(xi * xi)) / 4.0))


def mollifier_fourier_quadrature(eps: float, xi, n: int = 4000) -> float:
    """Direct numeric Fourier integral of delta_eps; separable product of 1-d integrals."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    xi = np.asarray(xi, dtype=float).reshape(3)
    half = 8.0 * np.sqrt(eps)
    t = np.linspace(-half, half, n)
    g = np.exp(-t * t / eps) / np.sqrt(np.pi * eps)
    out = 1.0
    for a in range(3):
        out *= np.trapezoid(g * np.cos(xi[a] * t), t)
    return float(out)


def _kernel_1d(eps: float, dx: float) -> np.ndarray:
    """Sampled Gaussian, tails cut at 6 sqrt(eps), renormalized to unit mass."""
    reach = max(int(np.ceil(6.0 * np.sqrt(eps) / dx)), 1)
    t = np.arange(-reach, reach + 1) * dx
    k = np.exp(-t * t / eps)
    return k / k.sum()


def mollify(f: GridFunction, eps: float) -> GridFunction:
    """Separable discrete Gaussian convolution; zero extension beyond the box."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    out = f.values
    for axis in range(3):
        out = convolve1d(out, _kernel_1d(eps, f.spacing[axis]), axis=axis,
                         mode="constant", cval=0.0)
    return f.copy_with(out)


def _freq_grid(f: GridFunction):
    axes = [2.0 * np.pi * np.fft.fftfreq(f.shape[a], d=f.spacing[a]) for a in range(3)]
    kx, ky, kz = np.meshgrid(*axes, indexing="ij")
    return kx * kx + ky * ky + kz * kz


def negative_norm(f: GridFunction, m1: int) -> float:
    """Discrete H^{-m1} surrogate.

    (sum_k |fhat(xi_k)|^2 (1+|xi_k|^2)^{-m1} dxi / (2 pi)^3)^{1/2} with fhat the
    DFT of the samples scaled by the cell volume; at m1 = 0 this is the plain
    discrete L2 norm (Parseval).  A surrogate, not the exact dual norm.
    """
    if m1 < 0:
        raise ValueError("m1 must be >= 0")
    fhat = np.fft.fftn(f.values) * f.cell_volume
    k2 = _freq_grid(f)
    weight = (1.0 + k2) ** (-float(m1))
    box = np.prod(f.box_hi - f.box_lo)
    dxi = (2.0 * np.pi) ** 3 / float(box)
    total = np.sum(np.abs(fhat) ** 2 * weight) * dxi / (2.0 * np.pi) ** 3
    return float(np.sqrt(total))


def negative_norm_bound_constant(f: GridFunction) -> float:
    """C with ||f||_{-m1} <= C ||f||_inf for every m1 >= 0: sqrt(box volume)."""
    return float(np.sqrt(np.prod(f.box_hi - f.box_lo)))


def save_grid_function(f: GridFunction, path) -> None:
    """Binary: magic, shape, box corners, then row-major float64 samples."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<3i", *f.shape))
        fh.write(struct.pack("<6d", *f.box_lo, *f.box_hi))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_grid_function(path) -> GridFunction:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a grid-function file")
        shape = struct.unpack("<3i", fh.read(12))
        box = struct.unpack("<6d", fh.read(48))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(shape)
    return GridFunction(np.array(box[:3]), np.array(box[3:]), data.copy())


def grid_function_to_json(f: GridFunction) -> str:
    """JSON export for small grids."""
    return json.dumps({
        "box_lo": f.box_lo.tolist(),
        "box_hi": f.box_hi.tolist(),
        "shape": list(f.shape),
        "values": f.values.ravel().tolist(),
    })


def grid_function_from_json(text: str) -> GridFunction:
    data = json.loads(text)
    values = np.asarray(data["values"], dtype=float).reshape(data["shape"])
    return GridFunction(np.array(data["box_lo"]), np.array(data["box_hi"]), values)
