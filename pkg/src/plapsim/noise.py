"""Multiplicative integral-operator noise and Q-Wiener increment sampling.

The diffusion coefficient sends a state v to the operator

    (B(t, v) phi)(x) = sigma(t, v(x)) * integral k(x, y) phi(y) dy,

discretized with one quadrature weight h^d per interior node.  Its
Hilbert-Schmidt norm has the closed form sum_i sigma(t, v_i)^2 *
||k(x_i, .)||_2^2 * h^d, which the Parseval route over any complete discrete
orthonormal basis must reproduce exactly.  Wiener increments come from a
truncated Karhunen-Loeve expansion driven by a counter-based generator, so
a path's increments depend only on (seed, path_index, counter).
"""

from dataclasses import dataclass, field

import numpy as np

from .spatial import Grid, GridMismatchError, norm_l2, norm_lp

__all__ = [
    "Kernel",
    "kernel_from_matrix",
    "gaussian_kernel",
    "rank_one_kernel",
    "kernel_to_csv",
    "kernel_from_csv",
    "NoiseOperator",
    "RawSigma",
    "apply_B",
    "hs_norm_sq",
    "hs_norm_sq_parseval",
    "sine_basis",
    "hs_uniform_bound",
    "b_lipschitz_constant",
    "holder_modulus_check",
    "QWienerSampler",
    "default_sampler",
]


@dataclass(frozen=True)
class Kernel:
    """Symmetric square-integrable kernel sampled at the grid nodes.

    c_k is the discrete essential sup over x of ||k(x, .)||_2^2 (the max
    weighted row norm) and l2_norm_sq the discrete ||k||^2 over D x D.
    """

    grid: Grid
    values: np.ndarray
    c_k: float
    l2_norm_sq: float

    def row_norms_sq(self):
        return np.sum(self.values ** 2, axis=1) * self.grid.weight


def kernel_from_matrix(grid, values, sym_tol=1e-9):
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.size, grid.size):
        raise GridMismatchError(
            f"kernel matrix must be {(grid.size, grid.size)}, got {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("kernel matrix contains non-finite values")
    asym = np.max(np.abs(values - values.T))
    scale = max(1.0, np.max(np.abs(values)))
    if asym > sym_tol * scale:
        raise ValueError(f"kernel matrix is not symmetric (defect {asym:g})")
    rows = np.sum(values ** 2, axis=1) * grid.weight
    return Kernel(grid=grid, values=values, c_k=float(np.max(rows)),
                  l2_norm_sq=float(np.sum(rows) * grid.weight))


def gaussian_kernel(grid, ell=0.25, scale=1.0):
    """k(x, y) = scale * exp(-|x-y|^2 / (2 ell^2))."""
    x = grid.nodes()
    d_sq = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=-1)
    return kernel_from_matrix(grid, scale * np.exp(-d_sq / (2.0 * ell ** 2)))


def rank_one_kernel(grid, profile):
    """k(x, y) = phi(x) phi(y) for a grid function phi."""
    phi = grid.check(profile)
    return kernel_from_matrix(grid, np.outer(phi, phi))


def kernel_to_csv(kernel, path):
    """Row-major CSV; the header row carries the grid size."""
    with open(path, "w") as fh:
        fh.write(f"n,{kernel.grid.n_interior},d,{kernel.grid.dimension}\n")
        for row in kernel.values:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def kernel_from_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if len(header) != 4 or header[0] != "n" or header[2] != "d":
            raise ValueError(f"malformed kernel header in {path}: {header}")
        grid = Grid(dimension=int(header[3]), n_interior=int(header[1]))
        values = np.loadtxt(fh, delimiter=",", ndmin=2)
    return kernel_from_matrix(grid, values)


@dataclass(frozen=True)
class RawSigma:
    """Adapter exposing a HolderSpec's evaluator under the sampler call shape."""

    spec: object

    def __call__(self, t, lam):
        return self.spec.eval(t, lam)


@dataclass(frozen=True)
class NoiseOperator:
    """Kernel plus the (regularized or raw) scalar coefficient."""

    kernel: Kernel
    sigma: object

    @property
    def grid(self):
        return self.kernel.grid


def apply_B(op, t, v, phi):
    """B(t, v) applied to phi: sigma(t, v) times the kernel quadrature of phi."""
    grid = op.grid
    v, phi = grid.check(v), grid.check(phi)
    smoothed = op.kernel.values @ phi * grid.weight
    return np.asarray(op.sigma(t, v), dtype=float) * smoothed


def hs_norm_sq(op, t, v):
    """Closed-form squared Hilbert-Schmidt norm of B(t, v)."""
    grid = op.grid
    v = grid.check(v)
    sig = np.asarray(op.sigma(t, v), dtype=float)
    return float(np.sum(sig ** 2 * op.kernel.row_norms_sq()) * grid.weight)


def sine_basis(grid):
    """Complete discrete orthonormal basis of products of sine modes, (size, size)."""
    n = grid.n_interior
    i = np.arange(1, n + 1)
    modes = np.sqrt(2.0) * np.sin(np.pi * np.outer(i, i) * grid.h)
    if grid.dimension == 1:
        return modes
    flat = np.einsum("ki,lj->klij", modes, modes).reshape(n * n, n * n)
    return flat


def hs_norm_sq_parseval(op, t, v, basis=None):
    """Independent route: sum of ||B(t,v) e||_2^2 over a complete orthonormal basis."""
    grid = op.grid
    if basis is None:
        basis = sine_basis(grid)
    basis = np.asarray(basis, dtype=float)
    if basis.shape != (grid.size, grid.size):
        raise GridMismatchError(
            f"basis must be {(grid.size, grid.size)}, got {basis.shape}")
    total = 0.0
    for e in basis:
        total += norm_l2(grid, apply_B(op, t, v, e)) ** 2
    return float(total)


def hs_uniform_bound(kernel, spec, v):
    """Right side of the state-dependent HS bound for the regularized operator.

    2 * ((c_alpha^2 + c_sigma) ||k||^2 + c_sigma c_k ||v||_2^2), valid
    uniformly over the regularization level.
    """
    from .regularize import c_alpha

    ca = c_alpha(spec.alpha, spec.l_alpha) if spec.alpha < 1.0 else 0.0
    v2 = norm_l2(kernel.grid, v) ** 2
    return 2.0 * ((ca ** 2 + spec.c_sigma) * kernel.l2_norm_sq
                  + spec.c_sigma * kernel.c_k * v2)


def b_lipschitz_constant(kernel, n):
    """Lipschitz constant sqrt(c_k) * n of the level-n diffusion operator."""
    return float(np.sqrt(kernel.c_k) * n)


def holder_modulus_check(kernel, spec, v, w, t=0.0, rel_tol=1e-6, abs_tol=1e-9):
    """Check the Holder modulus of the raw diffusion operator.

    lhs = ||B(t,v) - B(t,w)||_HS^2 must stay below
    c_k * l_alpha^2 * ||v-w||_{2 alpha}^{2 alpha} and, one power-mean step
    further, below c_k * l_alpha^2 * |D_h|^(1-alpha) * ||v-w||_2^(2 alpha).
    Both inequalities are exact discretely; the report carries the measured
    values and pass flags.
    """
    grid = kernel.grid
    v, w = grid.check(v), grid.check(w)
    dsig = np.asarray(spec.eval(t, v), dtype=float) - np.asarray(spec.eval(t, w),
                                                                 dtype=float)
    lhs = float(np.sum(dsig ** 2 * np.sum(kernel.values ** 2, axis=1)
                       * grid.weight) * grid.weight)
    alpha, l_alpha = spec.alpha, spec.l_alpha
    diff = v - w
    frac_norm = float(np.sum(np.abs(diff) ** (2.0 * alpha)) * grid.weight)
    bound = kernel.c_k * l_alpha ** 2 * frac_norm
    bound_embedded = (kernel.c_k * l_alpha ** 2
                      * grid.measure ** (1.0 - alpha)
                      * norm_l2(grid, diff) ** (2.0 * alpha))
    tol = lambda b: rel_tol * abs(b) + abs_tol
    report = {
        "lhs": lhs,
        "bound": bound,
        "bound_embedded": bound_embedded,
        "modulus_pass": bool(lhs <= bound + tol(bound)),
        "embedded_pass": bool(lhs <= bound_embedded + tol(bound_embedded)),
    }
    report["pass"] = bool(report["modulus_pass"] and report["embedded_pass"])
    return report


def _normals(seed, path_index, counter, size):
    # each call owns a disjoint 2^128-block region of the Philox counter space
    bitgen = np.random.Philox(key=[int(seed), int(path_index)],
                              counter=[0, 0, int(counter), 0])
    return np.random.Generator(bitgen).standard_normal(size)


@dataclass
class QWienerSampler:
    """Truncated Karhunen-Loeve sampler for Q-Wiener increments.

    Increment = sum_j sqrt(q_j dt) xi_j e_j with iid standard normal xi.
    The stream is fully described by (seed, path_index, counter): every
    sample_increment call consumes one counter tick, so adding paths or
    reordering path execution never perturbs existing draws.
    """

    grid: Grid
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray
    seed: int
    path_index: int
    counter: int = 0
    ortho_tol: float = field(default=1e-10, repr=False)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.eigenfunctions = np.asarray(self.eigenfunctions, dtype=float)
        j = self.eigenvalues.size
        if self.eigenfunctions.shape != (j, self.grid.size):
            raise GridMismatchError(
                f"eigenfunctions must be {(j, self.grid.size)}, got "
                f"{self.eigenfunctions.shape}")
        if j < 1 or np.any(self.eigenvalues <= 0.0):
            raise ValueError("eigenvalues must be positive")
        gram = (self.eigenfunctions @ self.eigenfunctions.T) * self.grid.weight
        defect = np.max(np.abs(gram - np.eye(j)))
        if defect > self.ortho_tol:
            raise ValueError(
                f"eigenfunctions not orthonormal (defect {defect:g} exceeds "
                f"{self.ortho_tol:g})")

    @property
    def trace(self):
        return float(np.sum(self.eigenvalues))

    @property
    def state(self):
        return (self.seed, self.path_index, self.counter)

    def sample_increment(self, dt):
        """One increment of the Q-Wiener process over a step of length dt >= 0."""
        if dt < 0.0:
            raise ValueError(f"dt must be nonnegative, got {dt}")
        xi = _normals(self.seed, self.path_index, self.counter, self.eigenvalues.size)
        self.counter += 1
        return (np.sqrt(self.eigenvalues * dt) * xi) @ self.eigenfunctions

    def sample_bridge(self, dt, dw):
        """Split a sampled increment over [0, dt] into two conditionally
        correct halves (Brownian bridge midpoint refinement)."""
        xi = _normals(self.seed, self.path_index, self.counter, self.eigenvalues.size)
        self.counter += 1
        half = 0.5 * dw + 0.5 * (np.sqrt(self.eigenvalues * dt) * xi) @ self.eigenfunctions
        return half, dw - half


def default_sampler(grid, seed, path_index, num_modes=None, decay=2.0):
    """Sine eigenfunctions with spectrum q_j = j**(-decay), j = 1..num_modes."""
    if num_modes is None:
        num_modes = grid.size
    if not 1 <= num_modes <= grid.size:
        raise ValueError(f"num_modes must lie in [1, {grid.size}]")
    funcs = sine_basis(grid)[:num_modes]
    eigenvalues = np.arange(1, num_modes + 1, dtype=float) ** (-decay)
    return QWienerSampler(grid=grid, eigenvalues=eigenvalues,
                          eigenfunctions=funcs, seed=seed, path_index=path_index)
