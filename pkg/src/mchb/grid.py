"""Cell-centered rectangular grid and second-order difference operators.

All fields live at cell centers of a uniform rectangular mesh.  Gradients are
evaluated at cell faces (x-faces have shape ``(ny, nx+1)``, y-faces
``(ny+1, nx)``); the divergence of a face vector is the compact flux balance,
so ``divergence(gradient(f)) == laplacian(f)`` holds to machine precision and
summation by parts is exact for zero-flux closures.  Cell-centered gradients
are obtained by averaging the two adjacent faces, which reproduces the usual
centered stencil in the interior.

Boundary closures are ghost-cell based:

* ``neumann-zero``   mirror ghost, zero normal derivative at the face,
* ``dirichlet-zero`` sign-flipped ghost, zero value at the face,
* ``extrapolate``    linear one-sided ghost for fields without a physical
  boundary condition (velocities, assembled forces),
* ``robin``          flux closure ``c dfdn = k (target - f)`` at the face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.fft import dctn, idctn


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on the rectangle [0, lx] x [0, ly]."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"cell counts must be >= 8, got {self.nx}x{self.ny}")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain extents must be positive")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def ncells(self) -> int:
        return self.nx * self.ny

    def cell_centers(self):
        x = (np.arange(self.nx) + 0.5) * self.hx
        y = (np.arange(self.ny) + 0.5) * self.hy
        return np.meshgrid(x, y)


# ---------------------------------------------------------------------------
# boundary conditions

@dataclass(frozen=True)
class Neumann:
    """Zero normal derivative (mirror ghost)."""


@dataclass(frozen=True)
class Dirichlet:
    """Zero face value (sign-flipped ghost)."""


@dataclass(frozen=True)
class Extrapolate:
    """Linear one-sided ghost; no physical condition imposed."""


@dataclass(frozen=True)
class Robin:
    """Flux closure ``diffusivity * dfdn = k (target - f)`` at the face."""

    k: float
    target: float
    diffusivity: float


BC = Neumann | Dirichlet | Extrapolate | Robin

NEUMANN = Neumann()
DIRICHLET = Dirichlet()
EXTRAPOLATE = Extrapolate()


@dataclass
class Field:
    """Scalar lattice with a boundary closure, the unit the operators act on."""

    data: np.ndarray
    bc: BC
    grid: Grid

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float)
        if self.data.shape != self.grid.shape:
            raise ValueError(
                f"field shape {self.data.shape} does not match grid {self.grid.shape}")

    def copy(self) -> "Field":
        return Field(self.data.copy(), self.bc, self.grid)


@dataclass
class FaceVector:
    """Vector quantity stored on cell faces (gx on x-faces, gy on y-faces)."""

    gx: np.ndarray
    gy: np.ndarray
    grid: Grid


def _ghost(edge: np.ndarray, nxt: np.ndarray, nxt2: np.ndarray, bc: BC,
           h: float) -> np.ndarray:
    """Ghost layer just outside the wall given the three interior layers."""
    if isinstance(bc, Neumann):
        return edge
    if isinstance(bc, Dirichlet):
        return -edge
    if isinstance(bc, Extrapolate):
        # quadratic fit keeps one-sided differences second order at the wall
        return 3.0 * edge - 3.0 * nxt + nxt2
    if isinstance(bc, Robin):
        c = bc.diffusivity
        denom = c / h + 0.5 * bc.k
        return (bc.k * bc.target + (c / h - 0.5 * bc.k) * edge) / denom
    raise TypeError(f"unknown boundary condition {bc!r}")


def face_gradient(f: Field) -> FaceVector:
    """Differences at the faces, boundary faces closed through ghost cells."""
    g = f.grid
    a = f.data
    gx = np.empty((g.ny, g.nx + 1))
    gy = np.empty((g.ny + 1, g.nx))
    gx[:, 1:-1] = (a[:, 1:] - a[:, :-1]) / g.hx
    gy[1:-1, :] = (a[1:, :] - a[:-1, :]) / g.hy
    gl = _ghost(a[:, 0], a[:, 1], a[:, 2], f.bc, g.hx)
    gr = _ghost(a[:, -1], a[:, -2], a[:, -3], f.bc, g.hx)
    gx[:, 0] = (a[:, 0] - gl) / g.hx
    gx[:, -1] = (gr - a[:, -1]) / g.hx
    gb = _ghost(a[0, :], a[1, :], a[2, :], f.bc, g.hy)
    gt = _ghost(a[-1, :], a[-2, :], a[-3, :], f.bc, g.hy)
    gy[0, :] = (a[0, :] - gb) / g.hy
    gy[-1, :] = (gt - a[-1, :]) / g.hy
    return FaceVector(gx, gy, g)


def face_divergence(v: FaceVector) -> np.ndarray:
    """Compact flux balance of a face vector, one value per cell."""
    g = v.grid
    return (v.gx[:, 1:] - v.gx[:, :-1]) / g.hx + (v.gy[1:, :] - v.gy[:-1, :]) / g.hy


def gradient(f: Field) -> FaceVector:
    return face_gradient(f)


def divergence(v: FaceVector) -> Field:
    return Field(face_divergence(v), NEUMANN, v.grid)


def laplacian(f: Field) -> Field:
    return divergence(gradient(f))


def faces_from_cells(f: Field) -> FaceVector:
    """Interpolate cell values onto faces (averaging, ghosts at the walls)."""
    g = f.grid
    a = f.data
    fx = np.empty((g.ny, g.nx + 1))
    fy = np.empty((g.ny + 1, g.nx))
    fx[:, 1:-1] = 0.5 * (a[:, 1:] + a[:, :-1])
    fy[1:-1, :] = 0.5 * (a[1:, :] + a[:-1, :])
    gl = _ghost(a[:, 0], a[:, 1], a[:, 2], f.bc, g.hx)
    gr = _ghost(a[:, -1], a[:, -2], a[:, -3], f.bc, g.hx)
    fx[:, 0] = 0.5 * (a[:, 0] + gl)
    fx[:, -1] = 0.5 * (a[:, -1] + gr)
    gb = _ghost(a[0, :], a[1, :], a[2, :], f.bc, g.hy)
    gt = _ghost(a[-1, :], a[-2, :], a[-3, :], f.bc, g.hy)
    fy[0, :] = 0.5 * (a[0, :] + gb)
    fy[-1, :] = 0.5 * (a[-1, :] + gt)
    return FaceVector(fx, fy, g)


def cell_gradient(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Centered gradient at cell centers (face average of ``face_gradient``)."""
    fv = face_gradient(f)
    gx = 0.5 * (fv.gx[:, 1:] + fv.gx[:, :-1])
    gy = 0.5 * (fv.gy[1:, :] + fv.gy[:-1, :])
    return gx, gy


def cell_divergence(vx: Field, vy: Field) -> np.ndarray:
    """Centered divergence of a cell vector via face interpolation."""
    fx = faces_from_cells(vx)
    fy = faces_from_cells(vy)
    return face_divergence(FaceVector(fx.gx, fy.gy, vx.grid))


def inner_product(f, g) -> float:
    """Midpoint-quadrature inner product; accepts Field or FaceVector pairs."""
    if isinstance(f, FaceVector) and isinstance(g, FaceVector):
        gr = f.grid
        w = gr.cell_area
        return float((f.gx * g.gx).sum() * w + (f.gy * g.gy).sum() * w)
    fa = f.data if isinstance(f, Field) else np.asarray(f)
    ga = g.data if isinstance(g, Field) else np.asarray(g)
    if fa.shape != ga.shape:
        raise ValueError(f"shape mismatch {fa.shape} vs {ga.shape}")
    grid = f.grid if isinstance(f, Field) else g.grid
    return float((fa * ga).sum() * grid.cell_area)


def wall_traces(f: Field) -> list[tuple[np.ndarray, float]]:
    """Boundary-face traces (ghost-interior midpoints) with edge lengths."""
    g = f.grid
    a = f.data
    out = []
    gl = _ghost(a[:, 0], a[:, 1], a[:, 2], f.bc, g.hx)
    out.append((0.5 * (a[:, 0] + gl), g.hy))
    gr = _ghost(a[:, -1], a[:, -2], a[:, -3], f.bc, g.hx)
    out.append((0.5 * (a[:, -1] + gr), g.hy))
    gb = _ghost(a[0, :], a[1, :], a[2, :], f.bc, g.hy)
    out.append((0.5 * (a[0, :] + gb), g.hx))
    gt = _ghost(a[-1, :], a[-2, :], a[-3, :], f.bc, g.hy)
    out.append((0.5 * (a[-1, :] + gt), g.hx))
    return out


def boundary_integral(f: Field) -> float:
    """Edge-midpoint quadrature of the boundary trace of ``f``."""
    return float(sum(tr.sum() * h for tr, h in wall_traces(f)))


def spectral_project(f: Field, k: int) -> Field:
    """Projection onto the first k x k tensor cosine (Neumann-Laplacian) modes.

    The cell-centered type-II DCT diagonalizes the mirror-ghost Laplacian, so
    these discrete modes are the exact finite-difference analogues of the
    continuous Neumann eigenfunctions; mode (0, 0) is the constant
    ``|domain|**-0.5``.  The projection is orthogonal and idempotent.
    """
    g = f.grid
    if not isinstance(f.bc, Neumann):
        raise ValueError("spectral projection requires a neumann-zero field")
    if k < 1 or k > min(g.nx, g.ny):
        raise ValueError(f"mode count {k} out of range 1..{min(g.nx, g.ny)}")
    coeff = dctn(f.data, type=2, norm="ortho")
    coeff[k:, :] = 0.0
    coeff[:, k:] = 0.0
    return Field(idctn(coeff, type=2, norm="ortho"), f.bc, g)


# ---------------------------------------------------------------------------
# sparse operators (row-major flattening, index j*nx + i)

def _gradient_matrix_1d(n: int, h: float, ghost: str) -> sp.csr_matrix:
    """Centered first derivative with a one-sided ghost closure at the walls."""
    rows, cols, vals = [], [], []
    inv2h = 1.0 / (2.0 * h)
    for i in range(n):
        if 0 < i < n - 1:
            rows += [i, i]
            cols += [i - 1, i + 1]
            vals += [-inv2h, inv2h]
            continue
        lo = i == 0
        j0, j1 = (0, 1) if lo else (n - 1, n - 2)
        sign = 1.0 if lo else -1.0
        if ghost == "mirror":       # ghost = f[j0]
            rows += [i, i]
            cols += [j1, j0]
            vals += [sign * inv2h, -sign * inv2h]
        elif ghost == "flip":       # ghost = -f[j0]
            rows += [i, i]
            cols += [j1, j0]
            vals += [sign * inv2h, sign * inv2h]
        elif ghost == "extrapolate":  # quadratic ghost, one-sided 3-point
            j2 = 2 if lo else n - 3
            rows += [i, i, i]
            cols += [j0, j1, j2]
            vals += [-sign * 3 * inv2h, sign * 4 * inv2h, -sign * inv2h]
        else:
            raise ValueError(f"unknown ghost kind {ghost!r}")
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def cell_gradient_matrix(grid: Grid, axis: int, ghost: str) -> sp.csr_matrix:
    """Sparse cell-centered d/dx (axis=0) or d/dy (axis=1) on flattened fields."""
    if axis == 0:
        g1 = _gradient_matrix_1d(grid.nx, grid.hx, ghost)
        return sp.kron(sp.identity(grid.ny, format="csr"), g1, format="csr")
    g1 = _gradient_matrix_1d(grid.ny, grid.hy, ghost)
    return sp.kron(g1, sp.identity(grid.nx, format="csr"), format="csr")


def robin_face_coefficient(k: float, diffusivity, h: float):
    """Effective Robin transfer coefficient once the ghost cell is eliminated."""
    return k / (1.0 + k * h / (2.0 * diffusivity))


def fv_diffusion_matrix(grid: Grid, bc: BC, coeff_x=None, coeff_y=None):
    """Assemble ``u -> -div(c grad u)`` in flux form; returns (matrix, rhs).

    ``coeff_x``/``coeff_y`` are face coefficient arrays of shapes
    ``(ny, nx+1)`` and ``(ny+1, nx)`` (default 1).  The rhs carries the
    inhomogeneous Robin contribution; it is zero for the other closures.
    """
    ny, nx = grid.ny, grid.nx
    hx, hy = grid.hx, grid.hy
    cx = np.ones((ny, nx + 1)) if coeff_x is None else np.asarray(coeff_x, dtype=float)
    cy = np.ones((ny + 1, nx)) if coeff_y is None else np.asarray(coeff_y, dtype=float)
    n = grid.ncells
    idx = np.arange(n).reshape(ny, nx)
    diag = np.zeros((ny, nx))
    rows, cols, vals = [], [], []
    rhs = np.zeros((ny, nx))

    tx = cx[:, 1:-1] / hx**2
    diag[:, :-1] += tx
    diag[:, 1:] += tx
    rows.append(idx[:, :-1].ravel()); cols.append(idx[:, 1:].ravel()); vals.append(-tx.ravel())
    rows.append(idx[:, 1:].ravel()); cols.append(idx[:, :-1].ravel()); vals.append(-tx.ravel())

    ty = cy[1:-1, :] / hy**2
    diag[:-1, :] += ty
    diag[1:, :] += ty
    rows.append(idx[:-1, :].ravel()); cols.append(idx[1:, :].ravel()); vals.append(-ty.ravel())
    rows.append(idx[1:, :].ravel()); cols.append(idx[:-1, :].ravel()); vals.append(-ty.ravel())

    walls = [
        (np.s_[:, 0], cx[:, 0], hx),
        (np.s_[:, -1], cx[:, -1], hx),
        (np.s_[0, :], cy[0, :], hy),
        (np.s_[-1, :], cy[-1, :], hy),
    ]
    if isinstance(bc, Dirichlet):
        for sl, cw, h in walls:
            diag[sl] += 2.0 * cw / h**2
    elif isinstance(bc, Robin):
        for sl, cw, h in walls:
            kt = robin_face_coefficient(bc.k, cw, h)
            diag[sl] += kt / h
            rhs[sl] += kt * bc.target / h
    elif not isinstance(bc, Neumann):
        raise TypeError(f"unsupported closure for diffusion assembly: {bc!r}")

    rows.append(idx.ravel()); cols.append(idx.ravel()); vals.append(diag.ravel())
    mat = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return mat, rhs.ravel()


def arithmetic_face_coefficients(c: np.ndarray, grid: Grid):
    """Face coefficients from a cell coefficient by arithmetic averaging."""
    cx = np.empty((grid.ny, grid.nx + 1))
    cy = np.empty((grid.ny + 1, grid.nx))
    cx[:, 1:-1] = 0.5 * (c[:, 1:] + c[:, :-1])
    cx[:, 0] = c[:, 0]
    cx[:, -1] = c[:, -1]
    cy[1:-1, :] = 0.5 * (c[1:, :] + c[:-1, :])
    cy[0, :] = c[0, :]
    cy[-1, :] = c[-1, :]
    return cx, cy


def advective_divergence(q: Field, vx: np.ndarray, vy: np.ndarray,
                         s_v: np.ndarray) -> np.ndarray:
    """Convective term ``(grad q) . v + q s_v`` with upwind-biased gradients.

    Second-order upwind in the interior; the two ghost layers come from the
    symmetric (mirror) extension, matching the zero-flux closure of the
    transported fields.
    """
    g = q.grid
    a = np.pad(q.data, 2, mode="symmetric")
    inv2hx = 1.0 / (2.0 * g.hx)
    inv2hy = 1.0 / (2.0 * g.hy)
    c = a[2:-2, 2:-2]
    qx_m = (3.0 * c - 4.0 * a[2:-2, 1:-3] + a[2:-2, :-4]) * inv2hx
    qx_p = (-3.0 * c + 4.0 * a[2:-2, 3:-1] - a[2:-2, 4:]) * inv2hx
    qy_m = (3.0 * c - 4.0 * a[1:-3, 2:-2] + a[:-4, 2:-2]) * inv2hy
    qy_p = (-3.0 * c + 4.0 * a[3:-1, 2:-2] - a[4:, 2:-2]) * inv2hy
    qx = np.where(vx >= 0.0, qx_m, qx_p)
    qy = np.where(vy >= 0.0, qy_m, qy_p)
    return qx * vx + qy * vy + q.data * s_v
