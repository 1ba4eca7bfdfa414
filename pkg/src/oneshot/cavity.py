"""Desk-scale cavity problems for conductivity-contrast identification.

A scattered field u in a cavity Omega with homogeneous Dirichlet boundary
satisfies, for each of several incident fields u0,

    div(sigma0 grad u) + omega^2 u = div(sigma grad u0)   in Omega,
    u = 0                                                 on the boundary,

where the contrast sigma is supported on a few small squares strictly
inside Omega and the background is sigma0 = sigma0_bar + delta * sigma_r
with a small delta and sigma_r <= 1.  Measurements are the conormal
boundary flux sigma0 du/dnu.  Discretizing u with piecewise-linear
elements on a structured triangulation of a square domain (an internal
stand-in for the disk geometry; the inversion schemes are
discretization-agnostic) and sigma with one constant per rectangular
cell, the system A1 u = A2 sigma with A1 = A11 + delta A12 becomes

    u = B u + M sigma,    B = -delta A11^{-1} A12,   M = A11^{-1} A2,

i.e. a LinearInverseProblem with F = 0 whose ||B|| shrinks linearly in
delta.  The incident fields are point-source traces f_i = Y0(omega |x -
y_i|) imposed as Dirichlet data, with the y_i spread along the square
contour at sup-norm radius source_radius (strictly outside the domain).
The several sources are stacked block-diagonally into one problem with a
shared sigma, so certificates and step bounds apply unchanged; the cost
of the stacked objective is the sum of the per-source costs.

Lengths in the configuration (mesh size, domain half-width, inclusion
geometry, source radius) are expressed in wavelengths lambda =
2 pi sqrt(sigma0_bar) / omega.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bessel import bessel_y0
from .errors import ProblemAssumptionError
from .matrixio import write_matrix
from .problem import LinearInverseProblem, Objective, spectral_radius

#: Relative smallest-singular-value threshold for the resonance check.
RESONANCE_TOL = 1e-8


@dataclass(frozen=True)
class CavityConfig:
    """Geometry, physics and data parameters of one generated cavity.

    inclusion_layout entries are (center_x, center_y, edge) squares in
    wavelength units; sigma_subdivision = (sx, sy) splits every inclusion
    into sx * sy piecewise-constant parameter cells (after snapping to
    the mesh grid), so n_sigma = len(inclusion_layout) * sx * sy.
    sigma_exact / sigma_init are scalars or per-inclusion sequences.
    data_scale multiplies the measurement operator (a choice of units for
    the recorded flux), which sets the scale of rho(A*A) and hence of the
    stable descent steps.  With normalize_data the measurement operator is
    instead rescaled so that the stacked parameter-to-data map has
    spectral norm exactly data_scale; this makes experiments with a fixed
    descent step comparable across mesh sizes, whose raw data scale would
    otherwise drift at coarse desk-scale resolutions.
    """

    omega: float = 2.0 * math.pi
    sigma0_bar: float = 1.0
    delta: float = 0.01
    mesh_h: float = 0.2
    domain_radius: float = 2.0
    inclusion_layout: tuple = ((-1.0, -1.0, 0.5), (1.0, -1.0, 0.5), (0.0, 1.0, 0.5))
    sigma_subdivision: tuple = (1, 2)
    n_sources: int = 6
    source_radius: float | None = None
    sigma_exact: object = 10.0
    sigma_init: object = 12.0
    noise_level: float = 0.0
    rng_seed: int = 0
    random_background: bool = True
    boundary_subsample: int = 2
    data_scale: float = 1.0
    normalize_data: bool = False

    def __post_init__(self):
        for name in ("omega", "sigma0_bar", "mesh_h", "domain_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.delta < 0:
            raise ValueError("delta must be >= 0")
        if self.noise_level < 0:
            raise ValueError("noise_level must be >= 0")
        if self.n_sources < 1:
            raise ValueError("n_sources must be >= 1")
        if self.boundary_subsample < 1:
            raise ValueError("boundary_subsample must be >= 1")
        if not self.data_scale > 0:
            raise ValueError("data_scale must be > 0")
        sx, sy = self.sigma_subdivision
        if sx < 1 or sy < 1:
            raise ValueError("sigma_subdivision entries must be >= 1")
        if not self.inclusion_layout:
            raise ValueError("inclusion_layout must not be empty")
        object.__setattr__(self, "inclusion_layout",
                           tuple(tuple(float(v) for v in inc) for inc in self.inclusion_layout))
        object.__setattr__(self, "sigma_subdivision", (int(sx), int(sy)))

    @property
    def wavelength(self) -> float:
        return 2.0 * math.pi * math.sqrt(self.sigma0_bar) / self.omega

    @property
    def effective_source_radius(self) -> float:
        return self.source_radius if self.source_radius is not None \
            else self.domain_radius + 0.25

    def per_inclusion(self, value) -> np.ndarray:
        n = len(self.inclusion_layout)
        arr = np.atleast_1d(np.asarray(value, dtype=float))
        if arr.size == 1:
            return np.full(n, float(arr[0]))
        if arr.size != n:
            raise ValueError(f"expected a scalar or {n} per-inclusion values")
        return arr.astype(float)


@dataclass(frozen=True, eq=False)
class MeshSummary:
    cells_per_side: int
    h: float
    n_triangles: int
    n_u_single: int
    n_g_single: int
    n_u: int
    n_sigma: int
    n_g: int


@dataclass(frozen=True, eq=False)
class GeneratedCavity:
    problem: LinearInverseProblem
    exact_sigma: np.ndarray
    init_sigma: np.ndarray
    data_clean: tuple
    data_noisy: tuple
    mesh_summary: MeshSummary
    config: CavityConfig
    sigma_cell_centers: np.ndarray

    @property
    def stacked_clean(self) -> np.ndarray:
        return np.concatenate(self.data_clean)

    @property
    def stacked_noisy(self) -> np.ndarray:
        return np.concatenate(self.data_noisy)


# ----------------------------------------------------------------------
# structured P1 triangulation of the square [-R, R]^2
# ----------------------------------------------------------------------

def _build_mesh(R: float, ncell: int):
    n = ncell + 1
    xs = np.linspace(-R, R, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nid = np.arange(n * n).reshape(n, n)
    lower = np.stack([nid[:-1, :-1], nid[1:, :-1], nid[:-1, 1:]], axis=-1)
    upper = np.stack([nid[1:, :-1], nid[1:, 1:], nid[:-1, 1:]], axis=-1)
    tris = np.empty((ncell, ncell, 2, 3), dtype=int)
    tris[:, :, 0, :] = lower
    tris[:, :, 1, :] = upper
    tris = tris.reshape(-1, 3)  # triangle 2*c and 2*c+1 belong to grid cell c
    interior = nid[1:-1, 1:-1].ravel()
    # boundary walked along the perimeter, counter-clockwise from (-R, -R)
    walk = np.concatenate([nid[:-1, 0], nid[-1, :-1], nid[-1:0:-1, -1].ravel(), nid[0, -1:0:-1]])
    return nodes, tris, interior, walk


def _triangle_geometry(nodes, tris):
    p = nodes[tris]                       # (ntri, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    areas = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    b = np.stack([p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1],
                  p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0],
                  p[:, 1, 0] - p[:, 0, 0]], axis=1)
    grads = np.stack([b, c], axis=-1) / (2.0 * areas)[:, None, None]  # (ntri, 3, 2)
    return areas, grads


def _assemble(nodes, tris, areas, grads, stiffness_coef=None, mass=False):
    """Dense assembly of a stiffness (optionally coefficient-weighted) or mass matrix."""
    n = len(nodes)
    if mass:
        template = (np.ones((3, 3)) + np.eye(3)) / 12.0
        local = areas[:, None, None] * template[None, :, :]
    else:
        local = np.einsum("tad,tbd->tab", grads, grads) * areas[:, None, None]
        if stiffness_coef is not None:
            local = local * stiffness_coef[:, None, None]
    out = np.zeros((n, n))
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    np.add.at(out, (rows, cols), local.ravel())
    return out


def _sigma_cells(config: CavityConfig, R: float, h: float, ncell: int):
    """Snap inclusions to the grid and list the triangles of every sigma cell."""
    lam = config.wavelength
    sx, sy = config.sigma_subdivision
    cells = []
    centers = []
    owner = {}
    for idx, (cx, cy, edge) in enumerate(config.inclusion_layout):
        edge_cells = max(1, round(edge * lam / h))
        if edge_cells % sx or edge_cells % sy:
            raise ValueError(
                f"inclusion {idx}: snapped edge of {edge_cells} mesh cells is not "
                f"divisible by sigma_subdivision {config.sigma_subdivision}")
        i0 = round((cx * lam + R) / h - edge_cells / 2)
        j0 = round((cy * lam + R) / h - edge_cells / 2)
        if i0 < 1 or j0 < 1 or i0 + edge_cells > ncell - 1 or j0 + edge_cells > ncell - 1:
            raise ProblemAssumptionError(
                f"inclusion {idx} is not strictly inside the domain "
                f"(needs one clear cell layer to the boundary)")
        px, py = edge_cells // sx, edge_cells // sy
        for a in range(sx):
            for b in range(sy):
                tlist = []
                for ii in range(i0 + a * px, i0 + (a + 1) * px):
                    for jj in range(j0 + b * py, j0 + (b + 1) * py):
                        if (ii, jj) in owner:
                            raise ProblemAssumptionError(
                                f"inclusions {owner[(ii, jj)]} and {idx} overlap")
                        owner[(ii, jj)] = idx
                        cell = ii * ncell + jj
                        tlist += [2 * cell, 2 * cell + 1]
                cells.append((idx, np.array(tlist)))
                centers.append((-R + (i0 + (a + 0.5) * px) * h,
                                -R + (j0 + (b + 0.5) * py) * h))
    return cells, np.array(centers)


def _source_positions(config: CavityConfig):
    """Sources equally spaced along the square contour at sup-norm radius
    effective_source_radius (strictly outside the domain), half-step offset."""
    r = config.effective_source_radius * config.wavelength
    per = 8.0 * r
    pts = []
    for j in range(config.n_sources):
        s = ((j + 0.5) / config.n_sources) * per
        if s < 2 * r:
            pts.append((r, -r + s))
        elif s < 4 * r:
            pts.append((r - (s - 2 * r), r))
        elif s < 6 * r:
            pts.append((-r, r - (s - 4 * r)))
        else:
            pts.append((-r + (s - 6 * r), -r))
    return np.array(pts)


def generate(config: CavityConfig) -> GeneratedCavity:
    """Assemble the stacked multi-source problem plus clean and noisy data.

    Raises ProblemAssumptionError when omega^2 sits too close to a
    discrete resonance of the background operator, when an inclusion is
    not strictly inside the domain, or when rho(B) >= 1.
    """
    lam = config.wavelength
    R = config.domain_radius * lam
    ncell = max(4, round(2.0 * config.domain_radius / config.mesh_h))
    h = 2.0 * R / ncell
    nodes, tris, interior, boundary = _build_mesh(R, ncell)
    areas, grads = _triangle_geometry(nodes, tris)
    rng = np.random.default_rng(config.rng_seed)
    sigma_r = rng.uniform(0.0, 1.0, len(tris)) if config.random_background \
        else np.ones(len(tris))

    K_unit = _assemble(nodes, tris, areas, grads)
    K_rand = _assemble(nodes, tris, areas, grads, stiffness_coef=sigma_r)
    mass = _assemble(nodes, tris, areas, grads, mass=True)
    A11 = config.sigma0_bar * K_unit - config.omega ** 2 * mass
    II = np.ix_(interior, interior)
    IB = np.ix_(interior, boundary)

    A11_II = A11[II]
    sv = scipy.linalg.svdvals(A11_II)
    if sv[-1] <= RESONANCE_TOL * sv[0]:
        raise ProblemAssumptionError(
            "omega^2 is numerically resonant for this discretization "
            f"(smallest/largest singular value of A11 = {sv[-1]:.3e}/{sv[0]:.3e})")

    cells, centers = _sigma_cells(config, R, h, ncell)
    n_sigma = len(cells)
    exact = np.concatenate([np.full(config.sigma_subdivision[0] * config.sigma_subdivision[1], v)
                            for v in config.per_inclusion(config.sigma_exact)])
    init = np.concatenate([np.full(config.sigma_subdivision[0] * config.sigma_subdivision[1], v)
                           for v in config.per_inclusion(config.sigma_init)])

    # single-source operator blocks
    lu = scipy.linalg.lu_factor(A11_II)
    A12_II = K_rand[II]
    B_single = -config.delta * scipy.linalg.lu_solve(lu, A12_II)
    rho = spectral_radius(B_single)
    if rho >= 1.0:
        raise ProblemAssumptionError(
            f"state iteration does not contract: rho(B) = {rho:.4f} >= 1 "
            "(delta too large or too close to resonance)")

    # incident fields and per-source couplings
    A1_full = A11 + config.delta * K_rand
    sources = _source_positions(config)
    M_blocks, states = [], []
    sel = boundary[:: config.boundary_subsample]
    H_single = (config.sigma0_bar * K_unit + config.delta * K_rand
                - config.omega ** 2 * mass)[np.ix_(sel, interior)]
    for y in sources:
        dist = np.linalg.norm(nodes[boundary] - y, axis=1)
        f = bessel_y0(config.omega * dist)
        u0 = np.zeros(len(nodes))
        u0[boundary] = f
        u0[interior] = np.linalg.solve(A1_full[II], -A1_full[IB] @ f)
        # A2 column per sigma cell: integral of grad(u0).grad(phi) over the cell
        A2 = np.zeros((len(nodes), n_sigma))
        for col, (_, tlist) in enumerate(cells):
            tri_nodes = tris[tlist]
            gu0 = np.einsum("tad,ta->td", grads[tlist], u0[tri_nodes])
            contrib = np.einsum("tad,td->ta", grads[tlist], gu0) * areas[tlist, None]
            np.add.at(A2[:, col], tri_nodes.ravel(), contrib.ravel())
        A2_II = A2[interior]
        M_blocks.append(scipy.linalg.lu_solve(lu, A2_II))
        states.append(np.linalg.solve(A1_full[II], A2_II @ exact))

    if config.normalize_data:
        eye_m_B = np.eye(len(interior)) - B_single
        stacked_A = np.vstack([H_single @ np.linalg.solve(eye_m_B, Mb)
                               for Mb in M_blocks])
        H_single = (config.data_scale / np.linalg.norm(stacked_A, 2)) * H_single
    else:
        H_single = config.data_scale * H_single
    data_clean = [H_single @ u_state for u_state in states]

    data_noisy = []
    eps = config.noise_level
    for g in data_clean:
        rel = rng.uniform(-eps, eps, g.shape)
        data_noisy.append(g + rel * g)

    m = config.n_sources
    problem = LinearInverseProblem(
        B=np.kron(np.eye(m), B_single),
        M=np.vstack(M_blocks),
        H=np.kron(np.eye(m), H_single),
        F=np.zeros(m * len(interior)),
        spectral_radius_bound=rho,
    )
    summary = MeshSummary(
        cells_per_side=ncell, h=h, n_triangles=len(tris),
        n_u_single=len(interior), n_g_single=H_single.shape[0],
        n_u=problem.n_u, n_sigma=n_sigma, n_g=problem.n_g)
    return GeneratedCavity(
        problem=problem, exact_sigma=exact, init_sigma=init,
        data_clean=tuple(data_clean), data_noisy=tuple(data_noisy),
        mesh_summary=summary, config=config, sigma_cell_centers=centers)


def multi_source_objective(cavity: GeneratedCavity, alpha: float,
                           use_noisy: bool = False) -> Objective:
    """Objective of the stacked problem: sum of per-source misfits plus
    the shared Tikhonov term."""
    g = cavity.stacked_noisy if use_noisy else cavity.stacked_clean
    return Objective(cavity.problem, g, alpha)


# ----------------------------------------------------------------------
# manifest + container export
# ----------------------------------------------------------------------

_MANIFEST_MAGIC = "oneshot-cavity v1"


def cavity_config_lines(config: CavityConfig) -> list:
    """The canonical ``key = value`` lines describing a configuration."""
    return [
        f"omega = {config.omega!r}",
        f"sigma0_bar = {config.sigma0_bar!r}",
        f"delta = {config.delta!r}",
        f"mesh_h = {config.mesh_h!r}",
        f"domain_radius = {config.domain_radius!r}",
        "inclusion_layout = " + ";".join(
            ",".join(repr(v) for v in inc) for inc in config.inclusion_layout),
        f"sigma_subdivision = {config.sigma_subdivision[0]},{config.sigma_subdivision[1]}",
        f"n_sources = {config.n_sources}",
        f"source_radius = {'' if config.source_radius is None else repr(config.source_radius)}",
        "sigma_exact = " + ",".join(repr(float(v)) for v in np.atleast_1d(config.sigma_exact)),
        "sigma_init = " + ",".join(repr(float(v)) for v in np.atleast_1d(config.sigma_init)),
        f"noise_level = {config.noise_level!r}",
        f"rng_seed = {config.rng_seed}",
        f"random_background = {str(config.random_background).lower()}",
        f"boundary_subsample = {config.boundary_subsample}",
        f"data_scale = {config.data_scale!r}",
        f"normalize_data = {str(config.normalize_data).lower()}",
    ]


def format_manifest(config: CavityConfig, mesh: MeshSummary | None = None) -> str:
    lines = [_MANIFEST_MAGIC]
    if mesh is not None:
        lines += [f"# n_u={mesh.n_u} n_sigma={mesh.n_sigma} n_g={mesh.n_g}",
                  f"# cells_per_side={mesh.cells_per_side} h={mesh.h!r}"]
    lines += cavity_config_lines(config)
    return "\n".join(lines) + "\n"


def parse_cavity_value(key: str, value: str):
    """Parse one manifest / experiment-document cavity entry.

    Raises KeyError for an unknown key and ValueError for a bad value.
    """
    def parse_values(s):
        return tuple(float(v) for v in s.split(",") if v.strip())

    if key in ("omega", "sigma0_bar", "delta", "mesh_h", "domain_radius",
               "noise_level", "data_scale"):
        return float(value)
    if key in ("n_sources", "rng_seed", "boundary_subsample"):
        return int(value)
    if key in ("random_background", "normalize_data"):
        if value.lower() not in ("true", "false"):
            raise ValueError(f"expected true/false, got {value!r}")
        return value.lower() == "true"
    if key == "source_radius":
        return float(value) if value else None
    if key == "inclusion_layout":
        return tuple(parse_values(part) for part in value.split(";") if part.strip())
    if key == "sigma_subdivision":
        sx, sy = value.split(",")
        return (int(sx), int(sy))
    if key in ("sigma_exact", "sigma_init"):
        vals = parse_values(value)
        return vals[0] if len(vals) == 1 else vals
    raise KeyError(key)


def parse_manifest(text: str) -> CavityConfig:
    lines = text.strip().split("\n")
    if not lines or lines[0].strip() != _MANIFEST_MAGIC:
        raise ValueError(f"not a cavity manifest (expected header {_MANIFEST_MAGIC!r})")
    kwargs = {}
    for line in lines[1:]:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key = key.strip()
        try:
            kwargs[key] = parse_cavity_value(key, value.strip())
        except KeyError:
            raise ValueError(f"unknown manifest key {key!r}") from None
    return CavityConfig(**kwargs)


def export_cavity(cavity: GeneratedCavity, directory):
    """Write the matrix container files plus the regeneration manifest."""
    import os

    os.makedirs(directory, exist_ok=True)
    problem = cavity.problem
    write_matrix(os.path.join(directory, "B.txt"), problem.B)
    write_matrix(os.path.join(directory, "M.txt"), problem.M)
    write_matrix(os.path.join(directory, "H.txt"), problem.H)
    write_matrix(os.path.join(directory, "F.txt"), problem.F)
    write_matrix(os.path.join(directory, "g_clean.txt"), cavity.stacked_clean)
    write_matrix(os.path.join(directory, "g_noisy.txt"), cavity.stacked_noisy)
    write_matrix(os.path.join(directory, "sigma_exact.txt"), cavity.exact_sigma)
    write_matrix(os.path.join(directory, "sigma_init.txt"), cavity.init_sigma)
    with open(os.path.join(directory, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_manifest(cavity.config, cavity.mesh_summary))


def load_problem(directory):
    """Re-read an exported problem directory.

    Returns (problem, g_clean, g_noisy); the constructor re-verifies the
    contraction and injectivity invariants.
    """
    import os

    from .matrixio import read_matrix, read_vector

    problem = LinearInverseProblem(
        B=read_matrix(os.path.join(directory, "B.txt")),
        M=read_matrix(os.path.join(directory, "M.txt")),
        H=read_matrix(os.path.join(directory, "H.txt")),
        F=read_vector(os.path.join(directory, "F.txt")),
    )
    g_clean = read_vector(os.path.join(directory, "g_clean.txt"))
    g_noisy = read_vector(os.path.join(directory, "g_noisy.txt"))
    return problem, g_clean, g_noisy
