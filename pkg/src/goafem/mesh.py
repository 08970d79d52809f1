"""Conforming simplicial meshes in 1D and 2D and their refinement.

Triangles are stored counterclockwise with the reference edge between local
vertices 0 and 1, so the newest vertex is always local vertex 2.  Refinement
is newest vertex bisection (NVB) with closure; intervals are bisected at their
midpoint.  Meshes are never modified in place, ``refine`` returns a new one.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# local edge k of a triangle, edge 0 is the reference edge
TRIANGLE_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Simplicial mesh.

    Attributes
    ----------
    vertices : ndarray, shape (n_vertices, d)
    elements : ndarray, shape (n_elements, d + 1)
        Vertex indices; for triangles counterclockwise with the reference
        edge first.
    generation : ndarray, shape (n_elements,)
        Number of bisections separating each element from the initial mesh.
    """

    vertices: np.ndarray
    elements: np.ndarray
    generation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "elements", _frozen(self.elements, np.int64))
        object.__setattr__(self, "generation", _frozen(self.generation, np.int64))
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (1, 2):
            raise ValueError("vertices must have shape (n, 1) or (n, 2)")
        if self.elements.shape[1] != self.dimension + 1:
            raise ValueError("element arity does not match the dimension")
        if len(self.generation) != len(self.elements):
            raise ValueError("one generation counter per element expected")

    @property
    def dimension(self):
        return self.vertices.shape[1]

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @cached_property
    def jacobians(self):
        """Affine maps ``x = v0 + J xi``, shape (n_elements, d, d)."""
        p = self.vertices[self.elements]
        J = (p[:, 1:, :] - p[:, :1, :]).transpose(0, 2, 1)
        J.flags.writeable = False
        return J

    @cached_property
    def inverse_jacobians(self):
        inv = np.linalg.inv(self.jacobians)
        inv.flags.writeable = False
        return inv

    @cached_property
    def measures(self):
        """Signed lengths (1D) or areas (2D)."""
        det = np.linalg.det(self.jacobians) if self.dimension == 2 else self.jacobians[:, 0, 0]
        if self.dimension == 2:
            det = 0.5 * det
        det.flags.writeable = False
        return det

    @cached_property
    def h(self):
        """Element sizes ``|T|**(1/d)``."""
        return np.abs(self.measures) ** (1.0 / self.dimension)

    @cached_property
    def centroids(self):
        return self.vertices[self.elements].mean(axis=1)

    @cached_property
    def _facets(self):
        """Unique facets and the element-to-facet map.

        Facets are vertices in 1D and edges in 2D.  Returns
        ``(facets, elem2facet, counts)``.
        """
        if self.dimension == 1:
            local = self.elements.reshape(-1, 1)
        else:
            local = np.sort(self.elements[:, TRIANGLE_EDGES].reshape(-1, 2), axis=1)
        facets, inverse, counts = np.unique(local, axis=0, return_inverse=True,
                                            return_counts=True)
        return facets, inverse.reshape(self.n_elements, -1), counts

    @property
    def edges(self):
        """Unique edges (2D) as sorted vertex pairs."""
        if self.dimension != 2:
            raise ValueError("edges are defined for triangle meshes only")
        return self._facets[0]

    @property
    def element_edges(self):
        """Global edge index of local edge k, shape (n_elements, 3)."""
        if self.dimension != 2:
            raise ValueError("edges are defined for triangle meshes only")
        return self._facets[1]

    @cached_property
    def boundary_facets(self):
        facets, _, counts = self._facets
        return facets[counts == 1]

    @cached_property
    def interior_facets(self):
        """Interior facets with their two neighbours.

        Returns ``(facet_vertices, elements (k, 2), local_index (k, 2))`` where
        ``local_index`` is the local edge number (2D) or local vertex number
        (1D) of the facet inside each neighbour.
        """
        facets, e2f, counts = self._facets
        nloc = e2f.shape[1]
        flat = e2f.ravel()
        order = np.argsort(flat, kind="stable")
        sorted_f = flat[order]
        interior = counts[sorted_f] == 2
        pos = order[interior].reshape(-1, 2)
        fidx = sorted_f[interior].reshape(-1, 2)[:, 0]
        return facets[fidx], pos // nloc, pos % nloc

    @cached_property
    def boundary_vertices(self):
        return np.unique(self.boundary_facets.ravel())


@dataclass(frozen=True, eq=False)
class RefinementRelation:
    """Links a refined mesh to its parent.

    ``parent_of[i]`` is the coarse element containing fine element ``i``;
    ``refined_set`` lists the coarse elements that were bisected.
    """

    parent_of: np.ndarray
    refined_set: np.ndarray

    @cached_property
    def unrefined_children(self):
        """Fine indices of elements present in both meshes and their
        coarse indices, as ``(fine, coarse)``."""
        counts = np.bincount(self.parent_of)
        fine = np.flatnonzero(counts[self.parent_of] == 1)
        return fine, self.parent_of[fine]


def initial_mesh_1d(a, b, n):
    """``n`` equal intervals on ``[a, b]``."""
    if not a < b:
        raise ValueError(f"need a < b, got a={a}, b={b}")
    if n < 1 or int(n) != n:
        raise ValueError(f"need a positive number of intervals, got {n}")
    n = int(n)
    x = np.linspace(a, b, n + 1)
    elements = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    return Mesh(x[:, None], elements, np.zeros(n, dtype=np.int64))


def initial_mesh_unit_square():
    """Two right triangles of the unit square sharing the diagonal
    (0,0)-(1,1), which is the reference edge of both."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[2, 0, 1], [0, 2, 3]])
    return Mesh(vertices, elements, np.zeros(2, dtype=np.int64))


def _check_marked(mesh, marked):
    marked = np.unique(np.asarray(list(marked) if not isinstance(marked, np.ndarray)
                                  else marked, dtype=np.int64))
    if marked.size and (marked[0] < 0 or marked[-1] >= mesh.n_elements):
        raise IndexError("marked element index out of range")
    return marked


def _refine_1d(mesh, marked):
    flag = np.zeros(mesh.n_elements, dtype=bool)
    flag[marked] = True
    el = mesh.elements
    n_new = int(flag.sum())
    mid_idx = np.full(mesh.n_elements, -1, dtype=np.int64)
    mid_idx[flag] = mesh.n_vertices + np.arange(n_new)
    mids = mesh.vertices[el[flag]].mean(axis=1)
    vertices = np.vstack([mesh.vertices, mids])

    nchild = 1 + flag
    start = np.concatenate([[0], np.cumsum(nchild)[:-1]])
    out = np.empty((int(nchild.sum()), 2), dtype=np.int64)
    gen = np.empty(len(out), dtype=np.int64)
    parent = np.repeat(np.arange(mesh.n_elements), nchild)
    keep = ~flag
    out[start[keep]] = el[keep]
    gen[start[keep]] = mesh.generation[keep]
    s = start[flag]
    m = mid_idx[flag]
    out[s] = np.column_stack([el[flag, 0], m])
    out[s + 1] = np.column_stack([m, el[flag, 1]])
    gen[s] = gen[s + 1] = mesh.generation[flag] + 1
    return Mesh(vertices, out, gen), RefinementRelation(parent, marked)


def _refine_2d(mesh, marked):
    el = mesh.elements
    e2e = mesh.element_edges
    edges = mesh.edges
    cut = np.zeros(len(edges), dtype=bool)
    cut[e2e[marked, 0]] = True
    # closure: an element with any cut edge must have its reference edge cut
    while True:
        need = cut[e2e].any(axis=1) & ~cut[e2e[:, 0]]
        if not need.any():
            break
        cut[e2e[need, 0]] = True

    n_new = int(cut.sum())
    edge_mid = np.full(len(edges), -1, dtype=np.int64)
    edge_mid[cut] = mesh.n_vertices + np.arange(n_new)
    vertices = np.vstack([mesh.vertices, mesh.vertices[edges[cut]].mean(axis=1)])

    ref = cut[e2e[:, 0]]
    c1 = cut[e2e[:, 1]] & ref
    c2 = cut[e2e[:, 2]] & ref
    nchild = 1 + ref + c1 + c2
    start = np.concatenate([[0], np.cumsum(nchild)[:-1]])
    total = int(nchild.sum())
    out = np.empty((total, 3), dtype=np.int64)
    gen = np.empty(total, dtype=np.int64)
    parent = np.repeat(np.arange(mesh.n_elements), nchild)
    g = mesh.generation

    keep = ~ref
    out[start[keep]] = el[keep]
    gen[start[keep]] = g[keep]

    v0, v1, v2 = el[:, 0], el[:, 1], el[:, 2]
    m0 = edge_mid[e2e[:, 0]]
    m1 = edge_mid[e2e[:, 1]]
    m2 = edge_mid[e2e[:, 2]]

    # first child (v2, v0, m), bisected again if edge v2-v0 is cut
    a = ref & ~c2
    out[start[a]] = np.column_stack([v2[a], v0[a], m0[a]])
    gen[start[a]] = g[a] + 1
    b = c2
    out[start[b]] = np.column_stack([m0[b], v2[b], m2[b]])
    out[start[b] + 1] = np.column_stack([v0[b], m0[b], m2[b]])
    gen[start[b]] = gen[start[b] + 1] = g[b] + 2

    # second child (v1, v2, m), bisected again if edge v1-v2 is cut
    second = start + 1 + c2
    a = ref & ~c1
    out[second[a]] = np.column_stack([v1[a], v2[a], m0[a]])
    gen[second[a]] = g[a] + 1
    b = c1
    out[second[b]] = np.column_stack([m0[b], v1[b], m1[b]])
    out[second[b] + 1] = np.column_stack([v2[b], m0[b], m1[b]])
    gen[second[b]] = gen[second[b] + 1] = g[b] + 2

    relation = RefinementRelation(parent, np.flatnonzero(ref))
    return Mesh(vertices, out, gen), relation


def refine(mesh, marked):
    """Bisect the marked elements and whatever closure requires.

    Parameters
    ----------
    mesh : Mesh
    marked : iterable of int
        Element indices to refine.

    Returns
    -------
    (Mesh, RefinementRelation)
        Children are numbered in the order of their parents.
    """
    marked = _check_marked(mesh, marked)
    if mesh.dimension == 1:
        return _refine_1d(mesh, marked)
    return _refine_2d(mesh, marked)


def uniform_refine(mesh):
    """Bisect every element once (plus closure in 2D)."""
    return refine(mesh, np.arange(mesh.n_elements))


def triangle_angles(mesh):
    """Interior angles, shape (n_elements, 3)."""
    p = mesh.vertices[mesh.elements]
    angles = np.empty((mesh.n_elements, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cos = np.einsum("ij,ij->i", u, v) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        angles[:, k] = np.arccos(np.clip(cos, -1.0, 1.0))
    return angles


def mesh_quality(mesh):
    """``h_max``, ``h_min`` (with ``h_T = |T|**(1/d)``) and, in 2D, the
    smallest interior angle in radians."""
    q = {"h_max": float(mesh.h.max()), "h_min": float(mesh.h.min())}
    if mesh.dimension == 2:
        q["min_angle"] = float(triangle_angles(mesh).min())
    return q


def conformity_defects(mesh):
    """List the ways ``mesh`` fails to be a valid conforming mesh.

    An empty list means: positive measures, distinct vertices, every facet
    shared by at most two elements and no hanging (midpoint) vertices on
    facets that are seen by one element only.
    """
    problems = []
    if np.any(mesh.measures <= 0):
        problems.append(f"{int(np.sum(mesh.measures <= 0))} elements with nonpositive measure")
    _, counts = np.unique(mesh.vertices, axis=0, return_counts=True)
    if np.any(counts > 1):
        problems.append("duplicate vertices")
    facets, _, fcounts = mesh._facets
    if np.any(fcounts > 2):
        problems.append("facet shared by more than two elements")
    if mesh.dimension == 2:
        once = facets[fcounts == 1]
        mids = mesh.vertices[once].mean(axis=1)
        lookup = {tuple(v) for v in mesh.vertices}
        hanging = sum(tuple(m) in lookup for m in mids)
        if hanging:
            problems.append(f"{hanging} hanging nodes")
    else:
        used = np.unique(mesh.elements)
        if len(mesh.boundary_facets) != 2:
            problems.append("1D mesh is not a single interval")
        if len(used) != mesh.n_vertices:
            problems.append("unused vertices")
    return problems


def write_vtk(path, mesh, cell_data=None, title="goafem mesh"):
    """Write a legacy ASCII VTK unstructured grid.

    ``cell_data`` maps names to per-element arrays.
    """
    nv = mesh.n_vertices
    pts = np.zeros((nv, 3))
    pts[:, : mesh.dimension] = mesh.vertices
    k = mesh.dimension + 1
    cell_type = 5 if mesh.dimension == 2 else 3
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [" ".join(repr(float(c)) for c in row) for row in pts]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (k + 1)}")
    lines += [f"{k} " + " ".join(str(int(i)) for i in row) for row in mesh.elements]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(cell_type)] * mesh.n_elements
    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_elements}")
        for name, values in cell_data.items():
            values = np.asarray(values, dtype=float)
            if len(values) != mesh.n_elements:
                raise ValueError(f"cell data {name!r} has wrong length")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [repr(float(v)) for v in values]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
