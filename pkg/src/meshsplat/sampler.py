"""Area-graded surface sampling via precomputed barycentric tables.

Triangles are graded by the ratio of their area to the largest one, with a
grading threshold of 1/4 per band; a triangle of grade g receives 4**g
points placed at the centroids of the sub-triangles obtained by g levels of
midpoint subdivision. The barycentric weights of those centroids depend only
on the depth, so they are computed once per depth and reused for every
triangle: positions are a single matrix product weights @ triangle_vertices.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import AllDegenerate, DepthTooLarge, TableTooShallow
from .mesh_io import DEGENERATE_AREA, TriangleMesh, face_normals, triangle_areas

MAX_DEPTH = 12
DEFAULT_POINT_BUDGET = 1_000_000


@dataclass(eq=False)
class BarycentricTable:
    """Per-depth matrices of sub-triangle centroid weights.

    levels[n] has shape (4**n, 3); each row (w_a, w_b, w_c) sums to 1. Row
    order is depth-first in the child order (corner a, corner b, corner c,
    center), fixed so sampling output is reproducible.
    """

    levels: list

    @property
    def max_depth(self) -> int:
        return len(self.levels) - 1

    def level(self, depth: int) -> np.ndarray:
        return self.levels[depth]


@dataclass(eq=False)
class GradeAssignment:
    grades: np.ndarray        # per-triangle grade in [0, num_grades)
    num_grades: int

    @property
    def point_counts(self) -> np.ndarray:
        return 4 ** self.grades.astype(np.int64)

    @property
    def total_points(self) -> int:
        return int(self.point_counts.sum())


@dataclass(eq=False)
class SampledCloud:
    positions: np.ndarray    # (N, 3) float64
    source_face: np.ndarray  # (N,) int64 index into the input mesh faces
    normals: np.ndarray      # (N, 3) float64 unit face normal of the source

    def __len__(self) -> int:
        return len(self.positions)


def barycentric_table(max_depth: int) -> BarycentricTable:
    """Build centroid weight matrices for depths 0..max_depth.

    A triangle (a, b, c) splits into (a, m_ab, m_ac), (m_ab, b, m_bc),
    (m_ac, m_bc, c), (m_ab, m_bc, m_ac) with m_xy = (x + y) / 2; the depth-n
    rows are the centroids of the 4**n leaves of that recursion, expressed in
    barycentric coordinates of the root.
    """
    if not 0 <= max_depth <= MAX_DEPTH:
        raise DepthTooLarge(f"max_depth must be in [0, {MAX_DEPTH}], got {max_depth}")

    # corners[t] stacks the barycentric coordinates of triangle t's corners
    corners = np.eye(3, dtype=np.float64)[None, :, :]
    levels = []
    for _ in range(max_depth + 1):
        levels.append((corners[:, 0] + corners[:, 1] + corners[:, 2]) / 3.0)
        a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
        m_ab = (a + b) / 2.0
        m_bc = (b + c) / 2.0
        m_ac = (a + c) / 2.0
        children = np.stack([
            np.stack([a, m_ab, m_ac], axis=1),
            np.stack([m_ab, b, m_bc], axis=1),
            np.stack([m_ac, m_bc, c], axis=1),
            np.stack([m_ab, m_bc, m_ac], axis=1),
        ], axis=1)
        corners = children.reshape(-1, 3, 3)
    return BarycentricTable(levels=levels)


def grade_triangles(areas, num_grades: int) -> GradeAssignment:
    """Assign each triangle a grade from its area ratio to the largest.

    With N = num_grades - 1: ratio in (1/4, 1] gets grade N, each further
    factor of 4 drops one grade (upper bounds inclusive), and everything at
    or below 4**-N collapses into grade 0.
    """
    if not 1 <= num_grades <= MAX_DEPTH + 1:
        raise ValueError(f"num_grades must be in [1, {MAX_DEPTH + 1}], got {num_grades}")
    areas = np.asarray(areas, dtype=np.float64)
    if areas.size == 0 or areas.max() < DEGENERATE_AREA:
        raise AllDegenerate("no triangle area above the degeneracy threshold")

    n = num_grades - 1
    ratios = areas / areas.max()
    cutoffs = 4.0 ** -np.arange(n, 0, -1)   # ascending: 4^-N .. 4^-1
    grades = np.searchsorted(cutoffs, ratios, side="left").astype(np.int64)
    return GradeAssignment(grades=grades, num_grades=num_grades)


def choose_num_grades(areas, budget: int = DEFAULT_POINT_BUDGET):
    """Pick the largest grade count in {9,8,7,6} whose total fits the budget.

    Falls back to 6 with a warning when even that exceeds the budget.
    Returns (num_grades, total_points).
    """
    for num_grades in (9, 8, 7, 6):
        total = grade_triangles(areas, num_grades).total_points
        if total <= budget:
            return num_grades, total
    warnings.warn(
        f"even 6 grades exceeds the point budget ({total} > {budget}); using 6",
        stacklevel=2,
    )
    return 6, total


def usable_faces(mesh: TriangleMesh):
    """Indices of non-degenerate faces and their areas; warns when faces are skipped."""
    areas = triangle_areas(mesh.vertices, mesh.faces)
    keep = np.nonzero(areas >= DEGENERATE_AREA)[0]
    skipped = mesh.num_faces - len(keep)
    if skipped:
        warnings.warn(f"skipping {skipped} degenerate faces", stacklevel=2)
    return keep, areas[keep]


def sample_mesh(mesh: TriangleMesh, num_grades: int, table: BarycentricTable) -> SampledCloud:
    """Sample every non-degenerate face at its graded density.

    Output order is (face index ascending, then table row order); each point
    carries the unit normal of its source face. Points for all faces of one
    grade are produced by a single weights @ vertices product and written to
    precomputed disjoint ranges, so the ordering does not depend on how the
    work is batched.
    """
    if table.max_depth < num_grades - 1:
        raise TableTooShallow(
            f"table depth {table.max_depth} < required {num_grades - 1}"
        )
    keep, areas = usable_faces(mesh)
    if len(keep) == 0:
        raise AllDegenerate("mesh has no usable faces")
    assignment = grade_triangles(areas, num_grades)
    grades = assignment.grades
    counts = assignment.point_counts
    total = assignment.total_points

    starts = np.zeros(len(keep), dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])

    positions = np.empty((total, 3), dtype=np.float64)
    source_face = np.repeat(keep, counts)
    normals = np.repeat(face_normals(mesh.vertices, mesh.faces[keep]), counts, axis=0)

    corner_positions = mesh.vertices[mesh.faces[keep]]   # (T, 3, 3)
    for depth in np.unique(grades):
        sel = grades == depth
        weights = table.level(depth)                     # (R, 3)
        rows = len(weights)
        block = np.einsum("rk,tkd->trd", weights, corner_positions[sel])
        dest = (starts[sel][:, None] + np.arange(rows)[None, :]).ravel()
        positions[dest] = block.reshape(-1, 3)

    return SampledCloud(positions=positions, source_face=source_face, normals=normals)
