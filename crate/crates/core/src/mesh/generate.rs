use std::f64::consts::PI;

use super::{signed_tet_volume, MeshError, Point, VolumetricMesh};

/// Structured `nx × ny × nz` grid over `[0, dims]`, each hexahedral cell
/// split into six tetrahedra around its main diagonal.
///
/// Every cell uses the same diagonal, so neighbouring cells agree on the
/// split of their shared quad and the result is conforming.
pub fn generate_box_mesh(nx: usize, ny: usize, nz: usize, dims: [f64; 3]) -> Result<VolumetricMesh, MeshError> {
    for (name, n) in [("nx", nx), ("ny", ny), ("nz", nz)] {
        if n == 0 {
            return Err(MeshError::InvalidArgument { name, reason: "must be at least 1".into() });
        }
    }
    for (name, d) in [("dims.x", dims[0]), ("dims.y", dims[1]), ("dims.z", dims[2])] {
        if !(d > 0.0 && d.is_finite()) {
            return Err(MeshError::InvalidArgument { name, reason: format!("must be positive, got {d}") });
        }
    }
    let idx = |i: usize, j: usize, k: usize| i + (nx + 1) * (j + (ny + 1) * k);
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for k in 0..=nz {
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(Point::new(
                    dims[0] * i as f64 / nx as f64,
                    dims[1] * j as f64 / ny as f64,
                    dims[2] * k as f64 / nz as f64,
                ));
            }
        }
    }
    const AXIS_ORDERS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                // corner with bit 0 = +x, bit 1 = +y, bit 2 = +z
                let corner = |bits: usize| idx(i + (bits & 1), j + ((bits >> 1) & 1), k + ((bits >> 2) & 1));
                for order in AXIS_ORDERS {
                    let b1 = 1 << order[0];
                    let b2 = b1 | (1 << order[1]);
                    let tet = [corner(0), corner(b1), corner(b2), corner(7)];
                    tets.push(orient(&vertices, tet));
                }
            }
        }
    }
    VolumetricMesh::new(vertices, tets)
}

/// Cylinder approximated by `n_radial` wedges around a central axis, stacked
/// in `n_axial` slabs from `z = 0` to `z = height`.
///
/// Each triangular prism is split into three tets with the quad diagonals
/// chosen from the smallest global vertex id, which keeps shared quads
/// consistent between neighbouring prisms.
pub fn generate_shaft_mesh(radius: f64, height: f64, n_radial: usize, n_axial: usize) -> Result<VolumetricMesh, MeshError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::InvalidArgument { name: "radius", reason: format!("must be positive, got {radius}") });
    }
    if !(height > 0.0 && height.is_finite()) {
        return Err(MeshError::InvalidArgument { name: "height", reason: format!("must be positive, got {height}") });
    }
    if n_radial < 3 {
        return Err(MeshError::InvalidArgument { name: "n_radial", reason: format!("must be at least 3, got {n_radial}") });
    }
    if n_axial < 1 {
        return Err(MeshError::InvalidArgument { name: "n_axial", reason: "must be at least 1".into() });
    }
    let per_level = n_radial + 1;
    let mut vertices = Vec::with_capacity(per_level * (n_axial + 1));
    for k in 0..=n_axial {
        let z = height * k as f64 / n_axial as f64;
        vertices.push(Point::new(0.0, 0.0, z));
        for j in 0..n_radial {
            let theta = 2.0 * PI * j as f64 / n_radial as f64;
            vertices.push(Point::new(radius * theta.cos(), radius * theta.sin(), z));
        }
    }
    let center = |k: usize| k * per_level;
    let ring = |k: usize, j: usize| k * per_level + 1 + (j % n_radial);
    let mut tets = Vec::with_capacity(3 * n_radial * n_axial);
    for k in 0..n_axial {
        for j in 0..n_radial {
            let prism = [center(k), ring(k, j), ring(k, j + 1), center(k + 1), ring(k + 1, j), ring(k + 1, j + 1)];
            for tet in split_prism(prism) {
                tets.push(orient(&vertices, tet));
            }
        }
    }
    VolumetricMesh::new(vertices, tets)
}

/// Prism `[a, b, c, a', b', c']` (bottom triangle then the matching top one)
/// into three tets.
fn split_prism(p: [usize; 6]) -> [[usize; 4]; 3] {
    // relabel so that the smallest id sits at local 0
    let mut best: Option<[usize; 6]> = None;
    for flip in [false, true] {
        for r in 0..3 {
            let (lo, hi) = if flip { (3, 0) } else { (0, 3) };
            let v = [
                p[lo + r],
                p[lo + (r + 1) % 3],
                p[lo + (r + 2) % 3],
                p[hi + r],
                p[hi + (r + 1) % 3],
                p[hi + (r + 2) % 3],
            ];
            if best.is_none_or(|b| v[0] < b[0]) {
                best = Some(v);
            }
        }
    }
    let v = best.expect("six candidates");
    if v[1].min(v[5]) < v[2].min(v[4]) {
        [[v[0], v[1], v[2], v[5]], [v[0], v[1], v[5], v[4]], [v[0], v[4], v[5], v[3]]]
    } else {
        [[v[0], v[1], v[2], v[4]], [v[0], v[4], v[2], v[5]], [v[0], v[4], v[5], v[3]]]
    }
}

fn orient(vertices: &[Point], mut tet: [usize; 4]) -> [usize; 4] {
    let c = tet.map(|v| vertices[v]);
    if signed_tet_volume(&c) < 0.0 {
        tet.swap(2, 3);
    }
    tet
}
