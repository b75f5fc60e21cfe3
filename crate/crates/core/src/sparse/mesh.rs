use super::{from_triplets, Pattern, SparseError, SymbolicSparseMatrix};
use crate::trace::{Scalar, Sym, Tracer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Where a sparsity pattern comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatternBuilder {
    Grid { w: usize, h: usize },
    Random { n: usize, nnz_per_row: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// Combinatorial Laplacian with constant weights.
    Uniform,
    /// Edge-vector cotangent weights on the triangulated grid.
    Cotan,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshLaplacianSpec {
    pub builder: PatternBuilder,
    pub weighting: Weighting,
}

/// Regular grid of `w × h` vertices, each quad split into two triangles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TriGrid {
    pub w: usize,
    pub h: usize,
    pub faces: Vec<[usize; 3]>,
}

impl TriGrid {
    pub fn new(w: usize, h: usize) -> Result<Self, SparseError> {
        if w < 2 || h < 2 {
            return Err(SparseError::DegenerateMesh { w, h });
        }
        let mut faces = Vec::with_capacity(2 * (w - 1) * (h - 1));
        for y in 0..h - 1 {
            for x in 0..w - 1 {
                let v00 = y * w + x;
                let (v10, v01, v11) = (v00 + 1, v00 + w, v00 + w + 1);
                faces.push([v00, v10, v01]);
                faces.push([v10, v11, v01]);
            }
        }
        Ok(TriGrid { w, h, faces })
    }

    pub fn vertex_count(&self) -> usize {
        self.w * self.h
    }

    /// Rest position of vertex `v` (unit spacing).
    pub fn rest_position(&self, v: usize) -> [f64; 2] {
        [(v % self.w) as f64, (v / self.w) as f64]
    }

    /// Unique undirected edges, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Symmetric vertex adjacency pattern including the diagonal.
    pub fn pattern(&self) -> Pattern {
        let n = self.vertex_count();
        let coords = self
            .edges()
            .into_iter()
            .flat_map(|(a, b)| [(a, b), (b, a)])
            .chain((0..n).map(|v| (v, v)));
        Pattern::from_coords(n, n, coords).expect("grid indices are in range")
    }
}

/// Five-point stencil pattern of a `w × h` grid.
pub fn grid_pattern(w: usize, h: usize) -> Result<Pattern, SparseError> {
    if w < 2 || h < 2 {
        return Err(SparseError::DegenerateMesh { w, h });
    }
    let mut coords = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = y * w + x;
            coords.push((v, v));
            if x > 0 {
                coords.push((v, v - 1));
            }
            if x + 1 < w {
                coords.push((v, v + 1));
            }
            if y > 0 {
                coords.push((v, v - w));
            }
            if y + 1 < h {
                coords.push((v, v + w));
            }
        }
    }
    Pattern::from_coords(w * h, w * h, coords)
}

/// `n × n` pattern with exactly `nnz_per_row` distinct columns in every row.
pub fn random_pattern(n: usize, nnz_per_row: usize, seed: u64) -> Result<Pattern, SparseError> {
    if nnz_per_row > n || n == 0 {
        return Err(SparseError::InvalidPattern(format!(
            "cannot place {nnz_per_row} entries per row in {n} columns"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords = Vec::with_capacity(n * nnz_per_row);
    for i in 0..n {
        let cols = rand::seq::index::sample(&mut rng, n, nnz_per_row);
        coords.extend(cols.into_iter().map(|j| (i, j)));
    }
    Pattern::from_coords(n, n, coords)
}

/// Per-face cotangent contributions: for the corner opposite each edge,
/// `dot(e1, e2) / (2 * A2)` where `A2 = sqrt(cross^2)` is twice the face area.
/// Returns the three edge weights (edges opposite corners 0, 1, 2) and the
/// lumped mass `A2 / 6` given to each corner.
pub fn cotan_face<S: Scalar>(p: [[S; 2]; 3]) -> ([S; 3], S) {
    let e01 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
    let e02 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
    let cross = e01[0] * e02[1] - e01[1] * e02[0];
    let a2 = (cross * cross).sqrt();
    let corner = |k: usize| {
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        let u = [p[i][0] - p[k][0], p[i][1] - p[k][1]];
        let v = [p[j][0] - p[k][0], p[j][1] - p[k][1]];
        (u[0] * v[0] + u[1] * v[1]) / (a2 * 2.0)
    };
    ([corner(0), corner(1), corner(2)], a2 / 6.0)
}

/// Triplets of the cotan-style Laplacian and lumped mass matrix, plus the
/// per-face values `[w0, w1, w2, mass]` for block tagging.
pub struct CotanTriplets<S> {
    pub laplacian: Vec<(usize, usize, S)>,
    pub mass: Vec<(usize, usize, S)>,
    pub face_values: Vec<[S; 4]>,
}

pub fn cotan_triplets<S: Scalar>(grid: &TriGrid, pos: &[[S; 2]]) -> CotanTriplets<S> {
    let mut laplacian = Vec::with_capacity(grid.faces.len() * 12);
    let mut mass = Vec::with_capacity(grid.faces.len() * 3);
    let mut face_values = Vec::with_capacity(grid.faces.len());
    for f in &grid.faces {
        let (w, m) = cotan_face([pos[f[0]], pos[f[1]], pos[f[2]]]);
        for k in 0..3 {
            let (i, j) = (f[(k + 1) % 3], f[(k + 2) % 3]);
            let c = w[k];
            laplacian.push((i, j, c));
            laplacian.push((j, i, c));
            laplacian.push((i, i, -c));
            laplacian.push((j, j, -c));
            mass.push((f[k], f[k], m));
        }
        face_values.push([w[0], w[1], w[2], m]);
    }
    CotanTriplets {
        laplacian,
        mass,
        face_values,
    }
}

/// Build a Laplacian-style operator. Cotan weighting needs one `[x, y]`
/// symbolic position per grid vertex.
pub fn build_operator<'t>(
    tracer: &'t Tracer,
    spec: &MeshLaplacianSpec,
    vertex_vars: &[[Sym<'t>; 2]],
) -> Result<SymbolicSparseMatrix, SparseError> {
    match (&spec.builder, spec.weighting) {
        (PatternBuilder::Grid { w, h }, Weighting::Uniform) => uniform_from_pattern(tracer, grid_pattern(*w, *h)?),
        (&PatternBuilder::Random { n, nnz_per_row, seed }, Weighting::Uniform) => {
            uniform_from_pattern(tracer, random_pattern(n, nnz_per_row, seed)?)
        }
        (PatternBuilder::Grid { w, h }, Weighting::Cotan) => {
            let grid = TriGrid::new(*w, *h)?;
            if vertex_vars.len() != grid.vertex_count() {
                return Err(SparseError::InvalidPattern(format!(
                    "cotan weighting needs {} vertex positions, got {}",
                    grid.vertex_count(),
                    vertex_vars.len()
                )));
            }
            let t = cotan_triplets(&grid, vertex_vars);
            let triplets: Vec<_> = t.laplacian.iter().map(|&(i, j, s)| (i, j, s.expr())).collect();
            let n = grid.vertex_count();
            from_triplets(&mut tracer.arena_mut(), n, n, &triplets)
        }
        (PatternBuilder::Random { .. }, Weighting::Cotan) => {
            Err(SparseError::InvalidPattern("cotan weighting needs a grid mesh".into()))
        }
    }
}

fn uniform_from_pattern(tracer: &Tracer, p: Pattern) -> Result<SymbolicSparseMatrix, SparseError> {
    let mut arena = tracer.arena_mut();
    let mut values = Vec::with_capacity(p.nnz());
    for i in 0..p.nrows {
        let deg = p.row(i).iter().filter(|&&j| j != i).count();
        for &j in p.row(i) {
            values.push(if i == j { arena.int(-(deg as i32)) } else { arena.int(1) });
        }
    }
    Ok(SymbolicSparseMatrix { pattern: p, values })
}
