//! Built-in demo programs: sparse matrix expressions, matrix powers, a
//! cotan-style operator and the Hessian of a toy elastic energy.
//!
//! Every program is written against [`Scalar`] where possible, so the same
//! code also runs on `f64` for reference values.

use crate::autodiff::{gradient, hessian, DiffError};
use crate::expr::{ExprArena, ExprRef};
use crate::sparse::{
    cotan_triplets, from_triplets, grid_pattern, parse_mtx, random_pattern, sp_add, sp_mul, sp_scale, sp_transpose,
    Pattern, SparseError, SymbolicSparseMatrix, TriGrid,
};
use crate::trace::{Scalar, Sym, TraceError, Tracer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

/// Largest dimension accepted from a pattern string.
pub const MAX_PATTERN_DIM: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum ProgramError {
    #[error("unknown program '{0}' (expected expr1, expr2, expr3, lpow2..lpow4, cotan or energy-hessian)")]
    UnknownProgram(String),
    #[error("bad pattern '{text}': {msg}")]
    BadPattern { text: String, msg: String },
    #[error("program {program} needs {need}")]
    Incompatible { program: String, need: &'static str },
    #[error("cannot access {path}", path = path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ProgramKind {
    /// `(αA + B)ᵀ(βBᵀ + C)`
    Expr1,
    /// `ABC`
    Expr2,
    /// `(A + B)(AB + C)`
    Expr3,
    /// `L^k` with one variable per stored entry of `L`.
    LPow(u32),
    /// Cotan-style Laplacian and lumped mass matrix of a triangulated grid.
    Cotan,
    /// Gradient and Hessian of a spring plus symmetric Dirichlet energy.
    EnergyHessian,
}

impl fmt::Display for ProgramKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramKind::Expr1 => f.write_str("expr1"),
            ProgramKind::Expr2 => f.write_str("expr2"),
            ProgramKind::Expr3 => f.write_str("expr3"),
            ProgramKind::LPow(k) => write!(f, "lpow{k}"),
            ProgramKind::Cotan => f.write_str("cotan"),
            ProgramKind::EnergyHessian => f.write_str("energy-hessian"),
        }
    }
}

impl FromStr for ProgramKind {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "expr1" => ProgramKind::Expr1,
            "expr2" => ProgramKind::Expr2,
            "expr3" => ProgramKind::Expr3,
            "lpow2" => ProgramKind::LPow(2),
            "lpow3" => ProgramKind::LPow(3),
            "lpow4" => ProgramKind::LPow(4),
            "cotan" => ProgramKind::Cotan,
            "energy-hessian" => ProgramKind::EnergyHessian,
            _ => return Err(ProgramError::UnknownProgram(s.to_string())),
        })
    }
}

impl From<ProgramKind> for String {
    fn from(k: ProgramKind) -> String {
        k.to_string()
    }
}

impl TryFrom<String> for ProgramKind {
    type Error = ProgramError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Sparsity pattern source, written `random:n,nnz,seed`, `grid:WxH` or
/// `mtx:path`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PatternSource {
    Random { n: usize, nnz: usize, seed: u64 },
    Grid { w: usize, h: usize },
    Mtx(PathBuf),
}

impl fmt::Display for PatternSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PatternSource::Random { n, nnz, seed } => write!(f, "random:{n},{nnz},{seed}"),
            PatternSource::Grid { w, h } => write!(f, "grid:{w}x{h}"),
            PatternSource::Mtx(p) => write!(f, "mtx:{}", p.display()),
        }
    }
}

impl FromStr for PatternSource {
    type Err = ProgramError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: &str| ProgramError::BadPattern {
            text: s.chars().take(80).collect(),
            msg: msg.to_string(),
        };
        let (kind, rest) = s.split_once(':').ok_or_else(|| bad("expected kind:arguments"))?;
        let num = |t: &str| -> Result<usize, ProgramError> {
            let t = t.trim();
            if t.is_empty() || !t.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad("expected a decimal integer"));
            }
            t.parse::<usize>().map_err(|_| bad("integer out of range"))
        };
        match kind {
            "random" => {
                let parts: Vec<&str> = rest.split(',').collect();
                if parts.len() != 3 {
                    return Err(bad("expected random:n,nnz,seed"));
                }
                let (n, nnz) = (num(parts[0])?, num(parts[1])?);
                let seed = parts[2]
                    .trim()
                    .parse::<u64>()
                    .map_err(|_| bad("seed must be an unsigned integer"))?;
                if n == 0 || n > MAX_PATTERN_DIM {
                    return Err(bad("n must be between 1 and 2^24"));
                }
                if nnz == 0 || nnz > n {
                    return Err(bad("nnz per row must be between 1 and n"));
                }
                Ok(PatternSource::Random { n, nnz, seed })
            }
            "grid" => {
                let (w, h) = rest.split_once(['x', 'X']).ok_or_else(|| bad("expected grid:WxH"))?;
                let (w, h) = (num(w)?, num(h)?);
                if w < 2 || h < 2 {
                    return Err(bad("grid sides must be at least 2"));
                }
                if w.checked_mul(h).is_none_or(|v| v > MAX_PATTERN_DIM) {
                    return Err(bad("grid has more than 2^24 vertices"));
                }
                Ok(PatternSource::Grid { w, h })
            }
            "mtx" => {
                if rest.is_empty() {
                    return Err(bad("missing path"));
                }
                Ok(PatternSource::Mtx(PathBuf::from(rest)))
            }
            _ => Err(bad("kind must be random, grid or mtx")),
        }
    }
}

impl From<PatternSource> for String {
    fn from(p: PatternSource) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PatternSource {
    type Error = ProgramError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// What to trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramSpec {
    pub program: ProgramKind,
    pub pattern: PatternSource,
    /// Tag per-element blocks (cotan faces, energy Hessian blocks).
    pub tag: bool,
}

/// Shape of one output matrix; outputs are concatenated in CSR order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputMatrix {
    pub name: String,
    pub nrows: usize,
    pub ncols: usize,
    pub nnz: usize,
}

/// Result of tracing a [`ProgramSpec`].
#[derive(Debug)]
pub struct TracedProgram {
    pub arena: ExprArena,
    pub outputs: Vec<ExprRef>,
    pub blocks: Vec<Vec<ExprRef>>,
    pub matrices: Vec<OutputMatrix>,
    /// Rest value of every input for mesh programs; `None` means inputs are
    /// drawn uniformly from `[0.5, 2)`.
    pub rest: Option<Vec<f64>>,
}

impl TracedProgram {
    pub fn n_inputs(&self) -> u32 {
        self.arena.var_count()
    }

    /// Deterministic random inputs: uniform in `[0.5, 2)` for matrix
    /// programs, rest positions jittered by up to 0.2 for mesh programs.
    pub fn inputs(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match &self.rest {
            None => (0..self.n_inputs()).map(|_| rng.gen_range(0.5..2.0)).collect(),
            Some(rest) => rest.iter().map(|&r| r + rng.gen_range(-0.2..0.2)).collect(),
        }
    }
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> ProgramError + '_ {
    move |source| ProgramError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn load_mtx_pattern(path: &std::path::Path) -> Result<Pattern, ProgramError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_mtx(&text)?.pattern)
}

fn square(p: Pattern, program: ProgramKind) -> Result<Pattern, ProgramError> {
    if p.nrows != p.ncols {
        return Err(ProgramError::Incompatible {
            program: program.to_string(),
            need: "a square pattern",
        });
    }
    Ok(p)
}

/// One fresh input variable per stored entry.
fn var_matrix(t: &Tracer, pattern: Pattern) -> SymbolicSparseMatrix {
    let values = t.inputs(pattern.nnz()).into_iter().map(Sym::expr).collect();
    SymbolicSparseMatrix { pattern, values }
}

/// Patterns of A, B and C for the three expression programs.
fn expr_patterns(spec: &ProgramSpec) -> Result<[Pattern; 3], ProgramError> {
    Ok(match &spec.pattern {
        &PatternSource::Random { n, nnz, seed } => [
            random_pattern(n, nnz, seed)?,
            random_pattern(n, nnz, seed.wrapping_add(1))?,
            random_pattern(n, nnz, seed.wrapping_add(2))?,
        ],
        &PatternSource::Grid { w, h } => {
            let p = grid_pattern(w, h)?;
            [p.clone(), p.clone(), p]
        }
        PatternSource::Mtx(path) => {
            let p = square(load_mtx_pattern(path)?, spec.program)?;
            [p.clone(), p.clone(), p]
        }
    })
}

fn grid_of(spec: &ProgramSpec) -> Result<TriGrid, ProgramError> {
    match spec.pattern {
        PatternSource::Grid { w, h } => Ok(TriGrid::new(w, h)?),
        _ => Err(ProgramError::Incompatible {
            program: spec.program.to_string(),
            need: "a grid:WxH pattern",
        }),
    }
}

/// Interleaved `[x, y]` inputs for every grid vertex.
fn vertex_inputs<'t>(t: &'t Tracer, grid: &TriGrid) -> (Vec<[Sym<'t>; 2]>, Vec<f64>) {
    let mut pos = Vec::with_capacity(grid.vertex_count());
    let mut rest = Vec::with_capacity(2 * grid.vertex_count());
    for v in 0..grid.vertex_count() {
        pos.push([t.input(), t.input()]);
        rest.extend(grid.rest_position(v));
    }
    (pos, rest)
}

/// Stretch energy of one spring, `(|b - a| - rest)²`.
pub fn spring_energy<S: Scalar>(a: [S; 2], b: [S; 2], rest: f64) -> S {
    let d = [b[0] - a[0], b[1] - a[1]];
    let e = (d[0] * d[0] + d[1] * d[1]).sqrt() - rest;
    e * e
}

/// `a·ca + b·cb`, leaving out terms with a zero coefficient.
fn lin<S: Scalar>(a: S, ca: f64, b: S, cb: f64) -> S {
    match (ca == 0.0, cb == 0.0) {
        (true, true) => a.lift(0.0),
        (true, false) => b * cb,
        (false, true) => a * ca,
        (false, false) => a * ca + b * cb,
    }
}

/// 2D symmetric Dirichlet energy of a triangle, `A (|F|² + |F⁻¹|²)` with
/// deformation gradient `F` relative to the rest triangle and rest area `A`.
/// Uses `|F⁻¹|² = |F|² / det(F)²` for 2×2 matrices.
pub fn dirichlet_energy<S: Scalar>(p: [[S; 2]; 3], rest: [[f64; 2]; 3]) -> S {
    let dm = [
        [rest[1][0] - rest[0][0], rest[2][0] - rest[0][0]],
        [rest[1][1] - rest[0][1], rest[2][1] - rest[0][1]],
    ];
    let det_m = dm[0][0] * dm[1][1] - dm[0][1] * dm[1][0];
    let inv = [
        [dm[1][1] / det_m, -dm[0][1] / det_m],
        [-dm[1][0] / det_m, dm[0][0] / det_m],
    ];
    let ds = [
        [p[1][0] - p[0][0], p[2][0] - p[0][0]],
        [p[1][1] - p[0][1], p[2][1] - p[0][1]],
    ];
    let f = |r: usize, c: usize| lin(ds[r][0], inv[0][c], ds[r][1], inv[1][c]);
    let (f00, f01, f10, f11) = (f(0, 0), f(0, 1), f(1, 0), f(1, 1));
    let fro = f00 * f00 + f01 * f01 + f10 * f10 + f11 * f11;
    let det = f00 * f11 - f01 * f10;
    (fro + fro / (det * det)) * (det_m.abs() * 0.5)
}

/// Element of the toy energy: a spring on an edge or a Dirichlet triangle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyElement {
    Spring([usize; 2]),
    Triangle([usize; 3]),
}

impl EnergyElement {
    pub fn vertices(&self) -> &[usize] {
        match self {
            EnergyElement::Spring(v) => v,
            EnergyElement::Triangle(v) => v,
        }
    }

    /// Input ids of the element, `x` and `y` of each vertex in turn.
    pub fn vars(&self) -> Vec<u32> {
        self.vertices()
            .iter()
            .flat_map(|&v| [2 * v as u32, 2 * v as u32 + 1])
            .collect()
    }

    pub fn energy<S: Scalar>(&self, grid: &TriGrid, pos: &[[S; 2]]) -> S {
        match *self {
            EnergyElement::Spring([a, b]) => {
                let (ra, rb) = (grid.rest_position(a), grid.rest_position(b));
                let rest = ((rb[0] - ra[0]).powi(2) + (rb[1] - ra[1]).powi(2)).sqrt();
                spring_energy(pos[a], pos[b], rest)
            }
            EnergyElement::Triangle(f) => dirichlet_energy(
                [pos[f[0]], pos[f[1]], pos[f[2]]],
                [
                    grid.rest_position(f[0]),
                    grid.rest_position(f[1]),
                    grid.rest_position(f[2]),
                ],
            ),
        }
    }
}

/// Springs on every edge followed by every triangle.
pub fn energy_elements(grid: &TriGrid) -> Vec<EnergyElement> {
    grid.edges()
        .into_iter()
        .map(|(a, b)| EnergyElement::Spring([a, b]))
        .chain(grid.faces.iter().map(|&f| EnergyElement::Triangle(f)))
        .collect()
}

/// Total toy energy, the sum over [`energy_elements`].
pub fn mesh_energy<S: Scalar>(grid: &TriGrid, pos: &[[S; 2]]) -> S {
    let mut it = energy_elements(grid).into_iter().map(|e| e.energy(grid, pos));
    let first = it.next().expect("a grid has at least one element");
    it.fold(first, |acc, e| acc + e)
}

fn push_matrix(outputs: &mut Vec<ExprRef>, matrices: &mut Vec<OutputMatrix>, name: &str, m: &SymbolicSparseMatrix) {
    outputs.extend_from_slice(&m.values);
    matrices.push(OutputMatrix {
        name: name.to_string(),
        nrows: m.nrows(),
        ncols: m.ncols(),
        nnz: m.nnz(),
    });
}

pub fn trace_program(spec: &ProgramSpec) -> Result<TracedProgram, ProgramError> {
    let t = Tracer::new();
    let mut outputs = Vec::new();
    let mut matrices = Vec::new();
    let mut rest = None;
    match spec.program {
        ProgramKind::Expr1 | ProgramKind::Expr2 | ProgramKind::Expr3 => {
            let [pa, pb, pc] = expr_patterns(spec)?;
            let scalars = if spec.program == ProgramKind::Expr1 {
                Some((t.input().expr(), t.input().expr()))
            } else {
                None
            };
            let (a, b, c) = (var_matrix(&t, pa), var_matrix(&t, pb), var_matrix(&t, pc));
            let mut ar = t.arena_mut();
            let m = match spec.program {
                ProgramKind::Expr1 => {
                    let (alpha, beta) = scalars.expect("expr1 has scalars");
                    let sa = sp_scale(&mut ar, &a, alpha);
                    let left = sp_add(&mut ar, &sa, &b)?;
                    let sb = sp_scale(&mut ar, &sp_transpose(&b), beta);
                    let right = sp_add(&mut ar, &sb, &c)?;
                    sp_mul(&mut ar, &sp_transpose(&left), &right)?
                }
                ProgramKind::Expr2 => {
                    let ab = sp_mul(&mut ar, &a, &b)?;
                    sp_mul(&mut ar, &ab, &c)?
                }
                _ => {
                    let s = sp_add(&mut ar, &a, &b)?;
                    let ab = sp_mul(&mut ar, &a, &b)?;
                    let r = sp_add(&mut ar, &ab, &c)?;
                    sp_mul(&mut ar, &s, &r)?
                }
            };
            push_matrix(&mut outputs, &mut matrices, "result", &m);
        }
        ProgramKind::LPow(k) => {
            let p = match &spec.pattern {
                &PatternSource::Grid { w, h } => TriGrid::new(w, h)?.pattern(),
                &PatternSource::Random { n, nnz, seed } => random_pattern(n, nnz, seed)?,
                PatternSource::Mtx(path) => square(load_mtx_pattern(path)?, spec.program)?,
            };
            let l = var_matrix(&t, p);
            let mut ar = t.arena_mut();
            let mut m = l.clone();
            for _ in 1..k.max(1) {
                m = sp_mul(&mut ar, &m, &l)?;
            }
            push_matrix(&mut outputs, &mut matrices, "power", &m);
        }
        ProgramKind::Cotan => {
            let grid = grid_of(spec)?;
            let (pos, r) = vertex_inputs(&t, &grid);
            rest = Some(r);
            let tr = cotan_triplets(&grid, &pos);
            if spec.tag {
                for f in &tr.face_values {
                    t.tag_block(f)?;
                }
            }
            let n = grid.vertex_count();
            let lt: Vec<_> = tr.laplacian.iter().map(|&(i, j, s)| (i, j, s.expr())).collect();
            let mt: Vec<_> = tr.mass.iter().map(|&(i, j, s)| (i, j, s.expr())).collect();
            let mut ar = t.arena_mut();
            let l = from_triplets(&mut ar, n, n, &lt)?;
            let m = from_triplets(&mut ar, n, n, &mt)?;
            push_matrix(&mut outputs, &mut matrices, "laplacian", &l);
            push_matrix(&mut outputs, &mut matrices, "mass", &m);
        }
        ProgramKind::EnergyHessian => {
            let grid = grid_of(spec)?;
            let (pos, r) = vertex_inputs(&t, &grid);
            rest = Some(r);
            let nv = 2 * grid.vertex_count();
            let mut grad_triplets = Vec::new();
            let mut hess_triplets = Vec::new();
            for el in energy_elements(&grid) {
                let e = el.energy(&grid, &pos).expr();
                let vars = el.vars();
                let (g, h) = {
                    let mut ar = t.arena_mut();
                    (gradient(&mut ar, e, &vars)?, hessian(&mut ar, e, &vars)?)
                };
                for (&v, &ge) in &g.entries {
                    grad_triplets.push((v as usize, 0, ge));
                }
                for (&(i, j), &he) in &h.entries {
                    hess_triplets.push((i as usize, j as usize, he));
                    if i != j {
                        hess_triplets.push((j as usize, i as usize, he));
                    }
                }
                if spec.tag {
                    let block: Vec<Sym<'_>> = h.entries.values().map(|&he| t.wrap(he)).collect();
                    t.tag_block(&block)?;
                }
            }
            let mut ar = t.arena_mut();
            let g = from_triplets(&mut ar, nv, 1, &grad_triplets)?;
            let h = from_triplets(&mut ar, nv, nv, &hess_triplets)?;
            push_matrix(&mut outputs, &mut matrices, "gradient", &g);
            push_matrix(&mut outputs, &mut matrices, "hessian", &h);
        }
    }
    let (arena, blocks) = t.finish();
    Ok(TracedProgram {
        arena,
        outputs,
        blocks,
        matrices,
        rest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::eval_numeric;

    fn spec(program: &str, pattern: &str) -> ProgramSpec {
        ProgramSpec {
            program: program.parse().unwrap(),
            pattern: pattern.parse().unwrap(),
            tag: false,
        }
    }

    #[test]
    fn pattern_strings_round_trip() {
        for s in ["random:100,6,42", "grid:20x30", "mtx:data/a.mtx"] {
            let p: PatternSource = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        for s in [
            "random:0,1,1",
            "random:5,6,1",
            "grid:1x4",
            "grid:3",
            "grid:+3x3",
            "foo:1",
            "",
            "mtx:",
        ] {
            assert!(s.parse::<PatternSource>().is_err(), "{s}");
        }
    }

    #[test]
    fn program_names_round_trip() {
        for s in [
            "expr1",
            "expr2",
            "expr3",
            "lpow2",
            "lpow3",
            "lpow4",
            "cotan",
            "energy-hessian",
        ] {
            assert_eq!(s.parse::<ProgramKind>().unwrap().to_string(), s);
        }
        assert!("lpow9".parse::<ProgramKind>().is_err());
    }

    #[test]
    fn spec_serializes_as_strings() {
        let s = spec("lpow3", "grid:4x4");
        let j = serde_json::to_value(&s).unwrap();
        assert_eq!(j["program"], "lpow3");
        assert_eq!(j["pattern"], "grid:4x4");
        assert_eq!(serde_json::from_value::<ProgramSpec>(j).unwrap(), s);
    }

    #[test]
    fn expr1_matches_dense_reference() {
        let p = trace_program(&spec("expr1", "random:6,2,3")).unwrap();
        let x = p.inputs(9);
        let n = 6;
        let pats = [
            random_pattern(n, 2, 3).unwrap(),
            random_pattern(n, 2, 4).unwrap(),
            random_pattern(n, 2, 5).unwrap(),
        ];
        let mut dense = vec![vec![vec![0.0; n]; n]; 3];
        let mut next = 2;
        for (m, pat) in pats.iter().enumerate() {
            for (i, j) in pat.coords() {
                dense[m][i][j] = x[next];
                next += 1;
            }
        }
        let (alpha, beta) = (x[0], x[1]);
        let (a, b, c) = (&dense[0], &dense[1], &dense[2]);
        let got = eval_numeric(&p.arena, &p.outputs, &x).unwrap();
        assert_eq!(p.matrices[0].nnz, got.len());
        let mut k = 0;
        let mut stored = vec![vec![None; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut v = 0.0;
                let mut touched = false;
                for q in 0..n {
                    let l = alpha * a[q][i] + b[q][i];
                    let r = beta * b[j][q] + c[q][j];
                    let lt = pats[0].find(q, i).is_some() || pats[1].find(q, i).is_some();
                    let rt = pats[1].find(j, q).is_some() || pats[2].find(q, j).is_some();
                    if lt && rt {
                        v += l * r;
                        touched = true;
                    }
                }
                if touched {
                    stored[i][j] = Some(v);
                }
            }
        }
        for row in &stored {
            for v in row.iter().flatten() {
                let rel = (got[k] - v).abs() / v.abs().max(1e-300);
                assert!(rel < 1e-12, "entry {k}: {} vs {v}", got[k]);
                k += 1;
            }
        }
        assert_eq!(k, got.len());
    }

    #[test]
    fn lpow_entries_are_sums_over_paths() {
        let p = trace_program(&spec("lpow2", "grid:3x3")).unwrap();
        let g = TriGrid::new(3, 3).unwrap();
        let pat = g.pattern();
        assert_eq!(p.n_inputs() as usize, pat.nnz());
        let x = p.inputs(1);
        let got = eval_numeric(&p.arena, &p.outputs, &x).unwrap();
        let lv = |i: usize, j: usize| pat.find(i, j).map(|k| x[k]).unwrap_or(0.0);
        let mut k = 0;
        for i in 0..9 {
            for j in 0..9 {
                let s: f64 = (0..9).map(|q| lv(i, q) * lv(q, j)).sum();
                let reach = (0..9).any(|q| pat.find(i, q).is_some() && pat.find(q, j).is_some());
                if reach {
                    assert!((got[k] - s).abs() <= 1e-12 * s.abs(), "({i},{j})");
                    k += 1;
                }
            }
        }
        assert_eq!(k, got.len());
    }

    #[test]
    fn cotan_matches_numeric_assembly() {
        let mut s = spec("cotan", "grid:4x3");
        s.tag = true;
        let p = trace_program(&s).unwrap();
        assert_eq!(p.blocks.len(), 2 * 3 * 2);
        let x = p.inputs(5);
        let got = eval_numeric(&p.arena, &p.outputs, &x).unwrap();
        let l = &p.matrices[0];
        let lap = &got[..l.nnz];
        let grid = TriGrid::new(4, 3).unwrap();
        let pos: Vec<[f64; 2]> = x.chunks(2).map(|c| [c[0], c[1]]).collect();
        let tr = cotan_triplets(&grid, &pos);
        let reference = from_triplets_numeric(12, &tr.laplacian);
        assert_eq!(lap.len(), reference.len());
        for (a, b) in lap.iter().zip(&reference) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let mass: f64 = got[l.nnz..].iter().sum();
        let area: f64 = grid
            .faces
            .iter()
            .map(|f| {
                let (a, b, c) = (pos[f[0]], pos[f[1]], pos[f[2]]);
                ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])).abs() / 2.0
            })
            .sum();
        assert!((mass - area).abs() < 1e-12 * area);
    }

    /// Numeric CSR assembly summing duplicates in input order.
    fn from_triplets_numeric(n: usize, t: &[(usize, usize, f64)]) -> Vec<f64> {
        let mut m = std::collections::BTreeMap::new();
        for &(i, j, v) in t {
            *m.entry((i, j)).or_insert(0.0) += v;
        }
        assert!(m.keys().all(|&(i, j)| i < n && j < n));
        m.into_values().collect()
    }

    #[test]
    fn energy_hessian_is_symmetric_and_tagged() {
        let mut s = spec("energy-hessian", "grid:3x3");
        s.tag = true;
        let p = trace_program(&s).unwrap();
        let grid = TriGrid::new(3, 3).unwrap();
        assert_eq!(p.blocks.len(), energy_elements(&grid).len());
        let (g, h) = (&p.matrices[0], &p.matrices[1]);
        assert_eq!((g.nrows, g.ncols), (18, 1));
        assert_eq!((h.nrows, h.ncols), (18, 18));
        let x = p.inputs(2);
        let v = eval_numeric(&p.arena, &p.outputs, &x).unwrap();
        assert!(v.iter().all(|f| f.is_finite()));
    }

    #[test]
    fn rest_configuration_is_an_energy_minimum() {
        let grid = TriGrid::new(3, 3).unwrap();
        let rest: Vec<[f64; 2]> = (0..9).map(|v| grid.rest_position(v)).collect();
        // Springs vanish; each triangle contributes A (2 + 2) with A = 1/2.
        let e = mesh_energy(&grid, &rest);
        assert!((e - 2.0 * grid.faces.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn mesh_programs_need_grids() {
        assert!(matches!(
            trace_program(&spec("cotan", "random:10,2,1")),
            Err(ProgramError::Incompatible { .. })
        ));
    }
}
