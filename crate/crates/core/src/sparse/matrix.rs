use super::SparseError;
use crate::expr::{ExprArena, ExprRef};
use serde::{Deserialize, Serialize};

/// CSR sparsity pattern with strictly increasing column indices per row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl Pattern {
    pub fn empty(nrows: usize, ncols: usize) -> Self {
        Pattern {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
        }
    }

    /// Build from (row, col) pairs; duplicates collapse.
    pub fn from_coords(
        nrows: usize,
        ncols: usize,
        coords: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, SparseError> {
        let mut coords: Vec<(usize, usize)> = coords.into_iter().collect();
        for &(r, c) in &coords {
            check_index(r, c, nrows, ncols)?;
        }
        coords.sort_unstable();
        coords.dedup();
        let mut row_ptr = vec![0usize; nrows + 1];
        for &(r, _) in &coords {
            row_ptr[r + 1] += 1;
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Pattern {
            nrows,
            ncols,
            row_ptr,
            col_idx: coords.into_iter().map(|(_, c)| c).collect(),
        })
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Position of `(i, j)` in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let row = self.row(i);
        row.binary_search(&j).ok().map(|k| self.row_ptr[i] + k)
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).iter().map(move |&j| (i, j)))
    }

    /// Check the CSR invariants.
    pub fn validate(&self) -> Result<(), SparseError> {
        let bad = |msg: &str| Err(SparseError::InvalidPattern(msg.to_string()));
        if self.row_ptr.len() != self.nrows + 1 || self.row_ptr[0] != 0 {
            return bad("row_ptr length or start");
        }
        if self.row_ptr.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_ptr not monotone");
        }
        if self.row_ptr[self.nrows] != self.col_idx.len() {
            return bad("row_ptr end does not match nnz");
        }
        for i in 0..self.nrows {
            let row = self.row(i);
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= self.ncols) {
                return bad("column indices not strictly increasing or out of range");
            }
        }
        Ok(())
    }

    /// Boolean product pattern.
    pub fn product(&self, other: &Pattern) -> Result<Pattern, SparseError> {
        if self.ncols != other.nrows {
            return Err(SparseError::DimensionMismatch {
                op: "mul",
                left: (self.nrows, self.ncols),
                right: (other.nrows, other.ncols),
            });
        }
        let mut coords = Vec::new();
        for i in 0..self.nrows {
            for &k in self.row(i) {
                coords.extend(other.row(k).iter().map(|&j| (i, j)));
            }
        }
        Pattern::from_coords(self.nrows, other.ncols, coords)
    }
}

fn check_index(r: usize, c: usize, nrows: usize, ncols: usize) -> Result<(), SparseError> {
    if r >= nrows || c >= ncols {
        Err(SparseError::IndexOutOfRange {
            row: r,
            col: c,
            nrows,
            ncols,
        })
    } else {
        Ok(())
    }
}

/// CSR matrix whose stored values are expression references.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolicSparseMatrix {
    pub pattern: Pattern,
    pub values: Vec<ExprRef>,
}

impl SymbolicSparseMatrix {
    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> Option<ExprRef> {
        self.pattern.find(i, j).map(|k| self.values[k])
    }

    /// Stored entries of row `i` as (column, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, ExprRef)> + '_ {
        let (s, e) = (self.pattern.row_ptr[i], self.pattern.row_ptr[i + 1]);
        self.pattern.col_idx[s..e]
            .iter()
            .copied()
            .zip(self.values[s..e].iter().copied())
    }

    /// One fresh variable per stored entry, in CSR order.
    pub fn from_pattern_vars(arena: &mut ExprArena, pattern: Pattern, first_var: u32) -> Self {
        let values = (0..pattern.nnz()).map(|k| arena.var(first_var + k as u32)).collect();
        SymbolicSparseMatrix { pattern, values }
    }
}

/// Assemble from (row, col, value) triplets. Entries sharing a position are
/// combined into one n-ary sum.
pub fn from_triplets(
    arena: &mut ExprArena,
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, ExprRef)],
) -> Result<SymbolicSparseMatrix, SparseError> {
    for &(r, c, _) in triplets {
        check_index(r, c, nrows, ncols)?;
    }
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));
    let mut row_ptr = vec![0usize; nrows + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut k = 0;
    let mut terms = Vec::new();
    while k < order.len() {
        let (r, c, _) = triplets[order[k]];
        terms.clear();
        while k < order.len() && (triplets[order[k]].0, triplets[order[k]].1) == (r, c) {
            terms.push(triplets[order[k]].2);
            k += 1;
        }
        row_ptr[r + 1] += 1;
        col_idx.push(c);
        values.push(arena.sum(&terms));
    }
    for i in 0..nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    Ok(SymbolicSparseMatrix {
        pattern: Pattern {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        },
        values,
    })
}

/// Symbolic product. Each stored entry is the n-ary sum of its products
/// (a single product when only one term contributes); terms are gathered in
/// ascending order of the left factor's column.
pub fn sp_mul(
    arena: &mut ExprArena,
    a: &SymbolicSparseMatrix,
    b: &SymbolicSparseMatrix,
) -> Result<SymbolicSparseMatrix, SparseError> {
    if a.ncols() != b.nrows() {
        return Err(SparseError::DimensionMismatch {
            op: "mul",
            left: (a.nrows(), a.ncols()),
            right: (b.nrows(), b.ncols()),
        });
    }
    let ncols = b.ncols();
    let mut slot = vec![usize::MAX; ncols];
    let mut row_ptr = vec![0usize; a.nrows() + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut cols: Vec<usize> = Vec::new();
    let mut terms: Vec<Vec<ExprRef>> = Vec::new();
    for i in 0..a.nrows() {
        cols.clear();
        for (k, aik) in a.row(i) {
            for (j, bkj) in b.row(k) {
                let p = arena.mul(aik, bkj);
                if slot[j] == usize::MAX {
                    slot[j] = cols.len();
                    cols.push(j);
                    if terms.len() < cols.len() {
                        terms.push(Vec::new());
                    }
                    terms[cols.len() - 1].clear();
                }
                terms[slot[j]].push(p);
            }
        }
        let mut sorted: Vec<(usize, usize)> = cols.iter().map(|&j| (j, slot[j])).collect();
        sorted.sort_unstable();
        for (j, s) in sorted {
            col_idx.push(j);
            values.push(arena.sum(&terms[s]));
            slot[j] = usize::MAX;
        }
        row_ptr[i + 1] = col_idx.len();
    }
    Ok(SymbolicSparseMatrix {
        pattern: Pattern {
            nrows: a.nrows(),
            ncols,
            row_ptr,
            col_idx,
        },
        values,
    })
}

/// Entrywise sum over the union pattern.
pub fn sp_add(
    arena: &mut ExprArena,
    a: &SymbolicSparseMatrix,
    b: &SymbolicSparseMatrix,
) -> Result<SymbolicSparseMatrix, SparseError> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(SparseError::DimensionMismatch {
            op: "add",
            left: (a.nrows(), a.ncols()),
            right: (b.nrows(), b.ncols()),
        });
    }
    let mut row_ptr = vec![0usize; a.nrows() + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    for i in 0..a.nrows() {
        let mut ra = a.row(i).peekable();
        let mut rb = b.row(i).peekable();
        loop {
            let next = match (ra.peek(), rb.peek()) {
                (None, None) => break,
                (Some(&(ja, va)), Some(&(jb, vb))) if ja == jb => {
                    ra.next();
                    rb.next();
                    (ja, arena.add(va, vb))
                }
                (Some(&(ja, va)), Some(&(jb, _))) if ja < jb => {
                    ra.next();
                    (ja, va)
                }
                (Some(&(ja, va)), None) => {
                    ra.next();
                    (ja, va)
                }
                (_, Some(&(jb, vb))) => {
                    rb.next();
                    (jb, vb)
                }
            };
            col_idx.push(next.0);
            values.push(next.1);
        }
        row_ptr[i + 1] = col_idx.len();
    }
    Ok(SymbolicSparseMatrix {
        pattern: Pattern {
            nrows: a.nrows(),
            ncols: a.ncols(),
            row_ptr,
            col_idx,
        },
        values,
    })
}

/// Multiply every stored value by `s`.
pub fn sp_scale(arena: &mut ExprArena, a: &SymbolicSparseMatrix, s: ExprRef) -> SymbolicSparseMatrix {
    SymbolicSparseMatrix {
        pattern: a.pattern.clone(),
        values: a.values.iter().map(|&v| arena.mul(s, v)).collect(),
    }
}

/// Transpose; values are carried over by reference.
pub fn sp_transpose(a: &SymbolicSparseMatrix) -> SymbolicSparseMatrix {
    let (nrows, ncols) = (a.ncols(), a.nrows());
    let mut row_ptr = vec![0usize; nrows + 1];
    for &c in &a.pattern.col_idx {
        row_ptr[c + 1] += 1;
    }
    for i in 0..nrows {
        row_ptr[i + 1] += row_ptr[i];
    }
    let mut next = row_ptr.clone();
    let mut col_idx = vec![0usize; a.nnz()];
    let mut values = vec![ExprRef::from_index(0); a.nnz()];
    for i in 0..a.nrows() {
        for (j, v) in a.row(i) {
            col_idx[next[j]] = i;
            values[next[j]] = v;
            next[j] += 1;
        }
    }
    SymbolicSparseMatrix {
        pattern: Pattern {
            nrows,
            ncols,
            row_ptr,
            col_idx,
        },
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::OpKind;

    #[test]
    fn duplicate_triplets_sum() {
        let mut ar = ExprArena::new();
        let (a, b) = (ar.var(0), ar.var(1));
        let m = from_triplets(&mut ar, 2, 2, &[(0, 0, a), (0, 0, b)]).unwrap();
        assert_eq!(m.nnz(), 1);
        let s = ar.add(a, b);
        assert_eq!(m.get(0, 0), Some(s));
        m.pattern.validate().unwrap();
    }

    #[test]
    fn empty_triplets() {
        let mut ar = ExprArena::new();
        let m = from_triplets(&mut ar, 3, 4, &[]).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.pattern, Pattern::empty(3, 4));
    }

    #[test]
    fn out_of_range_triplet() {
        let mut ar = ExprArena::new();
        let a = ar.var(0);
        assert!(matches!(
            from_triplets(&mut ar, 2, 2, &[(2, 0, a)]),
            Err(SparseError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn dense_two_by_two_product() {
        let mut ar = ExprArena::new();
        let full = Pattern::from_coords(2, 2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let a = SymbolicSparseMatrix::from_pattern_vars(&mut ar, full.clone(), 0);
        let b = SymbolicSparseMatrix::from_pattern_vars(&mut ar, full, 4);
        let c = sp_mul(&mut ar, &a, &b).unwrap();
        let (a00, a01) = (a.get(0, 0).unwrap(), a.get(0, 1).unwrap());
        let (b00, b10) = (b.get(0, 0).unwrap(), b.get(1, 0).unwrap());
        let t1 = ar.mul(a00, b00);
        let t2 = ar.mul(a01, b10);
        let expect = ar.add(t1, t2);
        assert_eq!(c.get(0, 0), Some(expect));
        assert_eq!(ar.op(expect), OpKind::Add);
    }

    #[test]
    fn mismatch_rejected() {
        let mut ar = ExprArena::new();
        let a = SymbolicSparseMatrix::from_pattern_vars(&mut ar, Pattern::empty(2, 3), 0);
        assert!(sp_mul(&mut ar, &a, &a).is_err());
        let b = SymbolicSparseMatrix::from_pattern_vars(&mut ar, Pattern::empty(3, 2), 0);
        assert!(sp_add(&mut ar, &a, &b).is_err());
    }

    #[test]
    fn transpose_involution() {
        let mut ar = ExprArena::new();
        let p = Pattern::from_coords(3, 4, [(0, 1), (0, 3), (2, 0), (1, 1)]).unwrap();
        let a = SymbolicSparseMatrix::from_pattern_vars(&mut ar, p, 0);
        let t = sp_transpose(&a);
        t.pattern.validate().unwrap();
        assert_eq!(t.get(3, 0), a.get(0, 3));
        assert_eq!(sp_transpose(&t), a);
    }

    #[test]
    fn add_self_doubles() {
        let mut ar = ExprArena::new();
        let p = Pattern::from_coords(2, 2, [(0, 0), (1, 1)]).unwrap();
        let a = SymbolicSparseMatrix::from_pattern_vars(&mut ar, p, 0);
        let s = sp_add(&mut ar, &a, &a).unwrap();
        let v = a.values[0];
        let vv = ar.add(v, v);
        assert_eq!(s.values[0], vv);
    }
}
