//! Matrix Market (coordinate format) reader and pattern writer.

use super::{Pattern, SparseError};
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtxField {
    Real,
    Integer,
    Pattern,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MtxSymmetry {
    General,
    Symmetric,
}

/// Guards against absurd headers (e.g. from fuzzed input).
#[derive(Clone, Copy, Debug)]
pub struct MtxLimits {
    pub max_dim: usize,
    pub max_entries: usize,
}

impl Default for MtxLimits {
    fn default() -> Self {
        MtxLimits {
            max_dim: 1 << 24,
            max_entries: 1 << 26,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MtxMatrix {
    pub field: MtxField,
    pub symmetry: MtxSymmetry,
    pub pattern: Pattern,
    /// Values aligned with the pattern (duplicates summed); `None` for
    /// pattern-only files.
    pub values: Option<Vec<f64>>,
}

fn err(line: usize, msg: impl Into<String>) -> SparseError {
    SparseError::Mtx { line, msg: msg.into() }
}

pub fn parse_mtx(text: &str) -> Result<MtxMatrix, SparseError> {
    parse_mtx_with_limits(text, MtxLimits::default())
}

pub fn parse_mtx_with_limits(text: &str, limits: MtxLimits) -> Result<MtxMatrix, SparseError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty input"))?;
    let words: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if words.len() != 5 || words[0] != "%%matrixmarket" || words[1] != "matrix" {
        return Err(err(1, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    if words[2] != "coordinate" {
        return Err(err(1, format!("unsupported format `{}`", words[2])));
    }
    let field = match words[3].as_str() {
        "real" | "double" => MtxField::Real,
        "integer" => MtxField::Integer,
        "pattern" => MtxField::Pattern,
        other => return Err(err(1, format!("unsupported field `{other}`"))),
    };
    let symmetry = match words[4].as_str() {
        "general" => MtxSymmetry::General,
        "symmetric" => MtxSymmetry::Symmetric,
        other => return Err(err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| err(size_line, format!("bad size line: {e}")))?;
    let [nrows, ncols, nnz] = dims[..] else {
        return Err(err(size_line, "size line needs rows, columns, entries"));
    };
    if nrows > limits.max_dim || ncols > limits.max_dim || nnz > limits.max_entries {
        return Err(err(size_line, "dimensions exceed limits"));
    }
    if symmetry == MtxSymmetry::Symmetric && nrows != ncols {
        return Err(err(size_line, "symmetric matrix must be square"));
    }

    let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(nnz.min(1 << 20));
    let mut count = 0usize;
    for (ln, line) in data {
        count += 1;
        if count > nnz {
            return Err(err(ln, "more entries than declared"));
        }
        let mut it = line.split_whitespace();
        let mut index = |what: &str, bound: usize| -> Result<usize, SparseError> {
            let w = it.next().ok_or_else(|| err(ln, format!("missing {what}")))?;
            let v: usize = w.parse().map_err(|_| err(ln, format!("bad {what} `{w}`")))?;
            if v == 0 || v > bound {
                return Err(err(ln, format!("{what} {v} out of range 1..={bound}")));
            }
            Ok(v - 1)
        };
        let r = index("row", nrows)?;
        let c = index("column", ncols)?;
        let v = match field {
            MtxField::Pattern => 1.0,
            MtxField::Real | MtxField::Integer => {
                let w = it.next().ok_or_else(|| err(ln, "missing value"))?;
                let v: f64 = w.parse().map_err(|_| err(ln, format!("bad value `{w}`")))?;
                if field == MtxField::Integer && v.fract() != 0.0 {
                    return Err(err(ln, "non-integer value in integer matrix"));
                }
                v
            }
        };
        if it.next().is_some() {
            return Err(err(ln, "trailing tokens"));
        }
        entries.push((r, c, v));
        if symmetry == MtxSymmetry::Symmetric && r != c {
            entries.push((c, r, v));
        }
    }
    if count != nnz {
        return Err(err(0, format!("declared {nnz} entries, found {count}")));
    }

    entries.sort_by_key(|&(r, c, _)| (r, c));
    let pattern = Pattern::from_coords(nrows, ncols, entries.iter().map(|&(r, c, _)| (r, c)))?;
    let values = (field != MtxField::Pattern).then(|| {
        let mut vals = vec![0.0; pattern.nnz()];
        for &(r, c, v) in &entries {
            vals[pattern.find(r, c).expect("entry in pattern")] += v;
        }
        vals
    });
    Ok(MtxMatrix {
        field,
        symmetry,
        pattern,
        values,
    })
}

/// Pattern-only Matrix Market text (general symmetry, 1-based indices).
pub fn write_pattern_mtx(p: &Pattern) -> String {
    let mut out = String::new();
    out.push_str("%%MatrixMarket matrix coordinate pattern general\n");
    let _ = writeln!(out, "{} {} {}", p.nrows, p.ncols, p.nnz());
    for (i, j) in p.coords() {
        let _ = writeln!(out, "{} {}", i + 1, j + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_general_real() {
        let text = "%%MatrixMarket matrix coordinate real general\n% c\n3 3 4\n1 1 2.0\n2 3 -1\n3 1 0.5\n2 3 1.5\n";
        let m = parse_mtx(text).unwrap();
        assert_eq!(m.pattern.nnz(), 3);
        assert_eq!(m.values.as_ref().unwrap()[1], 0.5);
        m.pattern.validate().unwrap();
    }

    #[test]
    fn parse_symmetric_pattern() {
        let text = "%%MatrixMarket matrix coordinate pattern symmetric\n3 3 3\n1 1\n2 1\n3 2\n";
        let m = parse_mtx(text).unwrap();
        assert_eq!(m.pattern.nnz(), 5);
        assert!(m.values.is_none());
        assert!(m.pattern.find(0, 1).is_some());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "",
            "%%MatrixMarket matrix array real general\n1 1\n1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1.0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n",
            "%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 1 1.5\n",
            "%%MatrixMarket matrix coordinate real symmetric\n2 3 0\n",
            "%%MatrixMarket matrix coordinate real general\n99999999999 1 0\n",
        ] {
            assert!(parse_mtx(text).is_err(), "accepted: {text:?}");
        }
    }

    #[test]
    fn pattern_round_trip() {
        let p = Pattern::from_coords(3, 4, [(0, 1), (2, 3), (1, 0)]).unwrap();
        let m = parse_mtx(&write_pattern_mtx(&p)).unwrap();
        assert_eq!(m.pattern, p);
    }
}
