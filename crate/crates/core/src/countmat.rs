//! Sparse count matrices.
//!
//! A [`CountMatrix`] stores strictly positive integer counts in both
//! row-compressed and column-compressed form, so the alternating fitter can
//! take O(1) row slices (loadings update) and column slices (factors update).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Non-zero entries of one row or one column, in increasing index order.
#[derive(Debug, Clone, Copy)]
pub struct SparseSlice<'a> {
    pub indices: &'a [usize],
    pub counts: &'a [u64],
}

impl<'a> SparseSlice<'a> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + 'a {
        self.indices.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn sum(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Immutable sparse non-negative integer matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    row_cols: Vec<usize>,
    row_counts: Vec<u64>,
    col_ptr: Vec<usize>,
    col_rows: Vec<usize>,
    col_counts: Vec<u64>,
}

impl CountMatrix {
    /// Builds a matrix from `(row, col, count)` triplets.
    ///
    /// Zero counts are dropped and duplicate positions are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, i64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(triplets.len());
        for (index, &(row, col, count)) in triplets.iter().enumerate() {
            if row >= n_rows || col >= n_cols {
                return Err(Error::TripletOutOfRange { index, row, col, count, n_rows, n_cols });
            }
            if count < 0 {
                return Err(Error::NegativeCount { index, row, col, count });
            }
            if count > 0 {
                entries.push((row, col, count as u64));
            }
        }
        Ok(Self::from_entries(n_rows, n_cols, entries))
    }

    fn from_entries(n_rows: usize, n_cols: usize, mut entries: Vec<(usize, usize, u64)>) -> Self {
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, u64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let nnz = merged.len();
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_ptr = vec![0usize; n_cols + 1];
        for &(r, c, _) in &merged {
            row_ptr[r + 1] += 1;
            col_ptr[c + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }

        let row_cols = merged.iter().map(|e| e.1).collect();
        let row_counts = merged.iter().map(|e| e.2).collect();

        // Row-major order visits each column's rows in increasing order, so a
        // single scatter pass produces sorted column slices.
        let mut col_rows = vec![0usize; nnz];
        let mut col_counts = vec![0u64; nnz];
        let mut next = col_ptr.clone();
        for &(r, c, v) in &merged {
            col_rows[next[c]] = r;
            col_counts[next[c]] = v;
            next[c] += 1;
        }

        Self { n_rows, n_cols, row_ptr, row_cols, row_counts, col_ptr, col_rows, col_counts }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored (non-zero) entries, ω.
    pub fn nnz(&self) -> usize {
        self.row_counts.len()
    }

    /// Fraction of zero entries, `1 − ω / (n·m)`.
    pub fn sparsity(&self) -> f64 {
        let total = self.n_rows as f64 * self.n_cols as f64;
        if total == 0.0 {
            return 1.0;
        }
        1.0 - self.nnz() as f64 / total
    }

    pub fn row(&self, i: usize) -> SparseSlice<'_> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        SparseSlice { indices: &self.row_cols[a..b], counts: &self.row_counts[a..b] }
    }

    pub fn col(&self, j: usize) -> SparseSlice<'_> {
        let (a, b) = (self.col_ptr[j], self.col_ptr[j + 1]);
        SparseSlice { indices: &self.col_rows[a..b], counts: &self.col_counts[a..b] }
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        let row = self.row(i);
        match row.indices.binary_search(&j) {
            Ok(p) => row.counts[p],
            Err(_) => 0,
        }
    }

    /// Row-major iteration over `(row, col, count)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).iter().map(move |(j, v)| (i, j, v)))
    }

    /// Column-major iteration over `(row, col, count)`.
    pub fn iter_col_major(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        (0..self.n_cols).flat_map(move |j| self.col(j).iter().map(move |(i, v)| (i, j, v)))
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.n_rows).map(|i| self.row(i).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.n_cols).map(|j| self.col(j).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.row_counts.iter().sum()
    }

    /// Number of zero entries in each row.
    pub fn row_zero_counts(&self) -> Vec<usize> {
        (0..self.n_rows).map(|i| self.n_cols - self.row(i).len()).collect()
    }

    pub fn to_dense(&self) -> ndarray::Array2<f64> {
        let mut out = ndarray::Array2::zeros((self.n_rows, self.n_cols));
        for (i, j, v) in self.iter() {
            out[[i, j]] = v as f64;
        }
        out
    }

    pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        Self::read_matrix_market_from(BufReader::new(file), path)
    }

    /// Parses MatrixMarket coordinate data; `source` labels parse errors.
    pub fn read_matrix_market_from(reader: impl BufRead, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        let err = |line: usize, message: String| Error::Parse { path: source.clone(), line, message };

        let mut lines = reader.lines().enumerate().map(|(k, l)| (k + 1, l));

        let (lineno, header) = match lines.next() {
            Some((k, l)) => (k, l?),
            None => return Err(err(1, "empty file".into())),
        };
        let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
        if tokens.len() != 5 || tokens[0] != "%%matrixmarket" {
            return Err(err(lineno, format!("malformed header {header:?}")));
        }
        if tokens[1] != "matrix" || tokens[2] != "coordinate" {
            return Err(err(lineno, "only 'matrix coordinate' data is supported".into()));
        }
        let integer_field = match tokens[3].as_str() {
            "integer" => true,
            "real" => false,
            other => return Err(err(lineno, format!("unsupported field {other:?}"))),
        };
        if tokens[4] != "general" {
            return Err(err(lineno, format!("unsupported symmetry {:?}", tokens[4])));
        }

        let mut size: Option<(usize, usize, usize)> = None;
        let mut entries = Vec::new();
        for (lineno, line) in lines {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('%') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split_whitespace().collect();
            match size {
                None => {
                    if fields.len() != 3 {
                        return Err(err(lineno, format!("expected 'rows cols entries', got {trimmed:?}")));
                    }
                    let parse =
                        |s: &str| s.parse::<usize>().map_err(|_| err(lineno, format!("invalid size value {s:?}")));
                    size = Some((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
                    entries.reserve(size.unwrap().2);
                }
                Some((n, m, declared)) => {
                    if fields.len() != 3 {
                        return Err(err(lineno, format!("expected 'row col value', got {trimmed:?}")));
                    }
                    if entries.len() == declared {
                        return Err(err(lineno, format!("more entries than the declared {declared}")));
                    }
                    let index = |s: &str, bound: usize| -> Result<usize> {
                        let v = s.parse::<usize>().map_err(|_| err(lineno, format!("invalid index {s:?}")))?;
                        if v == 0 || v > bound {
                            return Err(err(lineno, format!("index {v} out of bounds 1..={bound}")));
                        }
                        Ok(v - 1)
                    };
                    let r = index(fields[0], n)?;
                    let c = index(fields[1], m)?;
                    let value = parse_count(fields[2], integer_field).map_err(|msg| err(lineno, msg))?;
                    if value > 0 {
                        entries.push((r, c, value));
                    }
                }
            }
        }
        let (n, m, _) = size.ok_or_else(|| err(lineno, "missing size line".into()))?;
        Ok(Self::from_entries(n, m, entries))
    }

    pub fn write_matrix_market(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        let mut w = BufWriter::new(file);
        self.write_matrix_market_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_matrix_market_to(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate integer general")?;
        writeln!(w, "{} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{} {} {}", i + 1, j + 1, v)?;
        }
        Ok(())
    }
}

fn parse_count(s: &str, integer_field: bool) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<i64>() {
        if v < 0 {
            return Err(format!("negative count {v}"));
        }
        return Ok(v as u64);
    }
    if integer_field {
        return Err(format!("value {s:?} is not an integer"));
    }
    let v: f64 = s.parse().map_err(|_| format!("invalid value {s:?}"))?;
    if !v.is_finite() || v.fract() != 0.0 {
        return Err(format!("value {s:?} is not integral"));
    }
    if v < 0.0 {
        return Err(format!("negative count {v}"));
    }
    Ok(v as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<CountMatrix> {
        CountMatrix::read_matrix_market_from(text.as_bytes(), "inline.mtx")
    }

    #[test]
    fn construction_basic() {
        let m = CountMatrix::from_triplets(2, 2, &[(0, 0, 3), (1, 1, 2)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.sparsity(), 0.5);
        assert_eq!(m.get(0, 0), 3);
        assert_eq!(m.get(0, 1), 0);
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CountMatrix::from_triplets(2, 2, &[(0, 0, 1), (0, 0, 2)]).unwrap();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![(0, 0, 3)]);
    }

    #[test]
    fn zeros_are_dropped() {
        let m = CountMatrix::from_triplets(2, 2, &[(0, 0, 0)]).unwrap();
        assert_eq!(m.nnz(), 0);
        assert_eq!(m.sparsity(), 1.0);
    }

    #[test]
    fn sparsity_values() {
        let m = CountMatrix::from_triplets(2, 2, &[(1, 0, 4)]).unwrap();
        assert_eq!(m.sparsity(), 0.75);
        let dense = CountMatrix::from_triplets(2, 2, &[(0, 0, 1), (0, 1, 1), (1, 0, 1), (1, 1, 1)]).unwrap();
        assert_eq!(dense.sparsity(), 0.0);
    }

    #[test]
    fn bad_triplets() {
        match CountMatrix::from_triplets(2, 2, &[(0, 0, 1), (2, 0, 1)]) {
            Err(Error::TripletOutOfRange { index: 1, row: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            CountMatrix::from_triplets(2, 2, &[(0, 1, -3)]),
            Err(Error::NegativeCount { index: 0, count: -3, .. })
        ));
    }

    #[test]
    fn reads_minimal_file() {
        let m = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 1 5\n").unwrap();
        assert_eq!((m.n_rows(), m.n_cols(), m.nnz()), (2, 2, 1));
        assert_eq!(m.get(0, 0), 5);
    }

    #[test]
    fn reads_comments_and_real_field() {
        let text = "%%MatrixMarket matrix coordinate real general\n% a comment\n3 2 2\n% another\n1 2 4.0\n3 1 7\n";
        let m = parse(text).unwrap();
        assert_eq!(m.get(0, 1), 4);
        assert_eq!(m.get(2, 0), 7);
    }

    #[test]
    fn rejects_fractional_values() {
        let e = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 1 2.5\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
        let e = parse("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 2.5\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e}");
    }

    #[test]
    fn rejects_bad_headers_and_indices() {
        assert!(matches!(parse("%%MatrixMarket matrix array integer general\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(
            parse("%%MatrixMarket matrix coordinate integer symmetric\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(parse("hello\n"), Err(Error::Parse { line: 1, .. })));
        let e = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n3 1 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let e = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n0 1 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }));
        let e = parse("%%MatrixMarket matrix coordinate integer general\n2 2 1\n1 1 1\n2 2 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 4, .. }));
    }

    fn arb_matrix() -> impl Strategy<Value = CountMatrix> {
        (1usize..12, 1usize..12).prop_flat_map(|(n, m)| {
            proptest::collection::vec((0..n, 0..m, 0i64..20), 0..40)
                .prop_map(move |t| CountMatrix::from_triplets(n, m, &t).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matrix_market_round_trip(m in arb_matrix()) {
            let mut buf = Vec::new();
            m.write_matrix_market_to(&mut buf).unwrap();
            let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn row_and_column_views_agree(m in arb_matrix()) {
            let mut by_row: Vec<_> = m.iter().collect();
            let mut by_col: Vec<_> = m.iter_col_major().collect();
            by_row.sort();
            by_col.sort();
            prop_assert_eq!(&by_row, &by_col);
            prop_assert_eq!(m.row_sums().iter().sum::<u64>(), m.col_sums().iter().sum::<u64>());
            let zeros: usize = m.row_zero_counts().iter().sum();
            prop_assert_eq!(m.nnz(), m.n_rows() * m.n_cols() - zeros);
            prop_assert!(by_row.iter().all(|e| e.2 > 0));
        }
    }
}
