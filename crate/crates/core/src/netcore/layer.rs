use super::NetError;

/// One affine map `x -> A x + b`, stored row-compressed.
///
/// Evaluation of a row starts from the bias and adds `a_rc * x_c` in
/// increasing column order. Exact zeros are never stored, so a dense matrix
/// and its compressed form evaluate to the same bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
    bias: Vec<f64>,
}

/// Sparse description of a single output row: `(column, weight)` pairs and a bias.
#[derive(Debug, Clone, Default)]
pub struct Row {
    pub terms: Vec<(usize, f64)>,
    pub bias: f64,
}

impl Row {
    pub fn new(terms: Vec<(usize, f64)>, bias: f64) -> Self {
        Self { terms, bias }
    }

    pub fn constant(bias: f64) -> Self {
        Self { terms: Vec::new(), bias }
    }

    /// `weight * x_col + bias`.
    pub fn single(col: usize, weight: f64, bias: f64) -> Self {
        Self { terms: vec![(col, weight)], bias }
    }
}

impl Layer {
    pub fn from_dense(rows: usize, cols: usize, weights: &[f64], bias: Vec<f64>) -> Result<Self, NetError> {
        if weights.len() != rows * cols {
            return Err(NetError::Shape {
                context: "weight array length".into(),
                expected: rows * cols,
                found: weights.len(),
            });
        }
        if bias.len() != rows {
            return Err(NetError::Shape { context: "bias length".into(), expected: rows, found: bias.len() });
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..rows {
            for c in 0..cols {
                let w = weights[r * cols + c];
                if w != 0.0 {
                    col_idx.push(c);
                    vals.push(w);
                }
            }
            row_ptr.push(vals.len());
        }
        Ok(Self { rows, cols, row_ptr, col_idx, vals, bias })
    }

    /// Builds a layer from sparse rows. Repeated columns within a row are summed.
    pub fn from_rows(cols: usize, rows: Vec<Row>) -> Result<Self, NetError> {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut bias = Vec::with_capacity(rows.len());
        row_ptr.push(0);
        for mut row in rows.into_iter() {
            row.terms.sort_by_key(|t| t.0);
            let start = vals.len();
            for (c, w) in row.terms {
                if c >= cols {
                    return Err(NetError::Shape { context: "row column index".into(), expected: cols, found: c });
                }
                if vals.len() > start && *col_idx.last().unwrap() == c {
                    *vals.last_mut().unwrap() += w;
                } else {
                    col_idx.push(c);
                    vals.push(w);
                }
            }
            // drop entries that cancelled to zero
            let mut keep = start;
            for k in start..vals.len() {
                if vals[k] != 0.0 {
                    col_idx[keep] = col_idx[k];
                    vals[keep] = vals[k];
                    keep += 1;
                }
            }
            col_idx.truncate(keep);
            vals.truncate(keep);
            row_ptr.push(vals.len());
            bias.push(row.bias);
        }
        Ok(Self { rows: bias.len(), cols, row_ptr, col_idx, vals, bias })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            vals: vec![1.0; n],
            bias: vec![0.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Stored `(columns, weights)` of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[a..b], &self.vals[a..b])
    }

    pub fn to_row(&self, r: usize) -> Row {
        let (c, v) = self.row(r);
        Row::new(c.iter().copied().zip(v.iter().copied()).collect(), self.bias[r])
    }

    pub fn to_rows(&self) -> Vec<Row> {
        (0..self.rows).map(|r| self.to_row(r)).collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            let (c, v) = self.row(r);
            for (cc, vv) in c.iter().zip(v) {
                out[r * self.cols + cc] = *vv;
            }
        }
        out
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        out.reserve(self.rows);
        for r in 0..self.rows {
            let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
            let mut acc = self.bias[r];
            for k in a..b {
                acc += self.vals[k] * x[self.col_idx[k]];
            }
            out.push(acc);
        }
    }

    /// Applies the layer to a block of `N` points stored neuron-major
    /// (`x[c][j]` is neuron `c` of point `j`). Per point, the summation order
    /// matches [`Layer::apply`], so results agree bitwise.
    pub fn apply_block<const N: usize>(&self, x: &[[f64; N]], out: &mut Vec<[f64; N]>) {
        debug_assert_eq!(x.len(), self.cols);
        out.clear();
        out.reserve(self.rows);
        for r in 0..self.rows {
            let mut acc = [self.bias[r]; N];
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let w = self.vals[k];
                let src = &x[self.col_idx[k]];
                for j in 0..N {
                    acc[j] += w * src[j];
                }
            }
            out.push(acc);
        }
    }

    /// Affine composition `self ∘ inner`.
    pub fn after(&self, inner: &Layer) -> Result<Layer, NetError> {
        if self.cols != inner.rows {
            return Err(NetError::Shape {
                context: "affine composition".into(),
                expected: self.cols,
                found: inner.rows,
            });
        }
        let mut acc = vec![0.0; inner.cols];
        let mut touched = vec![false; inner.cols];
        let mut list = Vec::new();
        let mut rows = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let (cs, vs) = self.row(r);
            let mut b = self.bias[r];
            for (&k, &w) in cs.iter().zip(vs) {
                b += w * inner.bias[k];
                let (ic, iv) = inner.row(k);
                for (&c, &v) in ic.iter().zip(iv) {
                    if !touched[c] {
                        touched[c] = true;
                        list.push(c);
                    }
                    acc[c] += w * v;
                }
            }
            list.sort_unstable();
            let terms = list.iter().map(|&c| (c, acc[c])).collect();
            for &c in &list {
                acc[c] = 0.0;
                touched[c] = false;
            }
            list.clear();
            rows.push(Row::new(terms, b));
        }
        Layer::from_rows(inner.cols, rows)
    }

    /// Vertical concatenation of layers sharing one input.
    pub fn stack(parts: &[&Layer]) -> Result<Layer, NetError> {
        let cols = parts.first().map(|l| l.cols).unwrap_or(0);
        let mut rows = Vec::new();
        for p in parts {
            if p.cols != cols {
                return Err(NetError::Shape { context: "stacked layer inputs".into(), expected: cols, found: p.cols });
            }
            rows.extend(p.to_rows());
        }
        Layer::from_rows(cols, rows)
    }

    /// Block-diagonal combination: part `k` reads its own slice of the input.
    pub fn block_diag(parts: &[&Layer]) -> Layer {
        let cols: usize = parts.iter().map(|l| l.cols).sum();
        let mut rows = Vec::new();
        let mut off = 0;
        for p in parts {
            for mut row in p.to_rows() {
                for t in row.terms.iter_mut() {
                    t.0 += off;
                }
                rows.push(row);
            }
            off += p.cols;
        }
        Layer::from_rows(cols, rows).expect("block-diagonal columns are in range")
    }

    /// Largest singular value of the weight matrix by power iteration on `AᵀA`.
    pub fn spectral_norm(&self, rel_tol: f64) -> f64 {
        if self.vals.is_empty() {
            return 0.0;
        }
        let n = self.cols;
        let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i as f64) * 0.7548776662).fract()).collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        let mut av = vec![0.0; self.rows];
        for _ in 0..20_000 {
            for r in 0..self.rows {
                let (c, w) = self.row(r);
                av[r] = c.iter().zip(w).map(|(&cc, &ww)| ww * v[cc]).sum();
            }
            let mut atav = vec![0.0; n];
            for r in 0..self.rows {
                let (c, w) = self.row(r);
                for (&cc, &ww) in c.iter().zip(w) {
                    atav[cc] += ww * av[r];
                }
            }
            let norm = normalize(&mut atav);
            if norm == 0.0 {
                return 0.0;
            }
            let done = (norm - lambda).abs() <= rel_tol * norm;
            lambda = norm;
            v = atav;
            if done {
                break;
            }
        }
        lambda.sqrt()
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_round_trip_keeps_bits() {
        let w = [1.5, 0.0, -2.0, 0.0, 0.0, 3.25];
        let l = Layer::from_dense(2, 3, &w, vec![0.5, -1.0]).unwrap();
        assert_eq!(l.nnz(), 3);
        assert_eq!(l.to_dense(), w.to_vec());
        let mut out = Vec::new();
        l.apply(&[1.0, 2.0, 3.0], &mut out);
        assert_eq!(out, vec![0.5 + 1.5 - 6.0, -1.0 + 9.75]);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let a = Layer::from_dense(2, 2, &[1.0, 2.0, -1.0, 0.5], vec![0.1, 0.2]).unwrap();
        let b = Layer::from_dense(1, 2, &[3.0, -4.0], vec![1.0]).unwrap();
        let ab = b.after(&a).unwrap();
        let x = [0.3, -0.7];
        let (mut t, mut u) = (Vec::new(), Vec::new());
        a.apply(&x, &mut t);
        b.apply(&t, &mut u);
        let mut v = Vec::new();
        ab.apply(&x, &mut v);
        assert!((u[0] - v[0]).abs() < 1e-14);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let l = Layer::from_dense(2, 2, &[3.0, 0.0, 0.0, -5.0], vec![0.0, 0.0]).unwrap();
        assert!((l.spectral_norm(1e-12) - 5.0).abs() < 1e-5);
    }

    #[test]
    fn duplicate_columns_are_summed() {
        let l = Layer::from_rows(2, vec![Row::new(vec![(1, 1.0), (0, 2.0), (1, -1.0)], 0.0)]).unwrap();
        assert_eq!(l.nnz(), 1);
        assert_eq!(l.to_dense(), vec![2.0, 0.0]);
    }
}
