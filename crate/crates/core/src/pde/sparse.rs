use crate::error::{Error, Result};

/// Compressed-sparse-row nonzero structure of a square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
}

impl Pattern {
    /// Builds from per-row column lists; columns are sorted and deduplicated.
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        Pattern { n, row_ptr, col_idx }
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    fn transpose_rows(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for &j in self.row(i) {
                cols[j].push(i);
            }
        }
        cols
    }

    /// Greedy column colouring: columns of one colour never share a row, so a
    /// single perturbed evaluation recovers all of them.
    pub fn color_columns(&self) -> Vec<usize> {
        let cols = self.transpose_rows();
        let mut color = vec![usize::MAX; self.n];
        let mut mark: Vec<usize> = Vec::new();
        for j in 0..self.n {
            for &i in &cols[j] {
                for &k in self.row(i) {
                    let c = color[k];
                    if c != usize::MAX {
                        if c >= mark.len() {
                            mark.resize(c + 1, usize::MAX);
                        }
                        mark[c] = j;
                    }
                }
            }
            color[j] = (0..).find(|&c| c >= mark.len() || mark[c] != j).expect("unbounded range");
        }
        color
    }
}

/// Sparse matrix on a [`Pattern`].
#[derive(Clone, Debug)]
pub struct Csr {
    pub pattern: Pattern,
    pub values: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let p = &self.pattern;
        for i in 0..p.n {
            let mut acc = 0.0;
            for k in p.row_ptr[i]..p.row_ptr[i + 1] {
                acc += self.values[k] * x[p.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|i| {
                (p.row_ptr[i]..p.row_ptr[i + 1])
                    .find(|&k| p.col_idx[k] == i)
                    .map_or(0.0, |k| self.values[k])
            })
            .collect()
    }

    /// `I − c·self`, assuming the diagonal is in the pattern.
    pub fn shifted_identity(&self, c: f64) -> Csr {
        let p = &self.pattern;
        let mut values: Vec<f64> = self.values.iter().map(|v| -c * v).collect();
        for i in 0..p.n {
            if let Some(k) = (p.row_ptr[i]..p.row_ptr[i + 1]).find(|&k| p.col_idx[k] == i) {
                values[k] += 1.0;
            }
        }
        Csr {
            pattern: p.clone(),
            values,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned BiCGSTAB. Stops when `‖b − Ax‖₂ ≤ tol·‖b‖₂`.
pub fn bicgstab(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let dinv: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        for i in 0..n {
            z[i] = dinv[i] * s[i];
        }
        a.matvec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        if !omega.is_finite() || omega == 0.0 {
            break;
        }
    }
    Err(Error::NonFinite("BiCGSTAB did not converge".into()))
}
