//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Relative cutoff below which singular values are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Singular triplets `A = U diag(s) Vᵀ`, sorted by decreasing singular value.
///
/// Each right singular vector is sign-normalized so that its largest-magnitude
/// entry is nonnegative (the matching left vector is flipped along with it).
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    /// Full thin SVD with `min(nrows, ncols)` triplets, zeros included.
    pub fn new(a: &DMatrix<f64>) -> Self {
        let (n, p) = a.shape();
        let r = n.min(p);
        if r == 0 {
            return ThinSvd {
                u: DMatrix::zeros(n, 0),
                s: DVector::zeros(0),
                v: DMatrix::zeros(p, 0),
            };
        }
        let fa = faer::Mat::<f64>::from_fn(n, p, |i, j| a[(i, j)]);
        let svd = fa.thin_svd().expect("thin SVD converges");
        let (fu, fs, fv) = (svd.U(), svd.S().column_vector(), svd.V());
        let u_raw = DMatrix::from_fn(n, r, |i, j| fu[(i, j)]);
        let v_raw = DMatrix::from_fn(p, r, |i, j| fv[(i, j)]);
        let s_raw = DVector::from_fn(r, |i, _| fs[i]);

        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&i, &j| s_raw[j].total_cmp(&s_raw[i]).then(i.cmp(&j)));

        let mut u = DMatrix::zeros(n, r);
        let mut v = DMatrix::zeros(p, r);
        let mut s = DVector::zeros(r);
        for (dst, &src) in order.iter().enumerate() {
            s[dst] = s_raw[src].max(0.0);
            let vcol = v_raw.column(src).into_owned();
            let sign = sign_of_largest(vcol.as_slice());
            v.set_column(dst, &(vcol * sign));
            u.set_column(dst, &(u_raw.column(src) * sign));
        }
        ThinSvd { u, s, v }
    }

    /// Number of singular values above `RANK_TOL * s_max`.
    pub fn numerical_rank(&self) -> usize {
        let smax = self.s.iter().copied().fold(0.0, f64::max);
        if smax <= 0.0 {
            return 0;
        }
        self.s.iter().filter(|&&x| x > RANK_TOL * smax).count()
    }

    /// Keep only the leading `rank` triplets.
    pub fn truncated(&self, rank: usize) -> ThinSvd {
        ThinSvd {
            u: self.u.columns(0, rank).into_owned(),
            s: self.s.rows(0, rank).into_owned(),
            v: self.v.columns(0, rank).into_owned(),
        }
    }

    /// Thin SVD truncated to numerical rank.
    pub fn reduced(a: &DMatrix<f64>) -> Self {
        let full = Self::new(a);
        let r = full.numerical_rank();
        full.truncated(r)
    }
}

fn sign_of_largest(v: &[f64]) -> f64 {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v {
        if x.abs() > best {
            best = x.abs();
            sign = if x < 0.0 { -1.0 } else { 1.0 };
        }
    }
    sign
}

/// `XᵀX / n`.
pub fn scaled_gram(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows() as f64;
    x.tr_mul(x) / n
}

/// Rows of `m` at `idx`, in order.
pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), m.ncols(), |r, c| m[(idx[r], c)])
}

pub fn select_entries(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_fn(idx.len(), |r, _| v[idx[r]])
}

pub fn all_finite(values: &[f64]) -> bool {
    values.iter().all(|x| x.is_finite())
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_and_sign_normalized() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, -4.0, 2.0, 0.5, -3.0, 1.0]);
        let svd = ThinSvd::new(&a);
        assert!(svd.s[0] >= svd.s[1]);
        for k in 0..2 {
            let col = svd.v.column(k);
            let idx = col.iamax();
            assert!(col[idx] >= 0.0);
        }
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((rebuilt - a).amax() < 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let v = DVector::from_vec(vec![1.0, -1.0, 0.5]);
        let a = &u * v.transpose();
        let svd = ThinSvd::new(&a);
        assert_eq!(svd.numerical_rank(), 1);
        assert_eq!(ThinSvd::reduced(&a).s.len(), 1);
    }

    #[test]
    fn wide_matrix() {
        let a = DMatrix::from_fn(3, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let svd = ThinSvd::new(&a);
        assert_eq!(svd.u.shape(), (3, 3));
        assert_eq!(svd.v.shape(), (5, 3));
        let rebuilt = &svd.u * DMatrix::from_diagonal(&svd.s) * svd.v.transpose();
        assert!((rebuilt - a).amax() < 1e-12);
    }
}
