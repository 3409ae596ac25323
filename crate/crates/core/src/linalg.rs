//! Rank-revealing helpers on top of the nalgebra SVD.

use nalgebra::{DMatrix, DVector};

/// Singular values of `m` together with the right singular vectors as rows.
fn svd_rows(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let ncols = m.ncols();
    // pad so the SVD returns a full set of right singular vectors
    let padded = if m.nrows() < ncols {
        let mut p = DMatrix::zeros(ncols, ncols);
        p.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    (svd.singular_values.iter().copied().collect(), v_t)
}

/// Orthonormal basis (as columns) of the kernel of `m`. Singular values
/// below `rel_tol · max(σ_max, floor)` count as zero.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64, floor: f64) -> DMatrix<f64> {
    let ncols = m.ncols();
    if ncols == 0 {
        return DMatrix::zeros(0, 0);
    }
    let (sv, v_t) = svd_rows(m);
    let smax = sv.iter().fold(0.0f64, |a, &b| a.max(b));
    let threshold = rel_tol * smax.max(floor);
    let cols: Vec<DVector<f64>> = sv
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= threshold)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    columns(ncols, &cols)
}

/// Numerical rank under the same threshold rule as [`null_space`].
pub fn rank(m: &DMatrix<f64>, rel_tol: f64, floor: f64) -> usize {
    if m.ncols() == 0 || m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.amax();
    let threshold = rel_tol * smax.max(floor);
    sv.iter().filter(|&&s| s > threshold).count()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>, rel_tol: f64, floor: f64) -> DMatrix<f64> {
    let nrows = m.nrows();
    if m.ncols() == 0 {
        return DMatrix::zeros(nrows, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested left singular vectors");
    let smax = svd.singular_values.amax();
    let threshold = rel_tol * smax.max(floor);
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > threshold)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    columns(nrows, &cols)
}

/// Stacks vectors of length `n` as matrix columns.
pub fn columns(n: usize, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(n, vectors.len());
    for (j, v) in vectors.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

/// Largest distance from a unit vector of `span(x)` to `span(y)`
/// (Euclidean), i.e. how far `span(x) ⊂ span(y)` fails. Both arguments are
/// column sets; `y` need not be orthonormal.
pub fn inclusion_residual(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    if x.ncols() == 0 {
        return 0.0;
    }
    let xo = column_space(x, 1e-12, 0.0);
    let yo = column_space(y, 1e-12, 0.0);
    let proj = &yo * (yo.transpose() * &xo);
    (&xo - proj).column_iter().fold(0.0, |m, c| m.max(c.norm()))
}

/// Scales `v` to unit Euclidean norm with its largest-magnitude component
/// positive, so kernel vectors are reproducible.
pub fn canonical_direction(v: &DVector<f64>) -> DVector<f64> {
    let norm = v.norm();
    if norm == 0.0 {
        return v.clone();
    }
    let (imax, _) = v.iter().enumerate().fold((0, 0.0f64), |(bi, bv), (i, &x)| {
        if x.abs() > bv {
            (i, x.abs())
        } else {
            (bi, bv)
        }
    });
    let sign = if v[imax] < 0.0 { -1.0 } else { 1.0 };
    v * (sign / norm)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_of_rank_one() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = null_space(&m, 1e-9, 0.0);
        assert_eq!(k.ncols(), 2);
        assert!((&m * &k).amax() < 1e-14);
        assert_eq!(rank(&m, 1e-9, 0.0), 1);
    }

    #[test]
    fn zero_matrix_with_floor() {
        let m = DMatrix::from_element(3, 3, 1e-17);
        assert_eq!(null_space(&m, 1e-9, 1.0).ncols(), 3);
        assert_eq!(null_space(&m, 1e-9, 0.0).ncols(), 2);
    }

    #[test]
    fn inclusion() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 0.0]);
        let y = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!(inclusion_residual(&x, &y) < 1e-15);
        assert!(inclusion_residual(&y, &x) > 0.5);
    }

    #[test]
    fn canonical_sign() {
        let v = DVector::from_column_slice(&[0.1, -3.0]);
        let c = canonical_direction(&v);
        assert!(c[1] > 0.0 && (c.norm() - 1.0).abs() < 1e-15);
    }
}
