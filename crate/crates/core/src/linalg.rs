//! Guarded wrappers around nalgebra decompositions.

use nalgebra::{DMatrix, SVD};

/// SVD whose reconstruction is verified.
///
/// The dynamic-size SVD in nalgebra 0.35 occasionally returns factors that do
/// not reproduce the input (observed on well-conditioned 3x3 matrices with
/// the default convergence epsilon). The result is checked against the input
/// and recomputed on the transpose, then with a zero epsilon, when the check
/// fails. Returns `None` if no attempt reconstructs to `1e-10` relative.
pub fn checked_svd(m: &DMatrix<f64>) -> Option<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let ok = |svd: &SVD<f64, nalgebra::Dyn, nalgebra::Dyn>, target: &DMatrix<f64>| {
        svd.clone()
            .recompose()
            .map(|r| (r - target).amax() <= 1e-10 * scale)
            .unwrap_or(false)
    };
    if let Some(svd) = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0) {
        if ok(&svd, m) {
            return Some(svd);
        }
    }
    log::debug!("SVD check failed on a {}x{} matrix, retrying", m.nrows(), m.ncols());
    let mt = m.transpose();
    if let Some(t) = SVD::try_new(mt.clone(), true, true, f64::EPSILON, 0) {
        if ok(&t, &mt) {
            return Some(SVD {
                u: t.v_t.map(|v| v.transpose()),
                v_t: t.u.map(|u| u.transpose()),
                singular_values: t.singular_values,
            });
        }
    }
    let svd = SVD::try_new(m.clone(), true, true, 0.0, 100_000)?;
    ok(&svd, m).then_some(svd)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_problem_matrix() {
        let h = DMatrix::from_column_slice(
            3,
            3,
            &[
                37.91820848437869,
                112.88166601793034,
                101.67241876376974,
                -66.07248099061184,
                38.36793002952926,
                -17.956548848831428,
                -2.972113629303208,
                -3.026735124104192,
                4.468863170204809,
            ],
        );
        let svd = checked_svd(&h).unwrap();
        assert!((svd.recompose().unwrap() - &h).amax() < 1e-10 * h.amax());
    }

    #[test]
    fn wide_matrix() {
        let m = DMatrix::from_fn(3, 40, |r, c| ((r * 7 + c * 3) % 11) as f64 - 5.0);
        let svd = checked_svd(&m).unwrap();
        assert_eq!(svd.u.as_ref().unwrap().shape(), (3, 3));
        assert!((svd.recompose().unwrap() - &m).amax() < 1e-9);
    }
}
