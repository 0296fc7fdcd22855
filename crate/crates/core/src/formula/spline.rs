use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Restricted cubic spline basis (truncated-power form, linear beyond the
/// boundary knots), each column scaled by `1 / (t_m - t_1)^2`. Returns
/// `m - 2` values.
pub fn rcs_basis<T: Scalar>(x: T, knots: &[T]) -> Result<Vec<T>> {
    if knots.len() < 3 {
        return Err(Error::Argument(format!(
            "restricted cubic spline needs at least 3 knots, got {}",
            knots.len()
        )));
    }
    if knots.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Argument(
            "spline knots must be sorted and distinct".into(),
        ));
    }
    let mut out = vec![T::zero(); knots.len() - 2];
    rcs_fill(x, knots, &mut out);
    Ok(out)
}

/// Unchecked form of [`rcs_basis`] writing into `out`.
pub fn rcs_fill<T: Scalar>(x: T, knots: &[T], out: &mut [T]) {
    let m = knots.len();
    let (tl, tm, tm1) = (knots[0], knots[m - 1], knots[m - 2]);
    let norm = (tm - tl) * (tm - tl);
    let cube = |u: T| if u > T::zero() { u * u * u } else { T::zero() };
    let a = cube(x - tm1);
    let b = cube(x - tm);
    let span = tm - tm1;
    for (j, o) in out.iter_mut().enumerate() {
        let tj = knots[j];
        *o = (cube(x - tj) - a * (tm - tj) / span + b * (tm1 - tj) / span) / norm;
    }
}
