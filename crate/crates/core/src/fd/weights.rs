use num_rational::BigRational;
use num_traits::{One, Zero};

use super::FdError;

/// Exact weights `w` with `sum_k w[k] * p(offsets[k]) == p^(d)(0)` for every
/// polynomial `p` of degree below `offsets.len()`.
///
/// Uses Fornberg's recurrence, which builds the weights for all derivative
/// orders up to `derivative_order` one sample point at a time.
pub fn fd_weights(derivative_order: usize, offsets: &[BigRational]) -> Result<Vec<BigRational>, FdError> {
    let n = offsets.len();
    if n < derivative_order + 1 {
        return Err(FdError::InsufficientPoints {
            derivative_order,
            points: n,
        });
    }
    for (i, a) in offsets.iter().enumerate() {
        if offsets[..i].contains(a) {
            return Err(FdError::DuplicateOffsets(a.to_string()));
        }
    }
    let m_max = derivative_order;
    // delta[m][v]: weight of point v for derivative m, over the points seen so far
    let mut delta = vec![vec![BigRational::zero(); n]; m_max + 1];
    delta[0][0] = BigRational::one();
    let mut c1 = BigRational::one();
    for k in 1..n {
        let mut c2 = BigRational::one();
        let prev = delta.clone();
        for v in 0..k {
            let c3 = &offsets[k] - &offsets[v];
            c2 = &c2 * &c3;
            for m in 0..=k.min(m_max) {
                let mut w = &offsets[k] * &prev[m][v];
                if m > 0 {
                    w -= BigRational::from_integer(m.into()) * &prev[m - 1][v];
                }
                delta[m][v] = w / &c3;
            }
        }
        for m in 0..=k.min(m_max) {
            let mut w = -(&offsets[k - 1] * &prev[m][k - 1]);
            if m > 0 {
                w += BigRational::from_integer(m.into()) * &prev[m - 1][k - 1];
            }
            delta[m][k] = &c1 / &c2 * w;
        }
        c1 = c2;
    }
    Ok(delta.swap_remove(m_max))
}

/// Integer offsets `lo..=hi` as rationals.
pub fn int_offsets(lo: i64, hi: i64) -> Vec<BigRational> {
    (lo..=hi).map(|k| BigRational::from_integer(k.into())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn forward_first_derivative() {
        assert_eq!(fd_weights(1, &int_offsets(0, 1)).unwrap(), vec![r(-1, 1), r(1, 1)]);
    }

    #[test]
    fn centered_second_derivative() {
        assert_eq!(
            fd_weights(2, &int_offsets(-1, 1)).unwrap(),
            vec![r(1, 1), r(-2, 1), r(1, 1)]
        );
        assert_eq!(
            fd_weights(2, &int_offsets(-2, 2)).unwrap(),
            vec![r(-1, 12), r(4, 3), r(-5, 2), r(4, 3), r(-1, 12)]
        );
    }

    #[test]
    fn argument_errors() {
        assert!(matches!(
            fd_weights(2, &int_offsets(0, 1)),
            Err(FdError::InsufficientPoints { .. })
        ));
        assert!(matches!(
            fd_weights(1, &[r(0, 1), r(1, 1), r(0, 1)]),
            Err(FdError::DuplicateOffsets(_))
        ));
    }

    #[test]
    fn non_integer_offsets() {
        // staggered midpoint first derivative
        let w = fd_weights(1, &[r(-1, 2), r(1, 2)]).unwrap();
        assert_eq!(w, vec![r(-1, 1), r(1, 1)]);
    }
}
