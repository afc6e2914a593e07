use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use proptest::prelude::*;
use stencilforge::fd::{fd_weights, int_offsets};

fn r(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Solves the moment system `sum_k w_k a_k^j = j! [j == d]` by Gauss-Jordan elimination.
fn vandermonde_weights(d: usize, offsets: &[BigRational]) -> Vec<BigRational> {
    let n = offsets.len();
    let mut m: Vec<Vec<BigRational>> = (0..n)
        .map(|j| {
            let mut row: Vec<BigRational> = offsets.iter().map(|a| num_traits::pow(a.clone(), j)).collect();
            let fact: BigRational = (1..=j as i64).map(r).fold(BigRational::one(), |acc, x| acc * x);
            row.push(if j == d { fact } else { BigRational::zero() });
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&i| !m[i][col].is_zero()).expect("singular system");
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for x in m[col].iter_mut() {
            *x = &*x / &p;
        }
        for i in 0..n {
            if i != col && !m[i][col].is_zero() {
                let f = m[i][col].clone();
                for k in 0..=n {
                    let v = &m[col][k] * &f;
                    m[i][k] -= v;
                }
            }
        }
    }
    m.into_iter().map(|row| row[n].clone()).collect()
}

fn distinct_offsets() -> impl Strategy<Value = Vec<BigRational>> {
    proptest::collection::btree_set((-12i64..=12, 1i64..=3), 2..7).prop_filter_map("distinct", |set| {
        let mut v: Vec<BigRational> = set.into_iter().map(|(n, d)| BigRational::new(n.into(), d.into())).collect();
        v.sort();
        v.dedup();
        (v.len() >= 2).then_some(v)
    })
}

proptest! {
    #[test]
    fn weights_match_moment_system(offsets in distinct_offsets(), d in 0usize..4) {
        prop_assume!(offsets.len() > d);
        prop_assert_eq!(fd_weights(d, &offsets).unwrap(), vandermonde_weights(d, &offsets));
    }

    #[test]
    fn polynomials_below_stencil_degree_are_differentiated_exactly(
        offsets in distinct_offsets(),
        d in 0usize..3,
        coeffs in proptest::collection::vec(-20i64..20, 1..7),
    ) {
        prop_assume!(offsets.len() > d);
        let deg = (offsets.len() - 1).min(coeffs.len() - 1);
        let c = &coeffs[..=deg];
        let w = fd_weights(d, &offsets).unwrap();
        let poly = |x: &BigRational| c.iter().rev().fold(BigRational::zero(), |acc, &k| acc * x + r(k));
        let approx: BigRational = w.iter().zip(&offsets).map(|(wk, a)| wk * poly(a)).sum();
        // d-th derivative at 0 is d! * c[d]
        let exact = if d <= deg { (1..=d as i64).map(r).fold(r(c[d]), |acc, x| acc * x) } else { BigRational::zero() };
        prop_assert_eq!(approx, exact);
    }

    #[test]
    fn centered_stencils_have_parity_symmetry(p in 1i64..6, d in 1usize..4) {
        prop_assume!((2 * p + 1) as usize > d);
        let w = fd_weights(d, &int_offsets(-p, p)).unwrap();
        let n = w.len();
        for k in 0..n {
            let mirrored = if d % 2 == 0 { w[n - 1 - k].clone() } else { -w[n - 1 - k].clone() };
            prop_assert_eq!(&w[k], &mirrored);
        }
        let total: BigRational = w.iter().cloned().sum();
        prop_assert!(total.is_zero());
    }
}
