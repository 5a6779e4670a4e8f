//! Projection onto `{0 ≤ v_1 ≤ … ≤ v_K ≤ 1}`.

use alloc::vec::Vec;

/// Least-squares non-decreasing fit by pool-adjacent-violators.
pub fn isotonic_increasing(values: &[f64]) -> Vec<f64> {
    // blocks of (mean, count)
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values {
        blocks.push((v, 1));
        while blocks.len() > 1 {
            let (m2, c2) = blocks[blocks.len() - 1];
            let (m1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            let c = c1 + c2;
            *blocks.last_mut().unwrap() = ((m1 * c1 as f64 + m2 * c2 as f64) / c as f64, c);
        }
    }
    blocks.into_iter().flat_map(|(m, c)| core::iter::repeat_n(m, c)).collect()
}

/// Euclidean projection onto the monotone unit box.
pub fn project_monotone_box(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.to_vec();
    loop {
        let next: Vec<f64> = isotonic_increasing(&v).into_iter().map(|x| x.clamp(0.0, 1.0)).collect();
        if next == v {
            return v;
        }
        v = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pools_violators() {
        assert_eq!(isotonic_increasing(&[1.0, 3.0, 2.0, 4.0]), [1.0, 2.5, 2.5, 4.0]);
        assert_eq!(isotonic_increasing(&[3.0, 2.0, 1.0]), [2.0, 2.0, 2.0]);
        assert!(isotonic_increasing(&[]).is_empty());
    }

    #[test]
    fn box_projection() {
        assert_eq!(project_monotone_box(&[0.8, 0.2]), [0.5, 0.5]);
        assert_eq!(project_monotone_box(&[-1.0, 0.5, 2.0]), [0.0, 0.5, 1.0]);
        assert_eq!(project_monotone_box(&[1.5, 1.2]), [1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_idempotent(v in proptest::collection::vec(-2.0f64..3.0, 1..8)) {
            let p = project_monotone_box(&v);
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(project_monotone_box(&p), p.clone());
            // no feasible point on a coarse grid is closer
            let dist = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
            let best = dist(&p);
            for s in 0..=10 {
                let t = s as f64 / 10.0;
                let flat = alloc::vec![t; v.len()];
                prop_assert!(best <= dist(&flat) + 1e-12);
            }
        }
    }
}
