//! Front quality measures: dominance filtering, exact hypervolume (m ≤ 3),
//! expected utility and sparsity. All objectives are maximised.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weightspace::ScalarisationVector;
use crate::ObjectiveVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("hypervolume is implemented for m <= 3, got m = {0}")]
    DimensionUnsupported(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("front is empty")]
    EmptyFront,
    #[error("sparsity needs at least 2 points, got {0}")]
    FrontTooSmall(usize),
}

/// A front member with the policy, seed and conditioning vector that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontPoint {
    pub objective: ObjectiveVector,
    pub k: usize,
    pub seed: u64,
    pub w: ScalarisationVector,
}

/// `a` weakly dominates `b` everywhere and strictly somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

/// Indices of the non-dominated points, in input order, keeping the first of
/// any exact duplicates.
pub fn pareto_indices<P: AsRef<[f64]>>(points: &[P]) -> Vec<usize> {
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        let p = p.as_ref();
        for (j, q) in points.iter().enumerate() {
            let q = q.as_ref();
            if dominates(q, p) || (j < i && q == p) {
                continue 'outer;
            }
        }
        keep.push(i);
    }
    keep
}

pub fn pareto_filter(points: &[ObjectiveVector]) -> Vec<ObjectiveVector> {
    pareto_indices(points).into_iter().map(|i| points[i].clone()).collect()
}

pub fn pareto_filter_tagged(points: &[FrontPoint]) -> Vec<FrontPoint> {
    let objs: Vec<&[f64]> = points.iter().map(|p| p.objective.as_slice()).collect();
    pareto_indices(&objs).into_iter().map(|i| points[i].clone()).collect()
}

fn check_dims<P: AsRef<[f64]>>(points: &[P], m: usize) -> Result<(), MetricsError> {
    for p in points {
        if p.as_ref().len() != m {
            return Err(MetricsError::DimensionMismatch { expected: m, got: p.as_ref().len() });
        }
    }
    Ok(())
}

/// Exact hypervolume dominated by `front` and bounded below by `reference`.
/// Points not strictly above the reference on every objective contribute
/// nothing and are dropped.
pub fn hypervolume<P: AsRef<[f64]>>(front: &[P], reference: &[f64]) -> Result<f64, MetricsError> {
    let m = reference.len();
    if m == 0 || m > 3 {
        return Err(MetricsError::DimensionUnsupported(m));
    }
    check_dims(front, m)?;
    let above: Vec<&[f64]> = front
        .iter()
        .map(|p| p.as_ref())
        .filter(|p| p.iter().zip(reference).all(|(x, r)| x > r))
        .collect();
    // dominated points cannot change the union, so they are removed up front
    // to keep the result independent of them bit for bit
    let pts: Vec<Vec<f64>> = pareto_indices(&above)
        .into_iter()
        .map(|i| above[i])
        .map(|p| p.iter().zip(reference).map(|(x, r)| x - r).collect())
        .collect();
    Ok(match m {
        1 => pts.iter().map(|p| p[0]).fold(0.0, f64::max),
        2 => hv2(pts.iter().map(|p| (p[0], p[1])).collect()),
        _ => hv3(pts),
    })
}

/// Area above the origin; points are already shifted so the reference is 0.
fn hv2(mut pts: Vec<(f64, f64)>) -> f64 {
    pts.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal)));
    let mut area = 0.0;
    let mut best_y = 0.0;
    for (x, y) in pts {
        if y > best_y {
            area += x * (y - best_y);
            best_y = y;
        }
    }
    area
}

fn hv3(mut pts: Vec<Vec<f64>>) -> f64 {
    pts.sort_by(|a, b| b[2].partial_cmp(&a[2]).unwrap_or(Ordering::Equal));
    let mut vol = 0.0;
    let mut slice: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    let mut i = 0;
    while i < pts.len() {
        let z = pts[i][2];
        while i < pts.len() && pts[i][2] == z {
            slice.push((pts[i][0], pts[i][1]));
            i += 1;
        }
        let next_z = if i < pts.len() { pts[i][2] } else { 0.0 };
        vol += hv2(slice.clone()) * (z - next_z);
    }
    vol
}

/// Mean over the weight set of the best scalarised value on the front.
pub fn expected_utility<P: AsRef<[f64]>>(front: &[P], weights: &[ScalarisationVector]) -> Result<f64, MetricsError> {
    if front.is_empty() {
        return Err(MetricsError::EmptyFront);
    }
    if weights.is_empty() {
        return Ok(0.0);
    }
    let m = weights[0].dim();
    check_dims(front, m)?;
    let total: f64 = weights
        .iter()
        .map(|w| front.iter().map(|p| w.dot(p.as_ref())).fold(f64::NEG_INFINITY, f64::max))
        .sum();
    Ok(total / weights.len() as f64)
}

/// Mean squared gap between neighbours along each objective, summed over
/// objectives.
pub fn sparsity<P: AsRef<[f64]>>(front: &[P]) -> Result<f64, MetricsError> {
    if front.len() < 2 {
        return Err(MetricsError::FrontTooSmall(front.len()));
    }
    let m = front[0].as_ref().len();
    check_dims(front, m)?;
    let mut total = 0.0;
    for j in 0..m {
        let mut col: Vec<f64> = front.iter().map(|p| p.as_ref()[j]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        total += col.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum::<f64>();
    }
    Ok(total / (front.len() - 1) as f64)
}

/// Componentwise minimum minus 1% of the range; a flat component is pushed
/// down by `0.01 · max(1, |min|)` instead.
pub fn reference_point<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<f64>, MetricsError> {
    let first = points.first().ok_or(MetricsError::EmptyFront)?.as_ref();
    let m = first.len();
    check_dims(points, m)?;
    let mut lo = first.to_vec();
    let mut hi = first.to_vec();
    for p in points {
        for (j, x) in p.as_ref().iter().enumerate() {
            lo[j] = lo[j].min(*x);
            hi[j] = hi[j].max(*x);
        }
    }
    Ok(lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let range = h - l;
            if range > 0.0 {
                l - 0.01 * range
            } else {
                l - 0.01 * l.abs().max(1.0)
            }
        })
        .collect())
}

pub fn write_front_csv<W: Write>(out: &mut W, front: &[FrontPoint]) -> std::io::Result<()> {
    let m = front.first().map_or(0, |p| p.objective.dim());
    let mut header: Vec<String> = (0..m).map(|j| format!("f{j}")).collect();
    header.push("k".into());
    header.push("seed".into());
    header.extend((0..m).map(|j| format!("w{j}")));
    writeln!(out, "{}", header.join(","))?;
    for p in front {
        let mut row: Vec<String> = p.objective.as_slice().iter().map(|x| format!("{x}")).collect();
        row.push(p.k.to_string());
        row.push(p.seed.to_string());
        row.extend(p.w.as_slice().iter().map(|x| format!("{x}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weightspace::generate_simplex_grid;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ov(v: &[f64]) -> ObjectiveVector {
        ObjectiveVector::new(v.to_vec())
    }

    fn sv(v: &[f64]) -> ScalarisationVector {
        ScalarisationVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn filter_examples() {
        let f = pareto_filter(&[ov(&[1.0, 2.0]), ov(&[2.0, 1.0]), ov(&[0.0, 0.0])]);
        assert_eq!(f, vec![ov(&[1.0, 2.0]), ov(&[2.0, 1.0])]);
        assert_eq!(pareto_filter(&[ov(&[1.0, 1.0]), ov(&[1.0, 1.0])]), vec![ov(&[1.0, 1.0])]);
    }

    #[test]
    fn filter_matches_brute_force_on_random_3d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<ObjectiveVector> = (0..200)
            .map(|_| ov(&[rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]))
            .collect();
        let brute: Vec<ObjectiveVector> = pts
            .iter()
            .filter(|p| {
                !pts.iter().any(|q| {
                    let (p, q) = (p.as_slice(), q.as_slice());
                    q.iter().zip(p).all(|(a, b)| a >= b) && q.iter().zip(p).any(|(a, b)| a > b)
                })
            })
            .cloned()
            .collect();
        assert_eq!(pareto_filter(&pts), brute);
    }

    #[test]
    fn hv_examples() {
        assert_eq!(hypervolume(&[ov(&[1.0, 2.0]), ov(&[2.0, 1.0])], &[0.0, 0.0]).unwrap(), 3.0);
        assert_eq!(hypervolume(&[ov(&[2.0, 3.0])], &[0.0, 0.0]).unwrap(), 6.0);
        assert_eq!(hypervolume(&[ov(&[1.0, 1.0, 1.0])], &[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(hypervolume(&[ov(&[-1.0, 5.0])], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            hypervolume(&[ov(&[1.0; 4])], &[0.0; 4]),
            Err(MetricsError::DimensionUnsupported(4))
        );
    }

    fn monte_carlo(front: &[Vec<f64>], m: usize, samples: usize, rng: &mut ChaCha8Rng) -> f64 {
        let mut upper = vec![0.0f64; m];
        for p in front {
            for j in 0..m {
                upper[j] = upper[j].max(p[j]);
            }
        }
        let box_vol: f64 = upper.iter().product();
        let mut x = vec![0.0; m];
        let mut hits = 0usize;
        for _ in 0..samples {
            for j in 0..m {
                x[j] = rng.random::<f64>() * upper[j];
            }
            if front.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a >= b)) {
                hits += 1;
            }
        }
        box_vol * hits as f64 / samples as f64
    }

    #[test]
    fn hv_matches_monte_carlo_on_50_fronts() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for case in 0..50 {
            let m = 2 + case % 2;
            let n = 1 + rng.random_range(0..20);
            let front: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| rng.random_range(0.1..1.0)).collect()).collect();
            let exact = hypervolume(&front, &vec![0.0; m]).unwrap();
            let est = monte_carlo(&front, m, 1_000_000, &mut rng);
            assert!((exact - est).abs() <= 0.01 * exact, "case {case}: {exact} vs {est}");
        }
    }

    #[test]
    fn eu_examples() {
        let front = [ov(&[1.0, 0.0]), ov(&[0.0, 1.0])];
        let grid = [sv(&[0.0, 1.0]), sv(&[0.5, 0.5]), sv(&[1.0, 0.0])];
        assert!((expected_utility(&front, &grid).unwrap() - 5.0 / 6.0).abs() < 1e-15);
        let single = [ov(&[3.0, 1.0])];
        let expect = grid.iter().map(|w| w.dot(&[3.0, 1.0])).sum::<f64>() / 3.0;
        assert_eq!(expected_utility(&single, &grid).unwrap(), expect);
        assert!(expected_utility(&[ov(&[2.0, 2.0])], &grid).unwrap() > expected_utility(&[ov(&[1.0, 1.0])], &grid).unwrap());
        let empty: [ObjectiveVector; 0] = [];
        assert_eq!(expected_utility(&empty, &grid), Err(MetricsError::EmptyFront));
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&[ov(&[0.0, 1.0]), ov(&[1.0, 0.0])]).unwrap(), 2.0);
        let three = [ov(&[0.0, 1.0]), ov(&[0.5, 0.5]), ov(&[1.0, 0.0])];
        assert!((sparsity(&three).unwrap() - 0.5).abs() < 1e-15);
        let dup = [ov(&[0.0, 1.0]), ov(&[0.0, 1.0]), ov(&[1.0, 0.0])];
        assert_eq!(sparsity(&dup).unwrap(), 1.0);
        assert_eq!(sparsity(&[ov(&[0.0, 1.0])]), Err(MetricsError::FrontTooSmall(1)));
    }

    #[test]
    fn reference_point_margin() {
        let r = reference_point(&[ov(&[0.0, 5.0]), ov(&[10.0, 5.0])]).unwrap();
        assert_eq!(r, vec![-0.1, 4.95]);
    }

    #[test]
    fn front_csv_columns() {
        let mut out = Vec::new();
        let p = FrontPoint { objective: ov(&[1.5, 2.0]), k: 3, seed: 7, w: sv(&[0.25, 0.75]) };
        write_front_csv(&mut out, &[p]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "f0,f1,k,seed,w0,w1\n1.5,2,3,7,0.25,0.75\n");
    }

    fn front_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..=3).prop_flat_map(|m| prop::collection::vec(prop::collection::vec(0.0f64..10.0, m), 1..15))
    }

    proptest! {
        #[test]
        fn hv_monotone_and_dominated_points_free(front in front_strategy(), extra in prop::collection::vec(0.0f64..10.0, 3)) {
            let m = front[0].len();
            let r = vec![0.0; m];
            let base = hypervolume(&front, &r).unwrap();
            let mut more = front.clone();
            more.push(extra[..m].to_vec());
            prop_assert!(hypervolume(&more, &r).unwrap() >= base - 1e-9);
            let mut dominated = front.clone();
            dominated.push(front[0].iter().map(|x| x * 0.5).collect());
            prop_assert_eq!(hypervolume(&dominated, &r).unwrap(), base);
        }

        #[test]
        fn filter_idempotent_and_hv_preserving(front in front_strategy()) {
            let pts: Vec<ObjectiveVector> = front.iter().map(|p| ov(p)).collect();
            let once = pareto_filter(&pts);
            prop_assert_eq!(pareto_filter(&once), once.clone());
            let r = vec![0.0; front[0].len()];
            let a = hypervolume(&pts, &r).unwrap();
            let b = hypervolume(&once, &r).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        }

        #[test]
        fn eu_monotone_under_dominance(front in front_strategy(), lift in 0.0f64..2.0) {
            let m = front[0].len();
            let grid = generate_simplex_grid(m, if m == 2 { 0.01 } else { 0.05 }).unwrap();
            let base = expected_utility(&front, &grid).unwrap();
            let mut more = front.clone();
            more.push(front[0].iter().map(|x| x + lift).collect());
            prop_assert!(expected_utility(&more, &grid).unwrap() >= base - 1e-12);
        }

        #[test]
        fn superset_of_evaluations_never_lowers_hv(front in front_strategy(), cut in 0usize..15) {
            let m = front[0].len();
            let r = vec![0.0; m];
            let subset = &front[..cut.min(front.len())];
            let full = hypervolume(&front, &r).unwrap();
            prop_assert!(full >= hypervolume(subset, &r).unwrap() * (1.0 - 1e-12));
        }
    }
}
