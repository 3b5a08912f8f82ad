use super::nondominated_indices;

/// Volume dominated by `points` and bounded by `reference`, by recursive
/// slicing along the last objective. Points outside the reference box are
/// dropped with a warning.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> f64 {
    let m = reference.len();
    let inside: Vec<Vec<f64>> = points
        .iter()
        .filter(|p| {
            let ok = p.len() == m && p.iter().zip(reference).all(|(a, r)| a.is_finite() && a <= r);
            if !ok {
                log::warn!("hypervolume: dropping point {p:?} outside reference {reference:?}");
            }
            ok
        })
        .cloned()
        .collect();
    if inside.is_empty() || m == 0 {
        return 0.0;
    }
    slice(inside, reference)
}

fn slice(points: Vec<Vec<f64>>, reference: &[f64]) -> f64 {
    let m = reference.len();
    if m == 1 {
        let best = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        return reference[0] - best;
    }
    let front: Vec<Vec<f64>> = nondominated_indices(&points).into_iter().map(|i| points[i].clone()).collect();
    let mut order: Vec<usize> = (0..front.len()).collect();
    order.sort_by(|&a, &b| front[a][m - 1].total_cmp(&front[b][m - 1]));
    let mut volume = 0.0;
    let mut active: Vec<Vec<f64>> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        active.push(front[i][..m - 1].to_vec());
        let top = order.get(k + 1).map_or(reference[m - 1], |&j| front[j][m - 1]);
        let depth = top - front[i][m - 1];
        if depth > 0.0 {
            volume += depth * slice(active.clone(), &reference[..m - 1]);
        }
    }
    volume
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boxes() {
        assert_eq!(hypervolume(&[vec![1.0, 1.0]], &[3.0, 3.0]), 4.0);
        assert_eq!(hypervolume(&[vec![1.0, 2.0], vec![2.0, 1.0]], &[3.0, 3.0]), 3.0);
        assert_eq!(hypervolume(&[vec![1.0, 1.0, 1.0]], &[2.0, 3.0, 4.0]), 6.0);
        assert_eq!(hypervolume(&[vec![4.0, 1.0]], &[3.0, 3.0]), 0.0);
        assert_eq!(hypervolume(&[], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn inclusion_exclusion_in_three_dimensions() {
        let p = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        // three boxes of volume 2, pairwise and triple overlaps of volume 1: 6 - 3 + 1
        assert_eq!(hypervolume(&p, &[2.0, 2.0, 2.0]), 4.0);
    }

    fn grid_volume(points: &[Vec<f64>], r: &[f64], steps: usize) -> f64 {
        // midpoint counting on a regular grid over [0, r]
        let m = r.len();
        let mut count = 0usize;
        let total = steps.pow(m as u32);
        for cell in 0..total {
            let mut c = cell;
            let x: Vec<f64> = (0..m)
                .map(|j| {
                    let k = c % steps;
                    c /= steps;
                    (k as f64 + 0.5) / steps as f64 * r[j]
                })
                .collect();
            if points.iter().any(|p| p.iter().zip(&x).all(|(a, b)| a <= b)) {
                count += 1;
            }
        }
        count as f64 / total as f64 * r.iter().product::<f64>()
    }

    proptest! {
        #[test]
        fn agrees_with_grid_counting(m in 2usize..=4, pts in prop::collection::vec(prop::collection::vec(0u8..8, 4), 1..8)) {
            // integer corners on a grid of spacing 1 are counted exactly by midpoints
            let p: Vec<Vec<f64>> = pts.iter().map(|v| v[..m].iter().map(|&x| x as f64).collect()).collect();
            let r = vec![8.0; m];
            let steps = 8;
            prop_assert!((hypervolume(&p, &r) - grid_volume(&p, &r, steps)).abs() < 1e-9);
        }

        #[test]
        fn dominated_point_adds_nothing(pts in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 3), 1..10), k in 0usize..10, bump in 0.0f64..0.5) {
            let r = vec![2.0; 3];
            let base = hypervolume(&pts, &r);
            let mut more = pts.clone();
            more.push(pts[k % pts.len()].iter().map(|v| v + bump).collect());
            prop_assert!((hypervolume(&more, &r) - base).abs() < 1e-12);
        }
    }
}
