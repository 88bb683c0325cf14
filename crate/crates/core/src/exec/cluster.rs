//! Seeded k-means with k-means++ seeding and silhouette-based choice of k.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MAX_ITERATIONS: usize = 100;
/// Upper end of the automatic k search.
pub const MAX_AUTO_K: usize = 8;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Cluster of every point; clusters are numbered by first appearance.
    pub assignment: Vec<usize>,
    pub k: usize,
    pub inertia: f64,
}

fn distinct_count(points: &[Vec<f64>]) -> usize {
    let mut seen: Vec<&Vec<f64>> = Vec::new();
    for p in points {
        if !seen.contains(&p) {
            seen.push(p);
        }
    }
    seen.len()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.random_range(0..points.len())].clone()];
    while centers.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centers.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = d.iter().rposition(|x| *x > 0.0).expect("a positive distance");
        for (i, x) in d.iter().enumerate() {
            if *x <= 0.0 {
                continue;
            }
            if target < *x {
                pick = i;
                break;
            }
            target -= x;
        }
        centers.push(points[pick].clone());
    }
    centers
}

fn lloyd(points: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> (Vec<usize>, f64) {
    let dim = points[0].len();
    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..centers.len())
                .min_by(|a, b| dist2(p, &centers[*a]).total_cmp(&dist2(p, &centers[*b])))
                .expect("at least one center");
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points.iter().zip(&assign).filter(|(_, a)| **a == c).map(|(p, _)| p).collect();
            // an emptied cluster keeps its previous center
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; dim];
            for m in &members {
                for (acc, v) in mean.iter_mut().zip(m.iter()) {
                    *acc += v;
                }
            }
            for v in mean.iter_mut() {
                *v /= members.len() as f64;
            }
            *center = mean;
        }
    }
    let inertia = points.iter().zip(&assign).map(|(p, a)| dist2(p, &centers[*a])).sum();
    (assign, inertia)
}

/// Renumbers clusters by first appearance and drops empty ones.
fn canonical(assign: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<(usize, usize)> = Vec::new();
    let out = assign
        .iter()
        .map(|a| match map.iter().find(|(from, _)| from == a) {
            Some((_, to)) => *to,
            None => {
                let to = map.len();
                map.push((*a, to));
                to
            }
        })
        .collect();
    (out, map.len())
}

/// k-means with `k` capped at the number of distinct points. The best of
/// `restarts` seeded runs by inertia wins; ties keep the earlier run.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Clustering {
    if points.is_empty() {
        return Clustering {
            assignment: vec![],
            k: 0,
            inertia: 0.0,
        };
    }
    let k = k.clamp(1, distinct_count(points));
    let mut best: Option<(Vec<usize>, f64)> = None;
    for r in 0..restarts.max(1) {
        // restarts of neighbouring seeds must not share streams
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64));
        let centers = plus_plus(points, k, &mut rng);
        let (assign, inertia) = lloyd(points, centers);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b - 1e-12) {
            best = Some((assign, inertia));
        }
    }
    let (assign, inertia) = best.expect("at least one run");
    let (assignment, k) = canonical(&assign);
    Clustering { assignment, k, inertia }
}

/// Mean silhouette; singleton clusters score 0.
pub fn silhouette(points: &[Vec<f64>], assign: &[usize]) -> f64 {
    let k = assign.iter().copied().max().map_or(0, |m| m + 1);
    if points.len() < 2 || k < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (j, q) in points.iter().enumerate() {
            if i != j {
                sums[assign[j]] += dist2(p, q).sqrt();
                counts[assign[j]] += 1;
            }
        }
        let own = assign[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|c| *c != own && counts[*c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / points.len() as f64
}

/// Picks k in 2..=min(8, n-1, distinct) by best silhouette (smallest k on
/// ties). Fewer than three points, or fewer than two distinct ones, form
/// one cluster per distinct point.
pub fn auto_kmeans(points: &[Vec<f64>], seed: u64, restarts: usize) -> Clustering {
    let distinct = distinct_count(points);
    let hi = MAX_AUTO_K.min(points.len().saturating_sub(1)).min(distinct);
    if hi < 2 {
        return kmeans(points, distinct.max(1), seed, restarts);
    }
    let mut best: Option<(f64, Clustering)> = None;
    for k in 2..=hi {
        let c = kmeans(points, k, seed, restarts);
        let s = silhouette(points, &c.assignment);
        if best.as_ref().is_none_or(|(b, _)| s > *b + 1e-12) {
            best = Some((s, c));
        }
    }
    best.expect("k range is nonempty").1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn blob(cx: f64, cy: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| vec![cx + rng.random_range(-0.1..0.1), cy + rng.random_range(-0.1..0.1)])
            .collect()
    }

    /// Brute-force silhouette straight from the definition.
    fn oracle_silhouette(points: &[Vec<f64>], assign: &[usize]) -> f64 {
        let d = |a: &Vec<f64>, b: &Vec<f64>| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let mut s = 0.0;
        for i in 0..points.len() {
            let same: Vec<f64> = (0..points.len())
                .filter(|j| *j != i && assign[*j] == assign[i])
                .map(|j| d(&points[i], &points[j]))
                .collect();
            if same.is_empty() {
                continue;
            }
            let a = same.iter().sum::<f64>() / same.len() as f64;
            let mut b = f64::INFINITY;
            for c in 0..=*assign.iter().max().unwrap() {
                if c == assign[i] {
                    continue;
                }
                let other: Vec<f64> = (0..points.len()).filter(|j| assign[*j] == c).map(|j| d(&points[i], &points[j])).collect();
                if !other.is_empty() {
                    b = b.min(other.iter().sum::<f64>() / other.len() as f64);
                }
            }
            s += (b - a) / a.max(b);
        }
        s / points.len() as f64
    }

    #[test]
    fn two_blobs_choose_two() {
        let mut pts = blob(0.0, 0.0, 10, 1);
        pts.extend(blob(5.0, 5.0, 10, 2));
        let c = auto_kmeans(&pts, 7, 4);
        assert_eq!(c.k, 2);
        assert!(c.assignment[..10].iter().all(|a| *a == 0));
        assert!(c.assignment[10..].iter().all(|a| *a == 1));
        let s = silhouette(&pts, &c.assignment);
        assert!((s - oracle_silhouette(&pts, &c.assignment)).abs() < 1e-9);
        assert!(s > 0.9);
    }

    #[test]
    fn distinct_points_cap_k() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64 * 10.0, 0.0]).collect();
        let c = kmeans(&pts, 5, 1, 2);
        assert_eq!(c.k, 5);
        assert_eq!(c.assignment, vec![0, 1, 2, 3, 4]);
        let dup = vec![vec![1.0, 1.0]; 4];
        assert_eq!(kmeans(&dup, 3, 1, 2).k, 1);
        assert_eq!(auto_kmeans(&dup, 1, 2).k, 1);
        assert_eq!(kmeans(&[], 3, 1, 1).k, 0);
    }

    #[test]
    fn duplicated_groups_are_recovered_exactly() {
        // five values, each twice: silhouette is perfect at k = 5
        let mut pts = Vec::new();
        for i in 0..5 {
            pts.push(vec![i as f64, (i * i) as f64]);
            pts.push(vec![i as f64, (i * i) as f64]);
        }
        let c = auto_kmeans(&pts, 3, 4);
        assert_eq!(c.k, 5);
        assert_eq!(c.assignment, vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4]);
    }

    proptest! {
        #[test]
        fn assignments_are_canonical_and_deterministic(
            raw in proptest::collection::vec((0f64..10.0, 0f64..10.0), 1..30), k in 1usize..6, seed in 0u64..100,
        ) {
            let pts: Vec<Vec<f64>> = raw.iter().map(|(x, y)| vec![*x, *y]).collect();
            let a = kmeans(&pts, k, seed, 2);
            prop_assert_eq!(&a, &kmeans(&pts, k, seed, 2));
            prop_assert!(a.k <= k && a.k >= 1);
            let mut next = 0;
            for c in &a.assignment {
                prop_assert!(*c <= next);
                if *c == next { next += 1; }
            }
            prop_assert_eq!(next, a.k);
            let s = silhouette(&pts, &a.assignment);
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }
}
