//! Similarity joins over embedding columns.
//!
//! Every variant returns verified pairs only: a candidate is emitted iff
//! its cosine similarity reaches the threshold. The variants differ in how
//! candidates are generated, so hash and sorted-merge results are always a
//! subset of the nested-loop result.

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::relation::EmbeddingVector;

pub const LSH_BITS: usize = 16;
pub const LSH_TABLES: usize = 4;

fn unit(v: &EmbeddingVector) -> Vec<f64> {
    let n = v.norm();
    v.values().iter().map(|x| if n > 0.0 { *x as f64 / n } else { 0.0 }).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gaussian(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn verify(l: &[Vec<f64>], r: &[Vec<f64>], pairs: impl IntoIterator<Item = (usize, usize)>, threshold: f64) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = pairs
        .into_iter()
        .filter(|(i, j)| dot(&l[*i], &r[*j]) >= threshold - 1e-9)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn nested_loop(left: &[EmbeddingVector], right: &[EmbeddingVector], threshold: f64) -> Vec<(usize, usize)> {
    let l: Vec<Vec<f64>> = left.iter().map(unit).collect();
    let r: Vec<Vec<f64>> = right.iter().map(unit).collect();
    let all = (0..l.len()).flat_map(|i| (0..r.len()).map(move |j| (i, j)));
    verify(&l, &r, all, threshold)
}

/// Random-hyperplane LSH: pairs sharing a signature in any table are
/// candidates.
pub fn lsh_join(left: &[EmbeddingVector], right: &[EmbeddingVector], threshold: f64, seed: u64) -> Vec<(usize, usize)> {
    if left.is_empty() || right.is_empty() || threshold > 1.0 {
        return vec![];
    }
    let l: Vec<Vec<f64>> = left.iter().map(unit).collect();
    let r: Vec<Vec<f64>> = right.iter().map(unit).collect();
    let dim = l[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = BTreeSet::new();
    for _ in 0..LSH_TABLES {
        let planes: Vec<Vec<f64>> = (0..LSH_BITS).map(|_| gaussian(dim, &mut rng)).collect();
        let sig = |v: &Vec<f64>| -> u32 {
            planes
                .iter()
                .enumerate()
                .fold(0u32, |acc, (b, p)| if dot(v, p) >= 0.0 { acc | (1 << b) } else { acc })
        };
        let mut buckets: HashMap<u32, Vec<usize>> = HashMap::new();
        for (j, v) in r.iter().enumerate() {
            buckets.entry(sig(v)).or_default().push(j);
        }
        for (i, v) in l.iter().enumerate() {
            if let Some(js) = buckets.get(&sig(v)) {
                candidates.extend(js.iter().map(|j| (i, *j)));
            }
        }
    }
    verify(&l, &r, candidates, threshold)
}

/// Projects both sides onto one seeded random unit vector and pairs rows
/// whose projections lie within `sqrt(2 - 2·threshold)`. For unit vectors
/// the projection gap never exceeds the Euclidean distance, so the window
/// loses no qualifying pair.
pub fn sorted_merge_join(left: &[EmbeddingVector], right: &[EmbeddingVector], threshold: f64, seed: u64) -> Vec<(usize, usize)> {
    if left.is_empty() || right.is_empty() || threshold > 1.0 {
        return vec![];
    }
    let l: Vec<Vec<f64>> = left.iter().map(unit).collect();
    let r: Vec<Vec<f64>> = right.iter().map(unit).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut axis = gaussian(l[0].len(), &mut rng);
    let n = dot(&axis, &axis).sqrt();
    axis.iter_mut().for_each(|x| *x /= n);
    let project = |vs: &[Vec<f64>]| -> Vec<(f64, usize)> {
        let mut p: Vec<(f64, usize)> = vs.iter().enumerate().map(|(i, v)| (dot(v, &axis), i)).collect();
        p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        p
    };
    let (pl, pr) = (project(&l), project(&r));
    let window = (2.0 - 2.0 * threshold).max(0.0).sqrt() + 1e-9;
    let mut candidates = Vec::new();
    let mut start = 0;
    for (x, i) in &pl {
        while start < pr.len() && pr[start].0 < x - window {
            start += 1;
        }
        for (y, j) in &pr[start..] {
            if *y > x + window {
                break;
            }
            candidates.push((*i, *j));
        }
    }
    verify(&l, &r, candidates, threshold)
}

/// Indices of the `k` rows most similar to `query`, ties by row order,
/// returned in row order.
pub fn top_k(rows: &[EmbeddingVector], query: &EmbeddingVector, k: usize) -> Vec<usize> {
    let q = unit(query);
    let mut scored: Vec<(f64, usize)> = rows.iter().enumerate().map(|(i, v)| (dot(&unit(v), &q), i)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut keep: Vec<usize> = scored.into_iter().take(k).map(|(_, i)| i).collect();
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock_embedding;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_strings(seed: u64, n: usize) -> Vec<String> {
        let words = ["graph", "neural", "network", "diffusion", "model", "attention", "learning", "deep", "vision", "language"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let len = rng.random_range(1..4);
                (0..len).map(|_| words[rng.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
            })
            .collect()
    }

    fn cos(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
        crate::relation::cosine_similarity(a, b).unwrap()
    }

    #[test]
    fn identical_strings_match_at_one() {
        let l = vec![mock_embedding("ml")];
        let r = vec![mock_embedding("ml")];
        assert_eq!(nested_loop(&l, &r, 1.0), vec![(0, 0)]);
        assert_eq!(lsh_join(&l, &r, 1.0, 1), vec![(0, 0)]);
        assert_eq!(sorted_merge_join(&l, &r, 1.0, 1), vec![(0, 0)]);
        assert!(nested_loop(&l, &r, 1.01).is_empty());
        assert!(lsh_join(&l, &r, 1.01, 1).is_empty());
    }

    #[test]
    fn randomized_twenty_by_twenty() {
        for seed in 0..5 {
            let l: Vec<EmbeddingVector> = random_strings(seed, 20).iter().map(|s| mock_embedding(s)).collect();
            let r: Vec<EmbeddingVector> = random_strings(seed + 100, 20).iter().map(|s| mock_embedding(s)).collect();
            let oracle = nested_loop(&l, &r, 0.9);
            // brute force, independent of `verify`
            let mut brute = Vec::new();
            for i in 0..20 {
                for j in 0..20 {
                    if cos(&l[i], &r[j]) >= 0.9 {
                        brute.push((i, j));
                    }
                }
            }
            assert_eq!(oracle, brute);
            let hash = lsh_join(&l, &r, 0.9, 42);
            let merge = sorted_merge_join(&l, &r, 0.9, 42);
            assert!(hash.iter().all(|p| oracle.contains(p)));
            assert_eq!(merge, oracle);
        }
    }

    #[test]
    fn top_k_examples() {
        let rows: Vec<EmbeddingVector> = ["graph networks", "diffusion models", "attention"].iter().map(|s| mock_embedding(s)).collect();
        assert_eq!(top_k(&rows, &mock_embedding("diffusion"), 1), vec![1]);
        assert_eq!(top_k(&rows, &mock_embedding("x"), 5), vec![0, 1, 2]);
        assert!(top_k(&rows, &mock_embedding("x"), 0).is_empty());
    }

    proptest! {
        #[test]
        fn no_false_positives(seed in 0u64..1000, thr in 0.0f64..1.0) {
            let l: Vec<EmbeddingVector> = random_strings(seed, 8).iter().map(|s| mock_embedding(s)).collect();
            let r: Vec<EmbeddingVector> = random_strings(seed + 1, 8).iter().map(|s| mock_embedding(s)).collect();
            let oracle = nested_loop(&l, &r, thr);
            for (i, j) in lsh_join(&l, &r, thr, seed) {
                prop_assert!(cos(&l[i], &r[j]) >= thr - 1e-6);
                prop_assert!(oracle.contains(&(i, j)));
            }
            prop_assert_eq!(sorted_merge_join(&l, &r, thr, seed), oracle);
        }
    }
}
