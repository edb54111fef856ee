use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{rng_for, streams};
use crate::taxonomy::Emotion;

pub const MIN_PER_CLASS: usize = 3;

/// Indices into the corpus, each list in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn validate_fractions(fractions: [f64; 3]) -> Result<()> {
    if fractions.iter().any(|f| !(f.is_finite() && *f >= 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

/// Largest-remainder apportionment of `n` items by `weights` (ties go to the
/// earlier slot).
pub fn largest_remainder(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-emotion proportional split with seeded shuffling inside each class.
pub fn stratified_split(emotions: &[Emotion], fractions: [f64; 3], seed: u64) -> Result<SplitIndices> {
    validate_fractions(fractions)?;
    let mut out = SplitIndices { train: vec![], val: vec![], test: vec![] };
    for &e in Emotion::ALL.iter() {
        let mut members: Vec<usize> = (0..emotions.len()).filter(|&i| emotions[i] == e).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < MIN_PER_CLASS {
            return Err(Error::Split(format!(
                "emotion '{e}' has {} samples; at least {MIN_PER_CLASS} are required",
                members.len()
            )));
        }
        members.shuffle(&mut rng_for(seed, streams::SPLIT, &[e.index() as u64]));
        let counts = largest_remainder(members.len(), &fractions);
        let (tr, rest) = members.split_at(counts[0]);
        let (va, te) = rest.split_at(counts[1]);
        out.train.extend_from_slice(tr);
        out.val.extend_from_slice(va);
        out.test.extend_from_slice(te);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FR: [f64; 3] = [0.7, 0.15, 0.15];

    fn corpus(counts: &[usize]) -> Vec<Emotion> {
        counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(Emotion::ALL[i], c)).collect()
    }

    #[test]
    fn single_class_exact() {
        let s = stratified_split(&corpus(&[100]), FR, 42).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
    }

    #[test]
    fn seeded_and_disjoint() {
        let c = corpus(&[40, 31, 25, 13, 9, 7, 5, 3]);
        let a = stratified_split(&c, FR, 7).unwrap();
        assert_eq!(a, stratified_split(&c, FR, 7).unwrap());
        assert_ne!(a, stratified_split(&c, FR, 8).unwrap());
        let mut all: Vec<usize> = a.train.iter().chain(&a.val).chain(&a.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..c.len()).collect::<Vec<_>>());
    }

    #[test]
    fn class_histograms_are_proportional() {
        // corpus class shares, 1000 clips in emotion index order
        let shares = [2340.0, 3872.0, 15027.0, 9403.0, 5319.0, 1788.0, 1485.0, 3319.0];
        let counts = largest_remainder(1000, &shares);
        assert_eq!(counts.iter().sum::<usize>(), 1000);
        let c = corpus(&counts);
        let s = stratified_split(&c, FR, 42).unwrap();
        for (k, part) in [&s.train, &s.val, &s.test].into_iter().enumerate() {
            for (ci, &n) in counts.iter().enumerate() {
                let got = part.iter().filter(|&&i| c[i].index() == ci).count() as f64;
                assert!((got - n as f64 * FR[k]).abs() <= 1.0, "split {k} class {ci}: {got}");
            }
        }
    }

    #[test]
    fn tiny_class_rejected() {
        assert!(matches!(stratified_split(&corpus(&[10, 2]), FR, 1), Err(Error::Split(_))));
    }

    #[test]
    fn bad_fractions_rejected() {
        assert!(stratified_split(&corpus(&[10]), [0.5, 0.5, 0.5], 1).is_err());
    }
}
