use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tensor::rng;

use super::{Sample, PAD_TOKEN};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Label = generating class.
    Classification,
    /// Same sequences, consumed by a next-token head; label still records
    /// the generating class.
    NextToken,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthProfile {
    /// 12 to 20 tokens.
    Short,
    /// 56 to 64 tokens.
    Long,
}

impl LengthProfile {
    pub fn range(self) -> std::ops::RangeInclusive<usize> {
        match self {
            Self::Short => 12..=20,
            Self::Long => 56..=64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub kind: TaskKind,
    pub n_classes: usize,
    pub length_profile: LengthProfile,
    /// 0 gives disjoint class vocabularies, 1 identical class distributions.
    pub difficulty: f64,
    pub size: usize,
    pub vocab_size: usize,
    /// Extra unique uniformly random sequences appended to the pool.
    #[serde(default)]
    pub canaries: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            kind: TaskKind::Classification,
            n_classes: 2,
            length_profile: LengthProfile::Short,
            difficulty: 0.5,
            size: 768,
            vocab_size: 256,
            canaries: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.difficulty) {
            return Err(Error::Config(format!("difficulty {} outside [0, 1]", self.difficulty)));
        }
        if self.size == 0 {
            return Err(Error::Config("dataset size must be at least 1".into()));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!("n_classes {} < 2", self.n_classes)));
        }
        if self.vocab_size < self.n_classes + 1 {
            return Err(Error::Config(format!(
                "vocab_size {} leaves no private tokens for {} classes",
                self.vocab_size, self.n_classes
            )));
        }
        Ok(())
    }

    /// Token distribution of class `c` over the whole vocabulary.
    ///
    /// Non-pad tokens are dealt round-robin into one private set per
    /// class; the class draws from its private set with probability
    /// `1 - difficulty` and from all non-pad tokens otherwise.
    pub fn class_distribution(&self, c: usize) -> Vec<f64> {
        let v = self.vocab_size;
        let shared = self.difficulty / (v - 1) as f64;
        let private: Vec<usize> = (1..v).filter(|t| (t - 1) % self.n_classes == c).collect();
        let own = (1.0 - self.difficulty) / private.len() as f64;
        let mut p = vec![shared; v];
        p[PAD_TOKEN as usize] = 0.0;
        for t in private {
            p[t] += own;
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub samples: Vec<Sample>,
    /// Ids of injected canary samples.
    pub canary_ids: Vec<u64>,
}

fn draw(rng: &mut rng::StreamRng, cdf: &[f64]) -> u32 {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u32
}

fn cdf(p: &[f64]) -> Vec<f64> {
    p.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// Class-conditional multinomial sequences with balanced round-robin
/// labels. Pure function of `(spec, seed)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticDataset> {
    spec.validate()?;
    let mut rng = rng::stream(seed, "data");
    let cdfs: Vec<Vec<f64>> = (0..spec.n_classes).map(|c| cdf(&spec.class_distribution(c))).collect();
    let lengths = spec.length_profile.range();
    let mut samples = Vec::with_capacity(spec.size + spec.canaries);
    for id in 0..spec.size {
        let label = id % spec.n_classes;
        let len = rng.random_range(lengths.clone());
        let tokens = (0..len).map(|_| draw(&mut rng, &cdfs[label])).collect();
        samples.push(Sample::new(id as u64, tokens, label));
    }

    let mut seen: HashSet<Vec<u32>> = samples.iter().map(|s| s.tokens.clone()).collect();
    let mut canary_ids = Vec::with_capacity(spec.canaries);
    while canary_ids.len() < spec.canaries {
        let len = rng.random_range(lengths.clone());
        let tokens: Vec<u32> = (0..len).map(|_| rng.random_range(1..spec.vocab_size as u32)).collect();
        let label = rng.random_range(0..spec.n_classes);
        if seen.insert(tokens.clone()) {
            let id = samples.len() as u64;
            canary_ids.push(id);
            samples.push(Sample::new(id, tokens, label));
        }
    }
    Ok(SyntheticDataset { samples, canary_ids })
}

/// Mean over class pairs of `sum_t min(p_a(t), p_b(t))` for the empirical
/// per-class unigram distributions.
pub fn unigram_overlap(samples: &[Sample], n_classes: usize, vocab_size: usize) -> f64 {
    let mut counts = vec![vec![0.0; vocab_size]; n_classes];
    for s in samples {
        for &t in s.content() {
            counts[s.label][t as usize] += 1.0;
        }
    }
    for c in &mut counts {
        let total: f64 = c.iter().sum();
        if total > 0.0 {
            c.iter_mut().for_each(|x| *x /= total);
        }
    }
    let mut sum = 0.0;
    let mut pairs = 0.0;
    for a in 0..n_classes {
        for b in a + 1..n_classes {
            sum += counts[a].iter().zip(&counts[b]).map(|(x, y)| x.min(*y)).sum::<f64>();
            pairs += 1.0;
        }
    }
    sum / pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(difficulty: f64) -> SyntheticSpec {
        SyntheticSpec {
            difficulty,
            size: 200,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn class_distributions_sum_to_one() {
        for d in [0.0, 0.3, 1.0] {
            let s = spec(d);
            for c in 0..2 {
                let p = s.class_distribution(c);
                assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert_eq!(p[0], 0.0);
            }
        }
    }

    #[test]
    fn difficulty_zero_is_separable_by_unigram_counts() {
        let data = generate_synthetic(&spec(0.0), 5).unwrap();
        for s in &data.samples {
            assert!(s.tokens.iter().all(|&t| (t as usize - 1) % 2 == s.label));
        }
        assert_eq!(unigram_overlap(&data.samples, 2, 256), 0.0);
    }

    #[test]
    fn rejects_bad_difficulty_and_size() {
        assert!(generate_synthetic(&spec(1.5), 0).is_err());
        assert!(generate_synthetic(&SyntheticSpec { size: 0, ..spec(0.5) }, 0).is_err());
    }

    #[test]
    fn lengths_follow_profile() {
        let long = SyntheticSpec { length_profile: LengthProfile::Long, ..spec(0.5) };
        let data = generate_synthetic(&long, 1).unwrap();
        assert!(data.samples.iter().all(|s| (56..=64).contains(&s.tokens.len())));
    }

    #[test]
    fn canaries_are_unique_and_recorded() {
        let s = SyntheticSpec { canaries: 10, ..spec(0.5) };
        let data = generate_synthetic(&s, 2).unwrap();
        assert_eq!(data.samples.len(), 210);
        assert_eq!(data.canary_ids, (200..210).collect::<Vec<u64>>());
        let distinct: HashSet<_> = data.samples.iter().map(|s| &s.tokens).collect();
        assert_eq!(distinct.len(), 210);
    }
}
