//! Synthetic datasets with a known best transform, shared by the
//! integration suites.

#![allow(dead_code)]

use featgraph::data::{calendar, ColumnValues, Dataset, FeatureColumn, Target};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// y = 1[sin(x) > 0] with x ~ U(0, 10000): alternating class bands far
/// narrower than the sampling density, so x alone is nearly useless.
pub fn planted_sine(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..10_000.0)).collect();
    let y: Vec<&str> = x
        .iter()
        .map(|v| if v.sin() > 0.0 { "pos" } else { "neg" })
        .collect();
    Dataset::new(
        vec![FeatureColumn::original("x", ColumnValues::Numeric(x))],
        Target::classes("y", &y),
    )
    .unwrap()
}

/// y = ln(x1²) + N(0, 0.1²) with x1 ~ U(−10, 10), plus an unrelated x2.
pub fn log_square_regression(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let x1: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = x1
        .iter()
        .map(|v| (v * v).ln() + noise.sample(&mut rng))
        .collect();
    Dataset::new(
        vec![
            FeatureColumn::original("x1", ColumnValues::Numeric(x1)),
            FeatureColumn::original("x2", ColumnValues::Numeric(x2)),
        ],
        Target::real("y", y),
    )
    .unwrap()
}

/// Which transform a planted classification dataset rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Label is the sign of sin(x); needs Sin.
    Periodic,
    /// Label is daytime vs night of a timestamp; needs TimeBinning.
    HourOfDay,
    /// Label is whether a category is common; needs KTermFrequency.
    Frequency,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Periodic, Family::HourOfDay, Family::Frequency];

    pub fn transform(self) -> &'static str {
        match self {
            Family::Periodic => "Sin",
            Family::HourOfDay => "TimeBinning",
            Family::Frequency => "KTermFrequency",
        }
    }
}

/// Two uniform noise columns plus one planted column of the family's type.
pub fn planted(family: Family, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut feats = vec![
        FeatureColumn::original("a", ColumnValues::Numeric(a)),
        FeatureColumn::original("b", ColumnValues::Numeric(b)),
    ];
    let labels: Vec<&str> = match family {
        Family::Periodic => {
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..10_000.0)).collect();
            let y = x
                .iter()
                .map(|v| if v.sin() > 0.0 { "pos" } else { "neg" })
                .collect();
            feats.push(FeatureColumn::original("x", ColumnValues::Numeric(x)));
            y
        }
        Family::HourOfDay => {
            // one year of timestamps starting 2011-01-01
            let t: Vec<i64> = (0..n)
                .map(|_| 1_293_840_000 + rng.gen_range(0..365 * 86_400))
                .collect();
            let y = t
                .iter()
                .map(|&s| {
                    let h = calendar::hour(s).unwrap();
                    if (8..20).contains(&h) {
                        "day"
                    } else {
                        "night"
                    }
                })
                .collect();
            feats.push(FeatureColumn::original(
                "when",
                ColumnValues::Datetime(t.into_iter().map(Some).collect()),
            ));
            y
        }
        Family::Frequency => {
            // 60% of rows share 30 common levels scattered among 1000
            // rare ones, so level order carries no signal
            let common: Vec<usize> = (0..30).map(|_| rng.gen_range(0..1000)).collect();
            let cats: Vec<String> = (0..n)
                .map(|_| {
                    let level = if rng.gen_bool(0.6) {
                        common[rng.gen_range(0..common.len())]
                    } else {
                        rng.gen_range(0..1000)
                    };
                    format!("c{level:03}")
                })
                .collect();
            let mut counts = std::collections::HashMap::new();
            for c in &cats {
                *counts.entry(c.clone()).or_insert(0usize) += 1;
            }
            let y = cats
                .iter()
                .map(|c| {
                    if counts[c] * 100 >= 2 * n {
                        "common"
                    } else {
                        "rare"
                    }
                })
                .collect();
            feats.push(FeatureColumn::original(
                "tag",
                ColumnValues::Categorical(cats.into_iter().map(Some).collect()),
            ));
            y
        }
    };
    Dataset::new(feats, Target::classes("y", &labels)).unwrap()
}
