use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, NodeId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplits {
    pub train: Vec<NodeId>,
    pub val: Vec<NodeId>,
    pub test: Vec<NodeId>,
}

/// Splits `counts.len()` items by ratio: floor of each share, then the
/// remainder goes to the largest fractional parts (earlier split wins ties).
fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact = ratios.map(|r| r * n as f64);
    // The epsilon keeps 0.1 * 80 = 8.000000000000002 style products on the right side.
    let mut counts = exact.map(|x| (x + 1e-9).floor() as usize);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - counts[a] as f64;
        let fb = exact[b] - counts[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut remaining = n - counts.iter().sum::<usize>().min(n);
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    // Every split gets at least one member of the class.
    for i in 0..3 {
        if counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| (counts[j], std::cmp::Reverse(j))).unwrap();
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}

/// Stratified, seeded train/val/test split of labelled nodes.
pub fn split_dataset(
    labeled: &[(NodeId, Label)],
    ratios: SplitRatios,
    seed: u64,
) -> Result<DatasetSplits> {
    let r = [ratios.train, ratios.val, ratios.test];
    if r.iter().any(|&x| x.is_nan() || x <= 0.0) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "split ratios must be positive and sum to 1, got {r:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DatasetSplits::default();
    for class in [Label::Benign, Label::Fraud] {
        let mut members: Vec<NodeId> = labeled
            .iter()
            .filter(|(_, l)| *l == class)
            .map(|(n, _)| *n)
            .collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(Error::Data(format!(
                "class {} has {} member(s); at least 3 are needed to stratify",
                class.as_u8(),
                members.len()
            )));
        }
        members.sort();
        members.dedup();
        members.shuffle(&mut rng);
        let [a, b, _] = allocate(members.len(), r);
        out.train.extend_from_slice(&members[..a]);
        out.val.extend_from_slice(&members[a..a + b]);
        out.test.extend_from_slice(&members[a + b..]);
    }
    out.train.sort();
    out.val.sort();
    out.test.sort();
    Ok(out)
}
