use super::TabularData;
use crate::error::{LocusError, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Fractions of the shuffled rows assigned to train / calibration /
/// validation / test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub calibration: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.4,
            calibration: 0.4,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn as_array(&self) -> [f64; 4] {
        [self.train, self.calibration, self.validation, self.test]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|f| !(*f > 0.0) || !f.is_finite()) {
            return Err(LocusError::invalid(format!("split fractions must be positive, got {a:?}")));
        }
        let sum: f64 = a.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(LocusError::invalid(format!("split fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

/// Row indices of each part, in shuffled order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub cal_d1: Vec<usize>,
    pub cal_d2: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SplitDataset {
    pub train: TabularData,
    pub cal_d1: TabularData,
    pub cal_d2: TabularData,
    pub validation: TabularData,
    pub test: TabularData,
    pub indices: SplitIndices,
    pub seed: u64,
    pub fractions: SplitFractions,
    pub cal_d1_fraction: f64,
}

/// Part sizes: calibration, validation and test get `floor(n * f)` rows and
/// train absorbs the remainder; the calibration block is split into
/// `floor(n_cal * cal_d1_fraction)` rows for D1 and the rest for D2.
pub fn split_sizes(n: usize, fractions: &SplitFractions, cal_d1_fraction: f64) -> Result<[usize; 5]> {
    fractions.validate()?;
    if !(cal_d1_fraction > 0.0 && cal_d1_fraction < 1.0) {
        return Err(LocusError::invalid(format!("cal_d1_fraction {cal_d1_fraction} outside (0, 1)")));
    }
    let nf = n as f64;
    let cal = (nf * fractions.calibration).floor() as usize;
    let val = (nf * fractions.validation).floor() as usize;
    let test = (nf * fractions.test).floor() as usize;
    let train = n.saturating_sub(cal + val + test);
    let d1 = (cal as f64 * cal_d1_fraction).floor() as usize;
    let d2 = cal - d1;
    let sizes = [train, d1, d2, val, test];
    for (size, name) in sizes.iter().zip(["train", "cal_d1", "cal_d2", "validation", "test"]) {
        if *size == 0 {
            return Err(LocusError::EmptySplit(name.into()));
        }
    }
    Ok(sizes)
}

pub fn make_splits(
    data: &TabularData,
    fractions: SplitFractions,
    cal_d1_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    let n = data.n_rows();
    let [n_train, n_d1, n_d2, n_val, _] = split_sizes(n, &fractions, cal_d1_fraction)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut rest = order.as_slice();
    let mut take = |k: usize| {
        let (head, tail) = rest.split_at(k);
        rest = tail;
        head.to_vec()
    };
    let train = take(n_train);
    let cal_d1 = take(n_d1);
    let cal_d2 = take(n_d2);
    let validation = take(n_val);
    let test = rest.to_vec();
    let indices = SplitIndices {
        train,
        cal_d1,
        cal_d2,
        validation,
        test,
    };
    Ok(SplitDataset {
        train: data.select(&indices.train),
        cal_d1: data.select(&indices.cal_d1),
        cal_d2: data.select(&indices.cal_d2),
        validation: data.select(&indices.validation),
        test: data.select(&indices.test),
        indices,
        seed,
        fractions,
        cal_d1_fraction,
    })
}
