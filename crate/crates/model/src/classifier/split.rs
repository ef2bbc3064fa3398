//! Stratified train / validation / test pixel split.

use kcdm_core::numerics::RngStream;
use kcdm_core::polsar::LabelMap;
use kcdm_core::{Error, Result};

/// Disjoint pixel index sets, each ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Draws `round(train_frac·n_c)` training and `round(val_frac·n_c)`
/// validation pixels from every class (at least one each); the remaining
/// labelled pixels form the test set.
pub fn stratified_split(labels: &LabelMap, train_frac: f64, val_frac: f64, rng: &mut RngStream) -> Result<Split> {
    if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("invalid split fractions {train_frac}/{val_frac}")));
    }
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for c in 0..labels.classes {
        let mut pixels = labels.pixels_of(c);
        let n = pixels.len();
        let n_train = ((train_frac * n as f64).round() as usize).max(1);
        let n_val = if val_frac > 0.0 { ((val_frac * n as f64).round() as usize).max(1) } else { 0 };
        if n < n_train + n_val {
            return Err(Error::InvalidArgument(format!("class {c} has {n} pixels, too few for a training split")));
        }
        rng.shuffle(&mut pixels);
        split.train.extend_from_slice(&pixels[..n_train]);
        split.val.extend_from_slice(&pixels[n_train..n_train + n_val]);
        split.test.extend_from_slice(&pixels[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}
