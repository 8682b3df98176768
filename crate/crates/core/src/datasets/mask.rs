use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetBundle;
use crate::error::{Error, Result};

/// `ceil(ratio * n)` with a tolerance for ratios like 0.1 that are not
/// exactly representable.
fn observed_count(ratio: f64, n: usize) -> usize {
    let raw = ratio * n as f64;
    let count = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    count.clamp(1, n)
}

/// Marks `ceil(labeled_ratio * N)` confound labels as observed.
///
/// When the budget allows (`labeled_ratio * N >= G`) one sample per class is
/// drawn first so that every class stays represented; the remainder is drawn
/// uniformly from the rest.
pub fn mask_confound_labels(
    bundle: &DatasetBundle,
    labeled_ratio: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    if !(labeled_ratio > 0.0 && labeled_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "labeled_ratio must lie in (0, 1], got {labeled_ratio}"
        )));
    }
    if !bundle.confound.is_fully_observed() {
        return Err(Error::invalid(
            "confound labels are already partially masked",
        ));
    }
    let (values, categories) = match &bundle.confound.values {
        super::ConfoundValues::Discrete { values, categories } => (values, *categories),
        super::ConfoundValues::Continuous(_) => {
            return Err(Error::invalid("masking requires a discrete confound"))
        }
    };
    let n = bundle.n();
    let budget = observed_count(labeled_ratio, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; n];

    if budget == n {
        mask.fill(true);
    } else {
        let mut chosen = 0;
        if labeled_ratio * n as f64 >= categories as f64 {
            let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); categories];
            for (i, &v) in values.iter().enumerate() {
                by_class[v as usize].push(i);
            }
            for members in &by_class {
                if let Some(&i) = members.as_slice().choose(&mut rng) {
                    mask[i] = true;
                    chosen += 1;
                }
            }
        }
        let mut rest: Vec<usize> = (0..n).filter(|&i| !mask[i]).collect();
        rest.shuffle(&mut rng);
        for &i in rest.iter().take(budget.saturating_sub(chosen)) {
            mask[i] = true;
        }
    }

    let mut out = bundle.clone();
    out.confound.mask = Some(mask);
    Ok(out)
}
