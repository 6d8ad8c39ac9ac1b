use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::dataio::BACKGROUND;

/// Seed of the pre-shuffle that decides the order of tied scores.
pub const TIE_BREAK_SEED: u64 = 0;

/// Indices of `scores` from highest to lowest. Ties are ordered by a
/// fixed-seed shuffle of the input positions, so the result depends only on
/// `scores`.
pub fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(TIE_BREAK_SEED));
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Non-interpolated average precision: the mean, over positives, of the
/// precision at each positive's rank.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != positives.len() {
        return Err(EvalError::LengthMismatch {
            scores: scores.len(),
            labels: positives.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFinite(format!("score {i}")));
    }
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in rank_order(scores).iter().enumerate() {
        if positives[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

/// Mean AP over action classes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapResult {
    pub map: f64,
    /// AP per class index; background and skipped classes are `None`.
    pub per_class: Vec<Option<f64>>,
    /// Action classes without positives.
    pub skipped: Vec<usize>,
    pub samples: usize,
}

/// Pools `(distribution, label)` samples per action class and averages the
/// class APs. Classes with no positive sample are skipped with a warning.
pub fn map_over_samples<'a, I>(samples: I, classes: usize) -> Result<MapResult, EvalError>
where
    I: IntoIterator<Item = (&'a [f64], usize)>,
{
    let mut scores: Vec<Vec<f64>> = vec![Vec::new(); classes];
    let mut labels = Vec::new();
    for (dist, label) in samples {
        if dist.len() != classes {
            return Err(EvalError::Classes {
                expected: classes,
                found: dist.len(),
            });
        }
        if label >= classes {
            return Err(EvalError::LabelOutOfRange { label, classes });
        }
        for (c, s) in scores.iter_mut().enumerate() {
            s.push(dist[c]);
        }
        labels.push(label);
    }
    let mut per_class = vec![None; classes];
    let mut skipped = Vec::new();
    for c in (0..classes).filter(|&c| c != BACKGROUND) {
        let pos: Vec<bool> = labels.iter().map(|&l| l == c).collect();
        match average_precision(&scores[c], &pos) {
            Ok(ap) => per_class[c] = Some(ap),
            Err(EvalError::NoPositives) => skipped.push(c),
            Err(e) => return Err(e),
        }
    }
    if !skipped.is_empty() {
        log::warn!("classes without positives skipped: {skipped:?}");
    }
    let aps: Vec<f64> = per_class.iter().flatten().copied().collect();
    if aps.is_empty() {
        return Err(EvalError::NoPositives);
    }
    Ok(MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        per_class,
        skipped,
        samples: labels.len(),
    })
}
