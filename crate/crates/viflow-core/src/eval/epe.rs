//! Endpoint-error statistics over flow fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FlowField;

/// Summary of per-pixel endpoint error, in pixels.
///
/// The median of an even-sized sample is the lower of the two middle
/// values, and the standard deviation is the population form (divide by
/// the count, not count minus one).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpeStats {
    /// Mean endpoint error.
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    /// Lower-middle median.
    pub median: f64,
    /// Number of pixels that entered the statistics.
    pub count: usize,
}

/// Appends the per-pixel errors of one prediction/reference pair.
fn collect_errors(pred: &FlowField, gt: &FlowField, errors: &mut Vec<f64>) -> Result<()> {
    if pred.height() != gt.height() || pred.width() != gt.width() {
        return Err(Error::Shape(format!(
            "flow fields are {}x{} vs {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    for i in 0..pred.height() * pred.width() {
        if !pred.valid()[i] || !gt.valid()[i] {
            continue;
        }
        let du = pred.vectors()[2 * i] - gt.vectors()[2 * i];
        let dv = pred.vectors()[2 * i + 1] - gt.vectors()[2 * i + 1];
        errors.push(du.hypot(dv));
    }
    Ok(())
}

fn stats_from_errors(mut errors: Vec<f64>) -> Result<EpeStats> {
    if errors.is_empty() {
        return Err(Error::Contract(
            "no pixel is valid in both flow fields".into(),
        ));
    }
    // Sorting before the reductions makes every statistic, not just the
    // median, independent of pixel order down to the last bit.
    errors.sort_by(f64::total_cmp);
    let count = errors.len();
    let mean = errors.iter().sum::<f64>() / count as f64;
    let variance = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / count as f64;
    let median = errors[(count - 1) / 2];
    Ok(EpeStats {
        mean,
        std_dev: variance.sqrt(),
        median,
        count,
    })
}

/// Per-pixel endpoint error between a predicted and a reference flow.
///
/// A pixel counts only when both fields mark it valid; the error there is
/// the Euclidean norm of the vector difference. Fails when the fields
/// disagree on extent or no pixel is valid in both.
pub fn epe_stats(pred: &FlowField, gt: &FlowField) -> Result<EpeStats> {
    epe_stats_pooled([(pred, gt)])
}

/// Endpoint error pooled over several prediction/reference pairs, as if
/// every valid pixel came from one large field. Pairs may differ in extent
/// from one another; within a pair the fields must agree.
pub fn epe_stats_pooled<'a, I>(pairs: I) -> Result<EpeStats>
where
    I: IntoIterator<Item = (&'a FlowField, &'a FlowField)>,
{
    let mut errors = Vec::new();
    for (pred, gt) in pairs {
        collect_errors(pred, gt, &mut errors)?;
    }
    stats_from_errors(errors)
}

/// Endpoint error of the all-zero flow against `gt`: the score any method
/// must beat to be doing better than predicting no motion at all.
pub fn identity_baseline(gt: &FlowField) -> Result<EpeStats> {
    identity_baseline_pooled([gt])
}

/// [`identity_baseline`] pooled over several reference fields.
pub fn identity_baseline_pooled<'a, I>(gts: I) -> Result<EpeStats>
where
    I: IntoIterator<Item = &'a FlowField>,
{
    let mut errors = Vec::new();
    for gt in gts {
        let zero = FlowField::zeros(gt.height(), gt.width())?;
        collect_errors(&zero, gt, &mut errors)?;
    }
    stats_from_errors(errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_flow(height: usize, width: usize, seed: u64) -> FlowField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vectors: Vec<f64> = (0..height * width * 2)
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let valid: Vec<bool> = (0..height * width).map(|_| rng.random_range(0.0..1.0) < 0.8).collect();
        FlowField::new(height, width, vectors, valid).unwrap()
    }

    #[test]
    fn identical_fields_score_zero() {
        let flow = random_flow(6, 5, 1);
        let stats = epe_stats(&flow, &flow).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert_eq!(stats.std_dev, 0.0);
        assert_eq!(stats.median, 0.0);
        assert_eq!(stats.count, flow.valid_count());
    }

    #[test]
    fn constant_offset_three_four_scores_five() {
        let gt = random_flow(4, 4, 2);
        let shifted: Vec<f64> = gt
            .vectors()
            .chunks(2)
            .flat_map(|uv| [uv[0] + 3.0, uv[1] + 4.0])
            .collect();
        let pred = FlowField::new(4, 4, shifted, gt.valid().to_vec()).unwrap();
        let stats = epe_stats(&pred, &gt).unwrap();
        assert!((stats.mean - 5.0).abs() < 1e-12);
        assert!(stats.std_dev < 1e-12);
        assert!((stats.median - 5.0).abs() < 1e-12);
    }

    #[test]
    fn statistics_match_a_brute_force_oracle() {
        let pred = random_flow(8, 7, 3);
        let gt = random_flow(8, 7, 4);
        let stats = epe_stats(&pred, &gt).unwrap();

        let mut errors = Vec::new();
        for r in 0..8 {
            for c in 0..7 {
                let (Some((pu, pv)), Some((gu, gv))) = (pred.at(r, c), gt.at(r, c)) else {
                    continue;
                };
                errors.push(((pu - gu).powi(2) + (pv - gv).powi(2)).sqrt());
            }
        }
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
        errors.sort_by(f64::total_cmp);
        let median = errors[(errors.len() - 1) / 2];

        assert_eq!(stats.count, errors.len());
        assert!((stats.mean - mean).abs() < 1e-12);
        assert!((stats.std_dev - var.sqrt()).abs() < 1e-12);
        assert_eq!(stats.median, median);
    }

    #[test]
    fn even_count_takes_the_lower_middle() {
        // Errors 1, 2, 3, 4: the lower middle is 2.
        let vectors = vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 4.0, 0.0];
        let pred = FlowField::dense(2, 2, vectors).unwrap();
        let gt = FlowField::zeros(2, 2).unwrap();
        assert_eq!(epe_stats(&pred, &gt).unwrap().median, 2.0);
    }

    #[test]
    fn pixel_order_permutation_preserves_statistics() {
        let pred = random_flow(5, 6, 5);
        let gt = random_flow(5, 6, 6);
        let stats = epe_stats(&pred, &gt).unwrap();

        let permute_flow = |f: &FlowField| {
            let n = f.height() * f.width();
            let mut vectors = Vec::with_capacity(2 * n);
            let mut valid = Vec::with_capacity(n);
            for i in (0..n).rev() {
                vectors.push(f.vectors()[2 * i]);
                vectors.push(f.vectors()[2 * i + 1]);
                valid.push(f.valid()[i]);
            }
            FlowField::new(f.height(), f.width(), vectors, valid).unwrap()
        };
        let reversed = epe_stats(&permute_flow(&pred), &permute_flow(&gt)).unwrap();
        assert_eq!(stats, reversed);
    }

    #[test]
    fn disjoint_validity_is_a_contract_error() {
        let pred = FlowField::new(2, 2, vec![0.0; 8], vec![true, true, false, false]).unwrap();
        let gt = FlowField::new(2, 2, vec![0.0; 8], vec![false, false, true, true]).unwrap();
        assert!(matches!(epe_stats(&pred, &gt), Err(Error::Contract(_))));
    }

    #[test]
    fn mismatched_extents_are_rejected() {
        let a = FlowField::zeros(2, 2).unwrap();
        let b = FlowField::zeros(2, 3).unwrap();
        assert!(matches!(epe_stats(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn identity_baseline_matches_an_explicit_zero_field() {
        let gt = random_flow(6, 6, 7);
        let explicit = epe_stats(&FlowField::zeros(6, 6).unwrap(), &gt).unwrap();
        assert_eq!(identity_baseline(&gt).unwrap(), explicit);
    }

    #[test]
    fn identity_baseline_of_zero_flow_is_zero() {
        let gt = FlowField::zeros(3, 3).unwrap();
        let stats = identity_baseline(&gt).unwrap();
        assert_eq!((stats.mean, stats.std_dev, stats.median), (0.0, 0.0, 0.0));
    }

    #[test]
    fn pooled_statistics_equal_one_concatenated_field() {
        let pred_a = random_flow(3, 8, 8);
        let gt_a = random_flow(3, 8, 9);
        let pred_b = random_flow(2, 8, 10);
        let gt_b = random_flow(2, 8, 11);

        let concat = |top: &FlowField, bottom: &FlowField| {
            let mut vectors = top.vectors().to_vec();
            vectors.extend_from_slice(bottom.vectors());
            let mut valid = top.valid().to_vec();
            valid.extend_from_slice(bottom.valid());
            FlowField::new(top.height() + bottom.height(), 8, vectors, valid).unwrap()
        };
        let pooled = epe_stats_pooled([(&pred_a, &gt_a), (&pred_b, &gt_b)]).unwrap();
        let whole = epe_stats(&concat(&pred_a, &pred_b), &concat(&gt_a, &gt_b)).unwrap();
        assert_eq!(pooled, whole);
    }

    #[test]
    fn pooled_pairs_may_differ_in_extent() {
        let gt_a = random_flow(4, 4, 12);
        let gt_b = random_flow(6, 3, 13);
        let pooled = identity_baseline_pooled([&gt_a, &gt_b]).unwrap();
        assert_eq!(
            pooled.count,
            gt_a.valid_count() + gt_b.valid_count()
        );
    }

    #[test]
    fn pooled_baseline_matches_per_field_error_average() {
        let gt_a = random_flow(4, 5, 14);
        let gt_b = random_flow(4, 5, 15);
        let a = identity_baseline(&gt_a).unwrap();
        let b = identity_baseline(&gt_b).unwrap();
        let pooled = identity_baseline_pooled([&gt_a, &gt_b]).unwrap();
        let expected =
            (a.mean * a.count as f64 + b.mean * b.count as f64) / (a.count + b.count) as f64;
        assert!((pooled.mean - expected).abs() < 1e-12);
    }

    #[test]
    fn stats_round_trip_through_json() {
        let gt = random_flow(5, 5, 16);
        let stats = identity_baseline(&gt).unwrap();
        let text = serde_json::to_string(&stats).unwrap();
        let back: EpeStats = serde_json::from_str(&text).unwrap();
        assert_eq!(stats, back);
    }

    #[test]
    fn identity_baseline_of_a_unit_field_is_one() {
        let mut vectors = Vec::new();
        for _ in 0..9 {
            vectors.extend([1.0, 0.0]);
        }
        let gt = FlowField::dense(3, 3, vectors).unwrap();
        assert_eq!(identity_baseline(&gt).unwrap().mean, 1.0);
    }
}
