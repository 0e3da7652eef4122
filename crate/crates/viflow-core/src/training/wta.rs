//! Winner-take-all selection over hypothesis reconstructions.

use crate::error::{Error, Result};
use crate::geometry::Image;

/// Result of scoring every hypothesis against the source frame.
#[derive(Debug, Clone, PartialEq)]
pub struct WtaOutcome {
    /// Index of the lowest-loss hypothesis; ties go to the lowest index.
    pub winner: usize,
    /// Squared-Euclidean loss of each hypothesis, in input order.
    pub losses: Vec<f64>,
    /// The winner's loss.
    pub winning_loss: f64,
}

/// Scores each reconstruction by its squared-Euclidean distance to `source`
/// and picks the minimum.
pub fn wta_select(reconstructions: &[Image], source: &Image) -> Result<WtaOutcome> {
    if reconstructions.is_empty() {
        return Err(Error::Contract(
            "winner selection needs at least one reconstruction".to_string(),
        ));
    }
    let mut losses = Vec::with_capacity(reconstructions.len());
    for recon in reconstructions {
        if recon.height() != source.height() || recon.width() != source.width() {
            return Err(Error::Shape(format!(
                "reconstruction is {}x{}, source is {}x{}",
                recon.height(),
                recon.width(),
                source.height(),
                source.width()
            )));
        }
        let loss: f64 = recon
            .data()
            .iter()
            .zip(source.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        losses.push(loss);
    }
    let winner = argmin(&losses);
    let winning_loss = losses[winner];
    Ok(WtaOutcome {
        winner,
        losses,
        winning_loss,
    })
}

/// Index of the strictly smallest entry; earlier entries win ties.
pub(crate) fn argmin(losses: &[f64]) -> usize {
    let mut winner = 0;
    for (i, &loss) in losses.iter().enumerate().skip(1) {
        if loss < losses[winner] {
            winner = i;
        }
    }
    winner
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(height: usize, width: usize, data: &[f64]) -> Image {
        Image::new(height, width, data.to_vec()).unwrap()
    }

    fn random_image(rng: &mut ChaCha8Rng, side: usize) -> Image {
        Image::from_fn(side, side, |_, _| rng.random_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn a_single_hypothesis_wins_with_its_own_loss() {
        let source = image(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let recon = image(2, 2, &[1.0, 0.5, 0.0, 0.0]);
        let outcome = wta_select(&[recon], &source).unwrap();
        assert_eq!(outcome.winner, 0);
        assert_eq!(outcome.winning_loss, 1.25);
        assert_eq!(outcome.losses, vec![1.25]);
    }

    #[test]
    fn the_lower_loss_hypothesis_wins() {
        let source = image(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        let far = image(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        let near = image(2, 2, &[1.0, 0.5, 0.5, 0.0]);
        let outcome = wta_select(&[far, near], &source).unwrap();
        assert_eq!(outcome.losses, vec![3.0, 1.5]);
        assert_eq!(outcome.winner, 1);
        assert_eq!(outcome.winning_loss, 1.5);
    }

    #[test]
    fn an_exact_tie_goes_to_the_lowest_index() {
        let source = image(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        let a = image(2, 2, &[0.7, 0.5, 0.5, 0.5]);
        let b = a.clone();
        let outcome = wta_select(&[a, b], &source).unwrap();
        assert_eq!(outcome.winner, 0);
    }

    #[test]
    fn permuting_hypotheses_permutes_the_winner_and_keeps_the_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..20 {
            let source = random_image(&mut rng, 5);
            let recons: Vec<Image> = (0..4).map(|_| random_image(&mut rng, 5)).collect();
            let forward = wta_select(&recons, &source).unwrap();
            let reversed_set: Vec<Image> = recons.iter().rev().cloned().collect();
            let reversed = wta_select(&reversed_set, &source).unwrap();
            assert_eq!(reversed.winner, recons.len() - 1 - forward.winner);
            assert_eq!(reversed.winning_loss, forward.winning_loss);
            let mut expected = forward.losses.clone();
            expected.reverse();
            assert_eq!(reversed.losses, expected);
        }
    }

    #[test]
    fn losses_are_non_negative_and_zero_only_for_an_exact_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let source = random_image(&mut rng, 6);
        let off = random_image(&mut rng, 6);
        let outcome = wta_select(&[source.clone(), off], &source).unwrap();
        assert!(outcome.losses.iter().all(|&l| l >= 0.0));
        assert_eq!(outcome.winner, 0);
        assert_eq!(outcome.winning_loss, 0.0);
        assert!(outcome.losses[1] > 0.0);
    }

    #[test]
    fn an_empty_hypothesis_list_is_rejected() {
        let source = image(2, 2, &[0.0; 4]);
        assert!(matches!(
            wta_select(&[], &source),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn a_shape_mismatch_is_rejected() {
        let source = image(2, 2, &[0.0; 4]);
        let recon = image(2, 3, &[0.0; 6]);
        assert!(matches!(
            wta_select(&[recon], &source),
            Err(Error::Shape(_))
        ));
    }
}
