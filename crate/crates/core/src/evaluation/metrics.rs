use crate::error::{LocusError, Result};
use crate::flagging::Threshold;
use crate::quantile;
use serde::{Deserialize, Serialize};

/// Empirical test-split metrics of one scoring method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    /// Acceptance rate.
    pub p_a: f64,
    /// Marginal tail rate `P(Z > tau)`.
    pub p_big_z: f64,
    /// Conditional tail rate among accepted; `None` when nothing is accepted.
    pub p_big_z_given_a: Option<f64>,
    /// Marginal coverage `P(Z <= U_alpha(X))`; `None` for baseline scores that
    /// are not loss bounds.
    pub p_conf: Option<f64>,
    pub n: usize,
    pub n_accepted: usize,
}

impl RunMetrics {
    /// `P(Z > tau, accepted)`.
    pub fn joint_tail(&self) -> f64 {
        self.p_big_z_given_a.map_or(0.0, |q| q * self.p_a)
    }
}

/// Metrics for an upper loss bound: acceptance is `U <= lambda` and the
/// coverage check is `Z <= U`.
pub fn compute_metrics(z: &[f64], u: &[f64], tau: f64, lambda: Threshold) -> Result<RunMetrics> {
    let mut m = score_metrics(z, u, tau, lambda)?;
    let covered = z.iter().zip(u).filter(|(z, u)| z <= u).count();
    m.p_conf = Some(covered as f64 / z.len() as f64);
    Ok(m)
}

/// Metrics for a generic flagging score (larger = riskier) without the
/// coverage check.
pub fn score_metrics(z: &[f64], scores: &[f64], tau: f64, lambda: Threshold) -> Result<RunMetrics> {
    if z.len() != scores.len() {
        return Err(LocusError::LengthMismatch(format!(
            "{} losses but {} scores",
            z.len(),
            scores.len()
        )));
    }
    if z.is_empty() {
        return Err(LocusError::invalid("metrics need at least one point"));
    }
    let n = z.len();
    let mut n_acc = 0usize;
    let mut n_big = 0usize;
    let mut n_joint = 0usize;
    for (&zi, &si) in z.iter().zip(scores) {
        let acc = lambda.accepts(si);
        let big = zi > tau;
        n_acc += usize::from(acc);
        n_big += usize::from(big);
        n_joint += usize::from(acc && big);
    }
    let nf = n as f64;
    Ok(RunMetrics {
        p_a: n_acc as f64 / nf,
        p_big_z: n_big as f64 / nf,
        p_big_z_given_a: (n_acc > 0).then(|| n_joint as f64 / n_acc as f64),
        p_conf: None,
        n,
        n_accepted: n_acc,
    })
}

/// Threshold accepting a `target_rate` fraction of the validation scores:
/// their empirical `target_rate`-quantile.
pub fn matched_acceptance_threshold(scores: &[f64], target_rate: f64) -> Result<f64> {
    if !(target_rate > 0.0 && target_rate < 1.0) {
        return Err(LocusError::invalid(format!(
            "target acceptance rate {target_rate} must lie in (0, 1)"
        )));
    }
    quantile::quantile(scores, target_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_example() {
        let m = compute_metrics(&[1.0, 5.0], &[2.0, 2.0], 3.0, Threshold::Value(3.0)).unwrap();
        assert_eq!(m.p_a, 1.0);
        assert_eq!(m.p_big_z, 0.5);
        assert_eq!(m.p_big_z_given_a, Some(0.5));
        assert_eq!(m.p_conf, Some(0.5));
    }

    #[test]
    fn nothing_accepted_is_undefined() {
        let m = compute_metrics(&[1.0, 5.0], &[2.0, 2.0], 3.0, Threshold::Value(1.0)).unwrap();
        assert_eq!(m.p_a, 0.0);
        assert_eq!(m.p_big_z_given_a, None);
        let e = compute_metrics(&[1.0], &[2.0], 3.0, Threshold::Empty).unwrap();
        assert_eq!(e.p_big_z_given_a, None);
    }

    #[test]
    fn scores_equal_to_losses_have_no_joint_tail() {
        let z = [0.5, 1.0, 2.0, 3.5, 4.0];
        let m = compute_metrics(&z, &z, 2.0, Threshold::Value(2.0)).unwrap();
        assert_eq!(m.p_big_z_given_a, Some(0.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_metrics(&[1.0], &[1.0, 2.0], 1.0, Threshold::Value(1.0)),
            Err(LocusError::LengthMismatch(_))
        ));
    }

    #[test]
    fn matched_threshold_examples() {
        let s: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(matched_acceptance_threshold(&s, 0.7).unwrap(), 7.0);
        assert!(matched_acceptance_threshold(&s, 1.0).is_err());
        let flat = [2.5; 6];
        let l = matched_acceptance_threshold(&flat, 0.7).unwrap();
        assert_eq!(l, 2.5);
        let m = score_metrics(&flat, &flat, 9.0, Threshold::Value(l)).unwrap();
        assert_eq!(m.p_a, 1.0);
    }

    proptest! {
        #[test]
        fn joint_tail_matches_direct_count(
            pts in proptest::collection::vec((0f64..4.0, 0f64..4.0), 1..200),
            tau in 0f64..4.0,
            lambda in 0f64..4.0,
        ) {
            let (z, u): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let m = compute_metrics(&z, &u, tau, Threshold::Value(lambda)).unwrap();
            let direct = z.iter().zip(&u).filter(|(z, u)| **z > tau && **u <= lambda).count() as f64
                / z.len() as f64;
            prop_assert!((m.joint_tail() - direct).abs() < 1e-12);
            prop_assert!(m.joint_tail() <= m.p_big_z + 1e-12);
            for v in [Some(m.p_a), Some(m.p_big_z), m.p_big_z_given_a, m.p_conf].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn matched_threshold_hits_target(scores in proptest::collection::vec(-5f64..5.0, 1..300), rate in 0.05f64..0.95) {
            let l = matched_acceptance_threshold(&scores, rate).unwrap();
            let acc = scores.iter().filter(|s| **s <= l).count() as f64 / scores.len() as f64;
            // distinct reals: acceptance is ceil(rate * n) / n
            prop_assert!(acc >= rate - 1e-9);
            let distinct = { let mut s = scores.clone(); s.sort_by(f64::total_cmp); s.dedup(); s.len() == scores.len() };
            if distinct {
                prop_assert!(acc - rate <= 1.0 / scores.len() as f64 + 1e-9);
            }
        }
    }
}
