//! Acceptance regions `A = { x : U_alpha(x) <= lambda }` and the procedures
//! that choose `lambda` (or `alpha`).
//!
//! * default: `lambda = tau`; the joint event `{Z > tau, accepted}` has
//!   probability at most `alpha` for any engine.
//! * tuned lambda: `argmin |q_hat(lambda) - eta|` over a grid subject to a
//!   minimum acceptance fraction.
//! * tuned alpha: same criterion over calibration levels with `lambda = tau`.
//! * certified: the largest grid `lambda` whose upper confidence bound on the
//!   conditional exceedance stays below `eta`, valid with probability
//!   `1 - delta`.
//!
//! Both tuners break ties in `|q_hat - eta|` toward the largest candidate.

use crate::calibration::CalibratedBound;
use crate::error::{LocusError, Result};
use crate::exec::Exec;
use crate::loss_engine::LossCdf;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// An acceptance threshold; `Empty` accepts nothing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Threshold {
    Empty,
    Value(f64),
}

impl Threshold {
    pub fn accepts(self, u: f64) -> bool {
        match self {
            Threshold::Empty => false,
            Threshold::Value(lambda) => u <= lambda,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Empty => None,
            Threshold::Value(v) => Some(v),
        }
    }

    pub fn is_empty(self) -> bool {
        matches!(self, Threshold::Empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    DefaultTau,
    TunedLambda,
    TunedAlpha,
    Certified,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TuningMeta {
    pub grid: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_g: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagRule {
    pub lambda: Threshold,
    /// Level of the bound the threshold applies to.
    pub alpha: f64,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meta: Option<TuningMeta>,
}

impl FlagRule {
    pub fn accepts(&self, u: f64) -> bool {
        self.lambda.accepts(u)
    }
}

/// One candidate of a tuning scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub candidate: f64,
    pub n_accepted: usize,
    pub accept_fraction: f64,
    /// `q_hat` for the tuners, the certificate `q_bar` for certification
    /// (undefined when `G_hat <= eps_G`).
    pub q: Option<f64>,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub method: Provenance,
    pub n: usize,
    pub rows: Vec<TuneRow>,
    pub chosen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_g: Option<f64>,
}

impl TuneReport {
    /// Fixed-width table: candidate, n, accept%, q_hat (or q_bar), feasible.
    pub fn to_table(&self) -> String {
        let q_name = if self.method == Provenance::Certified { "q_bar" } else { "q_hat" };
        let mut out = String::new();
        let _ = writeln!(out, "{:>12} {:>8} {:>8} {:>8} {:>9}", "candidate", "n", "accept%", q_name, "feasible");
        for r in &self.rows {
            let q = r.q.map_or_else(|| "--".to_string(), |q| format!("{q:.4}"));
            let mark = if Some(r.candidate) == self.chosen { " *" } else { "" };
            let _ = writeln!(
                out,
                "{:>12.6} {:>8} {:>8.1} {:>8} {:>9}{}",
                r.candidate,
                r.n_accepted,
                100.0 * r.accept_fraction,
                q,
                if r.feasible { "yes" } else { "no" },
                mark
            );
        }
        match self.chosen {
            Some(c) => {
                let _ = writeln!(out, "chosen: {c}");
            }
            None => {
                let _ = writeln!(out, "chosen: EMPTY (no feasible candidate; nothing is accepted)");
            }
        }
        out
    }
}

/// `U_alpha(x) <= lambda`.
pub fn accept<E: LossCdf>(bound: &CalibratedBound<E>, lambda: Threshold, x: &[f64]) -> Result<bool> {
    if lambda.is_empty() {
        return Ok(false);
    }
    Ok(lambda.accepts(bound.score(x)?))
}

/// `lambda = tau`.
pub fn default_rule(alpha: f64, tau: f64) -> FlagRule {
    FlagRule {
        lambda: Threshold::Value(tau),
        alpha,
        provenance: Provenance::DefaultTau,
        meta: None,
    }
}

/// `size` equally spaced thresholds spanning `[min u, max u]`.
pub fn default_lambda_grid(u: &[f64], size: usize) -> Vec<f64> {
    let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if u.is_empty() || size == 0 {
        return Vec::new();
    }
    if size == 1 || hi <= lo {
        return vec![hi];
    }
    (0..size)
        .map(|i| if i + 1 == size { hi } else { lo + (hi - lo) * i as f64 / (size - 1) as f64 })
        .collect()
}

/// `{0.02, 0.04, ..., 0.30}`.
pub fn default_alpha_grid() -> Vec<f64> {
    (1..=15).map(|i| i as f64 * 0.02).collect()
}

/// Scores sorted ascending with exceedance prefix counts, so
/// `(n_lambda, exceed_lambda)` is a binary search away.
struct SortedScores {
    u: Vec<f64>,
    exceed_prefix: Vec<usize>,
}

impl SortedScores {
    fn new(u: &[f64], exceed: &[bool]) -> Self {
        let mut pairs: Vec<(f64, bool)> = u.iter().copied().zip(exceed.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut exceed_prefix = Vec::with_capacity(pairs.len() + 1);
        exceed_prefix.push(0);
        for (_, e) in &pairs {
            exceed_prefix.push(exceed_prefix.last().unwrap() + usize::from(*e));
        }
        Self {
            u: pairs.into_iter().map(|p| p.0).collect(),
            exceed_prefix,
        }
    }

    /// `(n_lambda, #{i in I_lambda : Z_i > tau})`.
    fn counts(&self, lambda: f64) -> (usize, usize) {
        let n = self.u.partition_point(|&v| v <= lambda);
        (n, self.exceed_prefix[n])
    }
}

fn check_inputs(u: &[f64], exceed: &[bool], grid: &[f64], eta: f64) -> Result<()> {
    if u.len() != exceed.len() {
        return Err(LocusError::LengthMismatch(format!(
            "{} scores but {} exceedance flags",
            u.len(),
            exceed.len()
        )));
    }
    if u.is_empty() {
        return Err(LocusError::invalid("tuning needs at least one validation point"));
    }
    if grid.is_empty() {
        return Err(LocusError::invalid("tuning grid is empty"));
    }
    if !(0.0..1.0).contains(&eta) {
        return Err(LocusError::invalid(format!("eta {eta} outside [0, 1)")));
    }
    Ok(())
}

fn check_rho(rho_min: f64) -> Result<()> {
    if (0.0..1.0).contains(&rho_min) {
        Ok(())
    } else {
        Err(LocusError::invalid(format!("rho_min {rho_min} outside [0, 1)")))
    }
}

/// Index of the qualifying row closest to `eta`, ties to the largest
/// candidate.
fn pick_closest(rows: &[TuneRow], eta: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, r) in rows.iter().enumerate() {
        if !r.feasible {
            continue;
        }
        let d = (r.q.unwrap_or(0.0) - eta).abs();
        best = match best {
            None => Some((i, d)),
            Some((j, bd)) => {
                if d < bd || (d == bd && r.candidate > rows[j].candidate) {
                    Some((i, d))
                } else {
                    Some((j, bd))
                }
            }
        };
    }
    best.map(|(i, _)| i)
}

/// Validation-tuned acceptance threshold.
///
/// `u` are validation scores `U_alpha(X_i)`, `exceed[i] = Z_i > tau`.
pub fn tune_lambda(
    u: &[f64],
    exceed: &[bool],
    grid: &[f64],
    eta: f64,
    rho_min: f64,
    alpha: f64,
) -> Result<(FlagRule, TuneReport)> {
    check_inputs(u, exceed, grid, eta)?;
    check_rho(rho_min)?;
    let n = u.len();
    let sorted = SortedScores::new(u, exceed);
    let rows: Vec<TuneRow> = grid
        .iter()
        .map(|&lambda| {
            let (n_acc, n_exc) = sorted.counts(lambda);
            let frac = n_acc as f64 / n as f64;
            TuneRow {
                candidate: lambda,
                n_accepted: n_acc,
                accept_fraction: frac,
                q: Some(n_exc as f64 / n_acc.max(1) as f64),
                feasible: frac >= rho_min,
                h_hat: None,
            }
        })
        .collect();
    let chosen = pick_closest(&rows, eta).map(|i| rows[i].candidate);
    let rule = FlagRule {
        lambda: chosen.map_or(Threshold::Empty, Threshold::Value),
        alpha,
        provenance: Provenance::TunedLambda,
        meta: Some(TuningMeta {
            grid: grid.to_vec(),
            eta: Some(eta),
            rho_min: Some(rho_min),
            ..Default::default()
        }),
    };
    let report = TuneReport {
        method: Provenance::TunedLambda,
        n,
        rows,
        chosen,
        eps_h: None,
        eps_g: None,
    };
    Ok((rule, report))
}

/// Validation-tuned calibration level with `lambda = tau`. PIT values are
/// shared across the grid; only `t_{1-alpha}` changes.
#[allow(clippy::too_many_arguments)]
pub fn tune_alpha<E: LossCdf>(
    bound: &CalibratedBound<E>,
    tau: f64,
    grid: &[f64],
    eta: f64,
    rho_min: f64,
    val_x: ndarray::ArrayView2<'_, f64>,
    val_z: &[f64],
    exec: Exec,
) -> Result<(FlagRule, TuneReport)> {
    if val_x.nrows() != val_z.len() {
        return Err(LocusError::LengthMismatch(format!(
            "{} validation rows but {} losses",
            val_x.nrows(),
            val_z.len()
        )));
    }
    let exceed: Vec<bool> = val_z.iter().map(|&z| z > tau).collect();
    check_inputs(val_z, &exceed, grid, eta)?;
    check_rho(rho_min)?;
    if grid.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(LocusError::invalid("alpha grid must lie in (0, 1)"));
    }
    let n = val_z.len();
    let prepared = exec.map(n, |i| bound.prepare(&val_x.row(i).to_vec()));
    let mut rows = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let t = bound.level_for(alpha)?;
        let accepted = exec.try_map(n, |i| prepared[i].invert(t).map(|u| u <= tau))?;
        let n_acc = accepted.iter().filter(|a| **a).count();
        let n_exc = accepted.iter().zip(&exceed).filter(|(a, e)| **a && **e).count();
        let frac = n_acc as f64 / n as f64;
        rows.push(TuneRow {
            candidate: alpha,
            n_accepted: n_acc,
            accept_fraction: frac,
            q: Some(n_exc as f64 / n_acc.max(1) as f64),
            feasible: frac >= rho_min,
            h_hat: None,
        });
    }
    let chosen = pick_closest(&rows, eta).map(|i| rows[i].candidate);
    let rule = FlagRule {
        lambda: if chosen.is_some() { Threshold::Value(tau) } else { Threshold::Empty },
        alpha: chosen.unwrap_or(bound.alpha()),
        provenance: Provenance::TunedAlpha,
        meta: Some(TuningMeta {
            grid: grid.to_vec(),
            eta: Some(eta),
            rho_min: Some(rho_min),
            ..Default::default()
        }),
    };
    let report = TuneReport {
        method: Provenance::TunedAlpha,
        n,
        rows,
        chosen,
        eps_h: None,
        eps_g: None,
    };
    Ok((rule, report))
}

/// `(eps_H, eps_G)` for a validation sample of size `n` and confidence
/// `1 - delta`:
///
/// ```text
/// eps_G = sqrt(ln(4/delta) / (2n))
/// eps_H = 2 sqrt(ln(2(n+1)) / n) + eps_G
/// ```
pub fn certificate_epsilons(n: usize, delta: f64) -> (f64, f64) {
    let nf = n as f64;
    let eps_g = ((4.0 / delta).ln() / (2.0 * nf)).sqrt();
    let eps_h = 2.0 * ((2.0 * (nf + 1.0)).ln() / nf).sqrt() + eps_g;
    (eps_h, eps_g)
}

/// Distribution-free certified threshold `lambda*`.
pub fn certify_lambda(
    u: &[f64],
    exceed: &[bool],
    grid: &[f64],
    eta: f64,
    delta: f64,
    alpha: f64,
) -> Result<(FlagRule, TuneReport)> {
    check_inputs(u, exceed, grid, eta)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(LocusError::invalid(format!("delta {delta} outside (0, 1)")));
    }
    if eta <= 0.0 {
        return Err(LocusError::invalid("certification needs eta > 0"));
    }
    let n = u.len();
    let (eps_h, eps_g) = certificate_epsilons(n, delta);
    let sorted = SortedScores::new(u, exceed);
    let rows: Vec<TuneRow> = grid
        .iter()
        .map(|&lambda| {
            let (n_acc, n_exc) = sorted.counts(lambda);
            let g = n_acc as f64 / n as f64;
            let h = n_exc as f64 / n as f64;
            let q_bar = (g > eps_g).then(|| (h + eps_h) / (g - eps_g));
            TuneRow {
                candidate: lambda,
                n_accepted: n_acc,
                accept_fraction: g,
                q: q_bar,
                feasible: q_bar.is_some_and(|q| q <= eta),
                h_hat: Some(h),
            }
        })
        .collect();
    let chosen = rows
        .iter()
        .filter(|r| r.feasible)
        .map(|r| r.candidate)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.max(c))));
    let rule = FlagRule {
        lambda: chosen.map_or(Threshold::Empty, Threshold::Value),
        alpha,
        provenance: Provenance::Certified,
        meta: Some(TuningMeta {
            grid: grid.to_vec(),
            eta: Some(eta),
            delta: Some(delta),
            eps_h: Some(eps_h),
            eps_g: Some(eps_g),
            ..Default::default()
        }),
    };
    let report = TuneReport {
        method: Provenance::Certified,
        n,
        rows,
        chosen,
        eps_h: Some(eps_h),
        eps_g: Some(eps_g),
    };
    Ok((rule, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const U: [f64; 4] = [1.0, 2.0, 3.0, 4.0];
    const EXCEED: [bool; 4] = [false, false, true, true];

    #[test]
    fn tune_lambda_picks_closest() {
        let (rule, report) = tune_lambda(&U, &EXCEED, &U, 0.25, 0.0, 0.1).unwrap();
        let q: Vec<f64> = report.rows.iter().map(|r| r.q.unwrap()).collect();
        assert_eq!(q, vec![0.0, 0.0, 1.0 / 3.0, 0.5]);
        assert_eq!(rule.lambda, Threshold::Value(3.0));
        assert_eq!(rule.provenance, Provenance::TunedLambda);
    }

    #[test]
    fn tune_lambda_ties_go_to_largest() {
        let (rule, _) = tune_lambda(&U, &EXCEED, &U, 0.0, 0.0, 0.1).unwrap();
        assert_eq!(rule.lambda, Threshold::Value(2.0));
    }

    #[test]
    fn tune_lambda_respects_min_acceptance() {
        let (rule, report) = tune_lambda(&U, &EXCEED, &U, 0.25, 0.9, 0.1).unwrap();
        assert_eq!(rule.lambda, Threshold::Value(4.0));
        assert_eq!(report.rows.iter().filter(|r| r.feasible).count(), 1);
    }

    #[test]
    fn tune_lambda_can_be_empty() {
        let (rule, report) = tune_lambda(&U, &EXCEED, &[0.5], 0.25, 0.5, 0.1).unwrap();
        assert!(rule.lambda.is_empty());
        assert!(report.chosen.is_none());
        assert!(report.to_table().contains("EMPTY"));
    }

    #[test]
    fn epsilons_by_hand() {
        // sqrt(ln 40 / 4000), 2 sqrt(ln 4002 / 2000) + eps_G
        let (h, g) = certificate_epsilons(2000, 0.1);
        assert!((g - 0.030368073095415258).abs() < 1e-12);
        assert!((h - 0.15916674944842502).abs() < 1e-12);
    }

    #[test]
    fn tiny_eta_is_empty() {
        let u: Vec<f64> = (0..2000).map(|i| i as f64).collect();
        let ex = vec![false; 2000];
        let (rule, report) = certify_lambda(&u, &ex, &u[..50], 0.001, 0.1, 0.1).unwrap();
        assert!(rule.lambda.is_empty());
        assert!(report.rows.iter().all(|r| !r.feasible));
    }

    #[test]
    fn certified_can_exceed_tuned_when_exceedance_ratio_falls() {
        // 10 lowest scores hold 2 exceedances (q_hat = 0.2 = eta exactly);
        // accepting half the sample dilutes them enough to certify
        let n = 100_000;
        let u: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ex: Vec<bool> = (0..n).map(|i| !(2..50_000).contains(&i)).collect();
        let grid = [9.0, 49_999.0];
        let (tuned, _) = tune_lambda(&u, &ex, &grid, 0.2, 0.0, 0.1).unwrap();
        let (cert, _) = certify_lambda(&u, &ex, &grid, 0.2, 0.1, 0.1).unwrap();
        assert_eq!(tuned.lambda, Threshold::Value(9.0));
        assert_eq!(cert.lambda, Threshold::Value(49_999.0));
    }

    #[test]
    fn boundary_accepts() {
        assert!(Threshold::Value(3.0).accepts(3.0));
        assert!(!Threshold::Value(-1.0).accepts(0.0));
        assert!(Threshold::Value(f64::INFINITY).accepts(1e300));
        assert!(!Threshold::Empty.accepts(-1e300));
    }

    #[test]
    fn grids() {
        assert_eq!(default_lambda_grid(&[3.0, 1.0, 2.0], 3), vec![1.0, 2.0, 3.0]);
        assert_eq!(default_lambda_grid(&[2.0, 2.0], 50), vec![2.0]);
        let g = default_lambda_grid(&[0.0, 0.3, 1.7], 50);
        assert_eq!(g.len(), 50);
        assert_eq!((g[0], g[49]), (0.0, 1.7));
        let a = default_alpha_grid();
        assert_eq!(a.len(), 15);
        assert!((a[14] - 0.3).abs() < 1e-15);
    }

    fn data_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        proptest::collection::vec((0f64..5.0, any::<bool>()), 1..300)
            .prop_map(|v| v.into_iter().unzip())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn certificate_dominates_empirical_ratio((u, ex) in data_strategy(), delta in 0.01f64..0.5) {
            let grid = default_lambda_grid(&u, 20);
            let (_, cert) = certify_lambda(&u, &ex, &grid, 0.5, delta, 0.1).unwrap();
            let (_, tuned) = tune_lambda(&u, &ex, &grid, 0.5, 0.0, 0.1).unwrap();
            for (c, t) in cert.rows.iter().zip(&tuned.rows) {
                if let Some(q_bar) = c.q {
                    prop_assert!(q_bar >= t.q.unwrap());
                }
            }
        }

        #[test]
        fn acceptance_is_nested((u, _ex) in data_strategy(), a in 0f64..5.0, b in 0f64..5.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            for v in &u {
                if Threshold::Value(lo).accepts(*v) {
                    prop_assert!(Threshold::Value(hi).accepts(*v));
                }
            }
        }

        #[test]
        fn certified_within_tuned_when_exceedance_grows_with_score(
            mut u in proptest::collection::vec(0f64..5.0, 50..400),
            cut in 0f64..5.0,
            eta in 0.05f64..0.9,
        ) {
            // exceedances concentrated on the largest scores keep q_hat
            // nondecreasing in lambda
            u.sort_by(f64::total_cmp);
            let ex: Vec<bool> = u.iter().map(|v| *v > cut).collect();
            let grid = default_lambda_grid(&u, 25);
            let (cert, _) = certify_lambda(&u, &ex, &grid, eta, 0.1, 0.1).unwrap();
            let (tuned, _) = tune_lambda(&u, &ex, &grid, eta, 0.0, 0.1).unwrap();
            if let (Threshold::Value(c), Threshold::Value(t)) = (cert.lambda, tuned.lambda) {
                prop_assert!(c <= t, "certified {} tuned {}", c, t);
            }
        }

        #[test]
        fn certified_threshold_meets_target((u, ex) in data_strategy(), eta in 0.05f64..0.9) {
            let grid = default_lambda_grid(&u, 25);
            let (cert, report) = certify_lambda(&u, &ex, &grid, eta, 0.1, 0.1).unwrap();
            if let Threshold::Value(c) = cert.lambda {
                let (_, tuned) = tune_lambda(&u, &ex, &[c], eta, 0.0, 0.1).unwrap();
                let row = report.rows.iter().find(|r| r.candidate == c).unwrap();
                prop_assert!(tuned.rows[0].q.unwrap() <= row.q.unwrap());
                prop_assert!(row.q.unwrap() <= eta);
                prop_assert!(report.rows.iter().all(|r| !r.feasible || r.candidate <= c));
            }
        }
    }
}
