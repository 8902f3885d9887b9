//! Pass/fail evaluation of the desk-scale claims, shared by `pvhri --check`
//! and the acceptance tests.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{GenerationMse, TrainingTrend, TransitionRun};
use crate::session::MatrixResult;
use crate::trainer::ProfileName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: String) -> Self {
        Self { name: name.to_string(), pass, detail }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn lookup<T: Copy>(rows: &[(ProfileName, T)], p: ProfileName) -> Option<T> {
    rows.iter().find(|(q, _)| *q == p).map(|(_, v)| *v)
}

/// Every profile settled within `tol` of its smoothed minimum deficit, and the
/// final KL term strictly ordered rigid < moderate < flexible.
pub fn training_checks(trends: &[(ProfileName, TrainingTrend)], tol: f64) -> Vec<Check> {
    let mut out = Vec::new();
    let settled: Vec<String> = trends
        .iter()
        .map(|(p, t)| format!("{p} {:.3}/{:.3}", t.final_deficit, t.min_deficit))
        .collect();
    out.push(Check::new(
        "training.deficit_settled",
        !trends.is_empty() && trends.iter().all(|(_, t)| t.settled(tol)),
        format!("final/min deficit {}", settled.join(", ")),
    ));
    let kl = |p| lookup(trends, p).map(|t: TrainingTrend| t.final_regulation);
    let ordered = match (kl(ProfileName::Rigid), kl(ProfileName::Moderate), kl(ProfileName::Flexible)) {
        (Some(r), Some(m), Some(f)) => r < m && m < f,
        _ => false,
    };
    let detail = ProfileName::ALL
        .iter()
        .map(|&p| format!("{p} {}", kl(p).map_or("-".into(), |v| format!("{v:.2}"))))
        .collect::<Vec<_>>()
        .join(", ");
    out.push(Check::new("training.kl_ordered", ordered, format!("final KL {detail}")));
    out
}

/// Mean-mode MSE of rigid and moderate each below sampled-mode MSE of flexible.
pub fn generation_check(mean_mode: &[(ProfileName, f64)], flexible_sampled: f64) -> Check {
    let r = lookup(mean_mode, ProfileName::Rigid);
    let m = lookup(mean_mode, ProfileName::Moderate);
    let pass = matches!((r, m), (Some(r), Some(m)) if r < flexible_sampled && m < flexible_sampled);
    Check::new(
        "generation.fidelity",
        pass,
        format!("rigid mean {r:?}, moderate mean {m:?}, flexible sampled {flexible_sampled:.5}"),
    )
}

/// Convenience over full curves.
pub fn generation_check_curves(mean_mode: &[(ProfileName, GenerationMse)], flexible_sampled: &GenerationMse) -> Check {
    let means: Vec<_> = mean_mode.iter().map(|(p, g)| (*p, g.mean)).collect();
    generation_check(&means, flexible_sampled.mean)
}

/// Runs from one intention against the other primitives. Moderate and
/// flexible must converge on every run; flexible must converge in fewer ticks
/// than rigid on average, a rigid run that never converges counting as `steps`.
pub fn transition_checks(
    runs: &[(ProfileName, TransitionRun)],
    labels: &[String],
    frac: f64,
    steps: usize,
) -> Vec<Check> {
    let name = |i: usize| labels.get(i).map_or("?", String::as_str);
    let of = |p: ProfileName| runs.iter().filter(move |(q, _)| *q == p).map(|(_, r)| r);
    let mut out = Vec::new();
    for p in [ProfileName::Moderate, ProfileName::Flexible] {
        let rs: Vec<_> = of(p).collect();
        let detail = rs
            .iter()
            .map(|r| format!("{}{} tail {:.2}", name(r.intent), name(r.evidence), r.tail))
            .collect::<Vec<_>>()
            .join(", ");
        out.push(Check::new(
            &format!("transition.{p}_converges"),
            !rs.is_empty() && rs.iter().all(|r| r.converged(frac)),
            detail,
        ));
    }
    let mean_tick = |p: ProfileName| {
        let ticks: Vec<f64> = of(p).map(|r| r.converged_at.unwrap_or(steps) as f64).collect();
        (!ticks.is_empty()).then(|| ticks.iter().sum::<f64>() / ticks.len() as f64)
    };
    let (f, r) = (mean_tick(ProfileName::Flexible), mean_tick(ProfileName::Rigid));
    out.push(Check::new(
        "transition.flexible_faster_than_rigid",
        matches!((f, r), (Some(f), Some(r)) if f < r),
        format!("mean convergence tick flexible {f:?}, rigid {r:?}"),
    ));
    let rigid_fail = of(ProfileName::Rigid).filter(|r| !r.converged(frac)).count();
    out.push(Check::new("transition.rigid_failures_tolerated", true, format!("{rigid_fail} rigid runs did not converge")));
    out
}

/// Incongruent means per profile: (p(I), p(B), Σ|τ̂^ext|), and the congruent torque mean.
pub fn protocol_means(res: &MatrixResult, p: ProfileName) -> (Option<[f64; 3]>, Option<f64>) {
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let inc: Vec<_> = res.summaries.iter().filter(|s| s.spec.profile == p && !s.spec.congruent()).collect();
    let con: Vec<f64> = res
        .summaries
        .iter()
        .filter(|s| s.spec.profile == p && s.spec.congruent())
        .map(|s| s.torque.mean)
        .collect();
    let pi: Vec<f64> = inc.iter().map(|s| s.probs.p_intent).collect();
    let pb: Vec<f64> = inc.iter().map(|s| s.probs.p_behavior).collect();
    let tau: Vec<f64> = inc.iter().map(|s| s.torque.mean).collect();
    let incs = match (mean(&pi), mean(&pb), mean(&tau)) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    (incs, mean(&con))
}

/// (a) moderate has the strictly highest mean p(B) on incongruent trials;
/// (b) congruent mean torque below incongruent mean torque at every profile.
pub fn protocol_checks(res: &MatrixResult) -> Vec<Check> {
    let rows: Vec<_> = ProfileName::ALL.iter().map(|&p| (p, protocol_means(res, p))).collect();
    let pb = |p| rows.iter().find(|(q, _)| *q == p).and_then(|(_, (inc, _))| inc.map(|v| v[1]));
    let a = match (pb(ProfileName::Rigid), pb(ProfileName::Moderate), pb(ProfileName::Flexible)) {
        (Some(r), Some(m), Some(f)) => m > r && m > f,
        _ => false,
    };
    let a_detail = rows
        .iter()
        .map(|(p, (inc, _))| format!("{p} {}", inc.map_or("-".into(), |v| format!("{:.3}", v[1]))))
        .collect::<Vec<_>>()
        .join(", ");
    let b = rows
        .iter()
        .all(|(_, (inc, con))| matches!((inc, con), (Some(i), Some(c)) if *c < i[2]));
    let b_detail = rows
        .iter()
        .map(|(p, (inc, con))| {
            format!(
                "{p} {} vs {}",
                con.map_or("-".into(), |v| format!("{v:.3}")),
                inc.map_or("-".into(), |v| format!("{:.3}", v[2]))
            )
        })
        .collect::<Vec<_>>()
        .join(", ");
    let mut out = vec![
        Check::new("protocol.moderate_highest_p_behavior", a, format!("incongruent mean p(B) {a_detail}")),
        Check::new(
            "protocol.congruent_lower_torque",
            b,
            format!("congruent vs incongruent mean torque {b_detail}"),
        ),
    ];
    if !res.failures.is_empty() {
        out.push(Check::new("protocol.no_failed_trials", false, format!("{} trials failed", res.failures.len())));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{IntentBehavior, TorqueStats};
    use crate::session::{TrialSpec, TrialSummary};

    fn summary(p: ProfileName, r: &str, h: &str, pb: f64, tau: f64) -> TrialSummary {
        TrialSummary {
            spec: TrialSpec::new(p, r, h, 0),
            probs: IntentBehavior { p_intent: 0.0, p_behavior: pb, ticks: 10 },
            torque: TorqueStats { mean: tau, std: 0.0 },
        }
    }

    #[test]
    fn protocol_orderings() {
        let mut res = MatrixResult { summaries: Vec::new(), failures: Vec::new() };
        for (p, pb) in [(ProfileName::Rigid, 0.3), (ProfileName::Moderate, 0.6), (ProfileName::Flexible, 0.4)] {
            res.summaries.push(summary(p, "A", "B", pb, 2.0));
            res.summaries.push(summary(p, "A", "A", 1.0, 1.0));
        }
        let c = protocol_checks(&res);
        assert!(c.iter().all(|c| c.pass), "{c:?}");
        // A tie is not "highest".
        res.summaries[4].probs.p_behavior = 0.6;
        assert!(!protocol_checks(&res)[0].pass);
        res.summaries[1].torque.mean = 2.0;
        assert!(!protocol_checks(&res)[1].pass);
    }

    #[test]
    fn training_ordering() {
        let t = |kl| TrainingTrend { final_deficit: 1.0, min_deficit: 1.0, final_regulation: kl };
        let rows = [(ProfileName::Rigid, t(1.0)), (ProfileName::Moderate, t(2.0)), (ProfileName::Flexible, t(3.0))];
        assert!(training_checks(&rows, 0.05).iter().all(|c| c.pass));
        let rows = [(ProfileName::Rigid, t(1.0)), (ProfileName::Moderate, t(2.0)), (ProfileName::Flexible, t(2.0))];
        assert!(!training_checks(&rows, 0.05)[1].pass);
        assert!(!training_checks(&[], 0.05)[0].pass);
    }
}
