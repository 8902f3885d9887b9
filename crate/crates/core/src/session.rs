//! Closed-loop trials: error regression at the network rate, the hybrid
//! controller and plant at the fast rate, and a scripted human pushing the
//! arm toward its own primitive.
//!
//! Both rates run on one integer microsecond clock. A network tick fires on
//! the first fast tick at or after its scheduled time.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    intent_behavior_probs, torque_stats, Classification, IntentBehavior, LabelSeries, ObserverNet, TorqueStats,
};
use crate::checkpoint::Checkpoint;
use crate::control::scenario::{write_tick_rows, TickRow};
use crate::control::{
    inverse_dynamics, ControllerGains, HumanSurrogate, HybridController, Mode, Plant, PlantConfig,
};
use crate::encoding::Trajectory;
use crate::error::{Error, Result};
use crate::regression::{LatentSnapshot, RegressionConfig, RegressionWindow};
use crate::trainer::ProfileName;

pub const SESSION_SCHEMA_VERSION: u32 = 1;
pub const NETWORK_TICK_US: u64 = 250_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub regression: RegressionConfig,
    /// `None` uses a uniform plant with the checkpoint's coded range as joint limits.
    pub plant: Option<PlantConfig>,
    pub gains: ControllerGains,
    pub human: HumanSurrogate,
    /// Network steps the human script runs ahead of the current time.
    pub script_lead: f64,
    pub network_tick_us: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            regression: RegressionConfig::default(),
            plant: None,
            gains: ControllerGains::default(),
            human: HumanSurrogate::default(),
            script_lead: 0.0,
            network_tick_us: NETWORK_TICK_US,
        }
    }
}

impl SessionConfig {
    pub fn plant_for(&self, ck: &Checkpoint) -> Result<PlantConfig> {
        let plant = match &self.plant {
            Some(p) => p.clone(),
            None => {
                let mut p = PlantConfig::uniform(ck.config.output_dims, 1.0);
                p.limits = (0..ck.config.output_dims).map(|j| ck.coding.range(j)).collect();
                p
            }
        };
        plant.validate()?;
        if plant.dims() != ck.config.output_dims {
            return Err(Error::Shape(format!(
                "plant has {} joints, network {}",
                plant.dims(),
                ck.config.output_dims
            )));
        }
        Ok(plant)
    }

    /// Fast tick period in µs, required to be a whole number.
    pub fn fast_tick_us(plant: &PlantConfig) -> Result<u64> {
        let us = 1e6 / plant.rate_hz;
        if (us - us.round()).abs() > 1e-9 || us < 1.0 {
            return Err(Error::Config(format!("plant rate {} Hz is not a whole number of µs", plant.rate_hz)));
        }
        Ok(us.round() as u64)
    }

    pub fn validate(&self) -> Result<()> {
        self.regression.validate()?;
        self.gains.validate()?;
        if self.network_tick_us == 0 {
            return Err(Error::Config("network tick must be positive".into()));
        }
        if !(self.human.gain >= 0.0 && self.human.bound >= 0.0 && self.script_lead.is_finite()) {
            return Err(Error::Config("human gain and bound must be ≥ 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub profile: ProfileName,
    pub robot_intent: String,
    pub human_intent: String,
    /// Network ticks.
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub repeat: usize,
}

impl TrialSpec {
    pub fn new(profile: ProfileName, robot_intent: &str, human_intent: &str, seed: u64) -> Self {
        Self {
            profile,
            robot_intent: robot_intent.to_string(),
            human_intent: human_intent.to_string(),
            steps: 300,
            seed,
            repeat: 0,
        }
    }

    pub fn pair(&self) -> String {
        format!("{}{}", self.robot_intent, self.human_intent)
    }

    pub fn congruent(&self) -> bool {
        self.robot_intent == self.human_intent
    }
}

/// One network tick of a trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTick {
    pub n: usize,
    /// Actual firing time on the simulated clock.
    pub t_us: u64,
    /// Measured posture used as evidence.
    pub theta: Vec<f64>,
    /// Prediction published to the controller.
    pub theta_net: Vec<f64>,
    pub label_intent: usize,
    pub label_behavior: usize,
    /// Mean over the following fast ticks of Σ_j |τ̂^ext|.
    pub tau_ext_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub schema_version: u32,
    pub spec: TrialSpec,
    pub labels: Vec<String>,
    pub network: Vec<NetworkTick>,
    pub latents: Vec<LatentSnapshot>,
    /// Σ_j |τ̂^ext| at every fast tick.
    pub torque_series: Vec<f64>,
    /// Full controller log; empty unless requested.
    pub controller: Vec<TickRow>,
}

impl TrialRecord {
    pub fn target(&self) -> Result<usize> {
        label_of(&self.labels, &self.spec.human_intent)
    }

    pub fn intention_labels(&self) -> Vec<usize> {
        self.network.iter().map(|n| n.label_intent).collect()
    }

    pub fn behavior_labels(&self) -> Vec<usize> {
        self.network.iter().map(|n| n.label_behavior).collect()
    }

    pub fn probs(&self) -> Result<IntentBehavior> {
        let i = self.intention_labels();
        let b = self.behavior_labels();
        intent_behavior_probs(&[LabelSeries { target: self.target()?, intention: &i, behavior: &b }])
    }

    pub fn torque(&self) -> TorqueStats {
        torque_stats(&self.torque_series)
    }

    /// Write `spec.json`, `network_ticks.csv`, `controller_ticks.csv` and `latents.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let spec = serde_json::json!({
            "schema_version": self.schema_version,
            "spec": self.spec,
            "labels": self.labels,
        });
        fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;

        let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(dir.join("network_ticks.csv"))?));
        let dims = self.network.first().map_or(0, |n| n.theta.len());
        let mut header = vec!["n".to_string(), "t_us".into(), "label_intent".into(), "label_behavior".into(), "tau_ext_sum".into()];
        header.extend((0..dims).map(|j| format!("theta_{j}")));
        header.extend((0..dims).map(|j| format!("theta_net_{j}")));
        w.write_record(&header)?;
        for n in &self.network {
            let mut row = vec![
                n.n.to_string(),
                n.t_us.to_string(),
                self.labels[n.label_intent].clone(),
                self.labels[n.label_behavior].clone(),
                n.tau_ext_sum.to_string(),
            ];
            row.extend(n.theta.iter().map(f64::to_string));
            row.extend(n.theta_net.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;

        write_tick_rows(&self.controller, BufWriter::new(fs::File::create(dir.join("controller_ticks.csv"))?))?;

        let mut f = BufWriter::new(fs::File::create(dir.join("latents.jsonl"))?);
        for s in &self.latents {
            serde_json::to_writer(&mut f, s)?;
            f.write_all(b"\n")?;
        }
        f.flush()?;
        Ok(())
    }
}

fn label_of(labels: &[String], l: &str) -> Result<usize> {
    labels
        .iter()
        .position(|x| x == l)
        .ok_or_else(|| Error::Config(format!("unknown primitive `{l}`")))
}

/// Human script posture at fractional network step `s`, looping, linearly interpolated.
pub fn script_posture(traj: &Trajectory, s: f64) -> Vec<f64> {
    let n = traj.steps() as f64;
    let s = s.rem_euclid(n);
    let i0 = s.floor() as usize % traj.steps();
    let i1 = (i0 + 1) % traj.steps();
    let f = s - s.floor();
    traj.posture(i0)
        .iter()
        .zip(traj.posture(i1).iter())
        .map(|(a, b)| a + f * (b - a))
        .collect()
}

/// Result of one network tick.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkStep {
    pub tick: NetworkTick,
    pub snapshot: LatentSnapshot,
    pub intention: Classification,
    pub behavior: Classification,
}

/// Result of one fast tick.
#[derive(Debug, Clone, PartialEq)]
pub struct FastStep {
    pub t_us: u64,
    /// Measurements the controller acted on.
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    pub tau_ext: Vec<f64>,
    pub modes: Vec<Mode>,
    pub command: Vec<f64>,
    pub injected: Vec<f64>,
    /// Limit flags from the previous plant step.
    pub limited: Vec<bool>,
}

impl FastStep {
    pub fn tau_ext_sum(&self) -> f64 {
        self.tau_ext.iter().map(|t| t.abs()).sum()
    }
}

/// Regression window, controller and plant on one simulated clock.
///
/// The checkpoint and observer are passed to each call rather than held, so
/// long-lived owners (the live service) can keep them alongside.
#[derive(Debug, Clone)]
pub struct Engine {
    config: SessionConfig,
    window: RegressionWindow,
    plant: Plant,
    ctl: HybridController,
    theta_net: Vec<f64>,
    intent: usize,
    fast_us: u64,
    next_net: u64,
    t_us: u64,
    network_ticks: usize,
    limited: Vec<bool>,
}

impl Engine {
    /// Start at the opening posture of `robot_intent` with its trained offsets queued.
    pub fn new(ck: &Checkpoint, config: &SessionConfig, robot_intent: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if robot_intent >= ck.dataset.len() {
            return Err(Error::Config(format!("no primitive with index {robot_intent}")));
        }
        let plant_cfg = config.plant_for(ck)?;
        let fast_us = SessionConfig::fast_tick_us(&plant_cfg)?;
        // Interaction-time KL weight comes from the profile.
        let mut reg = config.regression.clone();
        reg.w = ck.profile.interact_w;
        let window = RegressionWindow::new(reg, &ck.config, seed)?;
        let start: Vec<f64> = ck.dataset[robot_intent].posture(0).to_vec();
        let plant = Plant::new(plant_cfg, &start)?;
        let ctl = HybridController::new(config.gains.clone(), plant.theta())?;
        let dims = start.len();
        let mut e = Self {
            config: config.clone(),
            window,
            plant,
            ctl,
            theta_net: start,
            intent: robot_intent,
            fast_us,
            next_net: 0,
            t_us: 0,
            network_ticks: 0,
            limited: vec![false; dims],
        };
        e.seed_intent(ck, robot_intent)?;
        Ok(e)
    }

    fn seed_intent(&mut self, ck: &Checkpoint, intent: usize) -> Result<()> {
        let steps = &ck.adaptive[intent].steps;
        self.window.seed_intent(&steps[..self.config.regression.window.min(steps.len())])
    }

    /// Switch the robot's intention: restart the window from the zero state
    /// with the new primitive's trained offsets. The arm is not moved.
    pub fn switch_intent(&mut self, ck: &Checkpoint, intent: usize, seed: u64) -> Result<()> {
        if intent >= ck.adaptive.len() {
            return Err(Error::Config(format!("no primitive with index {intent}")));
        }
        self.window.reset(seed);
        self.seed_intent(ck, intent)?;
        self.intent = intent;
        Ok(())
    }

    pub fn intent(&self) -> usize {
        self.intent
    }

    pub fn t_us(&self) -> u64 {
        self.t_us
    }

    pub fn fast_tick_us(&self) -> u64 {
        self.fast_us
    }

    pub fn network_tick_us(&self) -> u64 {
        self.config.network_tick_us
    }

    pub fn network_ticks(&self) -> usize {
        self.network_ticks
    }

    pub fn theta(&self) -> &[f64] {
        self.plant.theta()
    }

    pub fn theta_net(&self) -> &[f64] {
        &self.theta_net
    }

    pub fn plant_config(&self) -> &PlantConfig {
        self.plant.config()
    }

    pub fn gains(&self) -> &ControllerGains {
        &self.ctl.gains
    }

    /// Whether a network tick is scheduled at or before the current time.
    pub fn network_due(&self) -> bool {
        self.t_us >= self.next_net
    }

    /// Regress on the measured posture and publish a new θ^net.
    pub fn network_tick(&mut self, ck: &Checkpoint, observer: &ObserverNet) -> Result<NetworkStep> {
        let measured: Vec<f64> = self.plant.theta().iter().enumerate().map(|(j, v)| ck.coding.clamp(j, *v)).collect();
        let evidence = ck.coding.encode_posture(&measured)?;
        let out = self.window.regression_step(&ck.params, &ck.coding, &evidence)?;
        self.theta_net = out.posture;
        let intention = observer.classify_posture(&self.theta_net)?;
        let behavior = observer.classify_posture(&measured)?;
        let tick = NetworkTick {
            n: self.network_ticks,
            t_us: self.t_us,
            theta: measured,
            theta_net: self.theta_net.clone(),
            label_intent: intention.label,
            label_behavior: behavior.label,
            tau_ext_sum: 0.0,
        };
        self.network_ticks += 1;
        self.next_net += self.config.network_tick_us;
        Ok(NetworkStep { tick, snapshot: out.snapshot, intention, behavior })
    }

    /// One controller and plant step with `injected` human torques.
    pub fn fast_tick(&mut self, injected: &[f64]) -> Result<FastStep> {
        let theta = self.plant.theta().to_vec();
        let tau = self.plant.tau().to_vec();
        let act = inverse_dynamics(self.plant.config(), &self.plant.history())?;
        let command = self.ctl.tick(&theta, &tau, &act, &self.theta_net)?;
        let step = FastStep {
            t_us: self.t_us,
            tau_ext: self.ctl.joints.iter().map(|j| j.tau_ext).collect(),
            modes: self.ctl.modes(),
            theta,
            tau,
            command,
            injected: injected.to_vec(),
            limited: self.limited.clone(),
        };
        self.limited = self.plant.plant_step(&step.command, injected)?.limited;
        self.t_us += self.fast_us;
        Ok(step)
    }
}

/// Run one trial. `keep_controller` retains the per-joint fast-tick log.
pub fn run_trial(
    spec: &TrialSpec,
    ck: &Checkpoint,
    observer: &ObserverNet,
    config: &SessionConfig,
    keep_controller: bool,
) -> Result<TrialRecord> {
    if ck.profile.name != spec.profile {
        return Err(Error::Config(format!(
            "checkpoint holds profile `{}`, trial wants `{}`",
            ck.profile.name, spec.profile
        )));
    }
    if spec.steps < config.regression.window {
        return Err(Error::Config(format!(
            "trial of {} steps is shorter than the regression window {}",
            spec.steps, config.regression.window
        )));
    }
    if observer.inputs() != ck.config.output_dims {
        return Err(Error::Shape("observer and network differ in posture width".into()));
    }
    let ri = label_of(&ck.labels, &spec.robot_intent)?;
    let hi = label_of(&ck.labels, &spec.human_intent)?;
    let mut engine = Engine::new(ck, config, ri, spec.seed)?;
    let script = &ck.dataset[hi];
    let net_us = config.network_tick_us as f64;

    let total_us = spec.steps as u64 * config.network_tick_us;
    let mut network: Vec<NetworkTick> = Vec::with_capacity(spec.steps);
    let mut latents = Vec::with_capacity(spec.steps);
    let mut torque_series = Vec::with_capacity((total_us / engine.fast_tick_us()) as usize + 1);
    let mut controller = Vec::new();
    let mut period = (0.0, 0usize);
    while engine.t_us() < total_us {
        if engine.network_due() {
            if let Some(last) = network.last_mut() {
                last.tau_ext_sum = period.0 / period.1.max(1) as f64;
            }
            period = (0.0, 0);
            let step = engine.network_tick(ck, observer)?;
            network.push(step.tick);
            latents.push(step.snapshot);
        }
        let s = engine.t_us() as f64 / net_us + config.script_lead;
        let injected = config.human.torques(&script_posture(script, s), engine.theta());
        let step = engine.fast_tick(&injected)?;
        let sum = step.tau_ext_sum();
        torque_series.push(sum);
        period.0 += sum;
        period.1 += 1;
        if keep_controller {
            for j in 0..step.theta.len() {
                controller.push(TickRow {
                    t: step.t_us as f64 * 1e-6,
                    joint: j,
                    theta: step.theta[j],
                    theta_net: engine.theta_net()[j],
                    tau: step.tau[j],
                    tau_ext: step.tau_ext[j],
                    mode: step.modes[j],
                    command: step.command[j],
                    limited: step.limited[j],
                });
            }
        }
    }
    if let Some(last) = network.last_mut() {
        last.tau_ext_sum = period.0 / period.1.max(1) as f64;
    }
    Ok(TrialRecord {
        schema_version: SESSION_SCHEMA_VERSION,
        spec: spec.clone(),
        labels: ck.labels.clone(),
        network,
        latents,
        torque_series,
        controller,
    })
}

/// Every ordered pair of distinct labels, robot first.
pub fn incongruent_pairs(labels: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for r in labels {
        for h in labels {
            if r != h {
                out.push((r.clone(), h.clone()));
            }
        }
    }
    out
}

/// Specs for `profiles × pairs × repeats`, seeds counting up from `seed`.
pub fn matrix_specs(
    profiles: &[ProfileName],
    pairs: &[(String, String)],
    repeats: usize,
    steps: usize,
    seed: u64,
) -> Vec<TrialSpec> {
    let mut out = Vec::new();
    for &profile in profiles {
        for (r, h) in pairs {
            for repeat in 0..repeats {
                out.push(TrialSpec {
                    profile,
                    robot_intent: r.clone(),
                    human_intent: h.clone(),
                    steps,
                    seed: seed + out.len() as u64,
                    repeat,
                });
            }
        }
    }
    out
}

/// Summary of one trial, enough for both tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub spec: TrialSpec,
    pub probs: IntentBehavior,
    pub torque: TorqueStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub spec: TrialSpec,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixResult {
    pub summaries: Vec<TrialSummary>,
    pub failures: Vec<TrialFailure>,
}

/// Run every trial against the checkpoint of its profile. Failed trials are
/// reported and the matrix continues. With `out_dir`, each record is saved to
/// `<out_dir>/<profile>_<pair>_<repeat>/`.
pub fn run_matrix(
    specs: &[TrialSpec],
    checkpoints: &[Checkpoint],
    observer: &ObserverNet,
    config: &SessionConfig,
    out_dir: Option<&Path>,
) -> Result<MatrixResult> {
    let mut by_profile = BTreeMap::new();
    for ck in checkpoints {
        by_profile.insert(ck.profile.name, ck);
    }
    for s in specs {
        if !by_profile.contains_key(&s.profile) {
            return Err(Error::MissingProfile(s.profile.to_string()));
        }
    }
    let mut result = MatrixResult { summaries: Vec::new(), failures: Vec::new() };
    for spec in specs {
        let ck = by_profile[&spec.profile];
        let run = run_trial(spec, ck, observer, config, out_dir.is_some()).and_then(|rec| {
            if let Some(dir) = out_dir {
                rec.save(&dir.join(format!("{}_{}_{}", spec.profile, spec.pair(), spec.repeat)))?;
            }
            Ok(TrialSummary { spec: spec.clone(), probs: rec.probs()?, torque: rec.torque() })
        });
        match run {
            Ok(s) => result.summaries.push(s),
            Err(e) => result.failures.push(TrialFailure { spec: spec.clone(), error: e.to_string() }),
        }
    }
    Ok(result)
}

impl MatrixResult {
    /// Per-profile p(I)/p(B) pooled over every summarised trial (equal trial lengths).
    pub fn profile_probs(&self, profile: ProfileName) -> Option<(f64, f64)> {
        let rows: Vec<_> = self.summaries.iter().filter(|s| s.spec.profile == profile).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        Some((
            rows.iter().map(|s| s.probs.p_intent).sum::<f64>() / n,
            rows.iter().map(|s| s.probs.p_behavior).sum::<f64>() / n,
        ))
    }

    /// Rows per repeat, columns `p_intent`/`p_behavior` per profile.
    pub fn write_probs_table<W: Write>(&self, writer: W) -> Result<()> {
        let profiles = self.profiles();
        let repeats = self.summaries.iter().map(|s| s.spec.repeat + 1).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["trial".to_string()];
        for p in &profiles {
            header.push(format!("{p}_p_intent"));
            header.push(format!("{p}_p_behavior"));
        }
        w.write_record(&header)?;
        for r in 0..repeats {
            let mut row = vec![(r + 1).to_string()];
            for p in &profiles {
                let cell: Vec<_> = self.summaries.iter().filter(|s| s.spec.profile == *p && s.spec.repeat == r).collect();
                let n = cell.len().max(1) as f64;
                row.push(format!("{:.3}", cell.iter().map(|s| s.probs.p_intent).sum::<f64>() / n));
                row.push(format!("{:.3}", cell.iter().map(|s| s.probs.p_behavior).sum::<f64>() / n));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean block then std block; rows per pair, columns per profile and repeat.
    pub fn write_torque_table<W: Write>(&self, writer: W) -> Result<()> {
        let profiles = self.profiles();
        let repeats = self.summaries.iter().map(|s| s.spec.repeat + 1).max().unwrap_or(0);
        let mut pairs: Vec<String> = Vec::new();
        for s in &self.summaries {
            if !pairs.contains(&s.spec.pair()) {
                pairs.push(s.spec.pair());
            }
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["stat".to_string(), "case".to_string()];
        for p in &profiles {
            header.extend((1..=repeats).map(|r| format!("{p}_T{r}")));
        }
        w.write_record(&header)?;
        for stat in ["mean", "std"] {
            for pair in &pairs {
                let mut row = vec![stat.to_string(), pair.clone()];
                for p in &profiles {
                    for r in 0..repeats {
                        let cell = self
                            .summaries
                            .iter()
                            .find(|s| s.spec.profile == *p && s.spec.repeat == r && s.spec.pair() == *pair);
                        row.push(match cell {
                            Some(s) if stat == "mean" => format!("{:.3}", s.torque.mean),
                            Some(s) => format!("{:.3}", s.torque.std),
                            None => String::new(),
                        });
                    }
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    fn profiles(&self) -> Vec<ProfileName> {
        let mut p: Vec<ProfileName> = self.summaries.iter().map(|s| s.spec.profile).collect();
        p.sort();
        p.dedup();
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{make_primitives, PrimitiveSpec};
    use crate::testutil::tiny;

    fn small_config() -> SessionConfig {
        SessionConfig {
            regression: RegressionConfig { window: 4, inner_epochs: 2, ..RegressionConfig::default() },
            ..SessionConfig::default()
        }
    }

    #[test]
    fn trial_lengths_and_clock() {
        let (ck, obs) = tiny();
        let spec = TrialSpec { steps: 8, ..TrialSpec::new(ProfileName::Moderate, "A", "B", 3) };
        let rec = run_trial(&spec, &ck, &obs, &small_config(), true).unwrap();
        assert_eq!(rec.network.len(), 8);
        assert_eq!(rec.latents.len(), 8);
        // 8 × 250 ms at 20 ms per fast tick.
        assert_eq!(rec.torque_series.len(), 100);
        assert_eq!(rec.controller.len(), 100 * 3);
        for (k, n) in rec.network.iter().enumerate() {
            let scheduled = k as u64 * NETWORK_TICK_US;
            assert!(n.t_us >= scheduled && n.t_us < scheduled + 20_000, "{k}: {}", n.t_us);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let (ck, obs) = tiny();
        let spec = TrialSpec { steps: 6, ..TrialSpec::new(ProfileName::Moderate, "B", "C", 9) };
        let a = run_trial(&spec, &ck, &obs, &small_config(), true).unwrap();
        let b = run_trial(&spec, &ck, &obs, &small_config(), true).unwrap();
        assert_eq!(a, b);
        let other = TrialSpec { seed: 10, ..spec };
        let c = run_trial(&other, &ck, &obs, &small_config(), false).unwrap();
        assert_ne!(a.latents, c.latents);
    }

    #[test]
    fn rejects_mismatches() {
        let (ck, obs) = tiny();
        let cfg = small_config();
        let wrong = TrialSpec { steps: 6, ..TrialSpec::new(ProfileName::Rigid, "A", "B", 0) };
        assert!(run_trial(&wrong, &ck, &obs, &cfg, false).is_err());
        let short = TrialSpec { steps: 2, ..TrialSpec::new(ProfileName::Moderate, "A", "B", 0) };
        assert!(run_trial(&short, &ck, &obs, &cfg, false).is_err());
        let unknown = TrialSpec { steps: 6, ..TrialSpec::new(ProfileName::Moderate, "A", "Z", 0) };
        assert!(run_trial(&unknown, &ck, &obs, &cfg, false).is_err());
    }

    #[test]
    fn passive_human_injects_nothing() {
        let (ck, obs) = tiny();
        let mut cfg = small_config();
        cfg.human.gain = 0.0;
        let spec = TrialSpec { steps: 6, ..TrialSpec::new(ProfileName::Moderate, "A", "C", 0) };
        let rec = run_trial(&spec, &ck, &obs, &cfg, true).unwrap();
        assert!(rec.torque_series.iter().all(|t| *t < 1e-9));
        assert!(rec.controller.iter().all(|r| r.mode == crate::control::Mode::Active));
    }

    #[test]
    fn matrix_counts_and_tables() {
        let (ck, obs) = tiny();
        let labels = ck.labels.clone();
        let pairs = incongruent_pairs(&labels);
        assert_eq!(pairs.len(), 6);
        assert_eq!(matrix_specs(&ProfileName::ALL, &pairs, 3, 300, 0).len(), 54);

        let one = matrix_specs(&[ProfileName::Moderate], &pairs[..1], 1, 5, 0);
        let res = run_matrix(&one, &[ck.clone()], &obs, &small_config(), None).unwrap();
        assert_eq!(res.summaries.len(), 1);

        let two = matrix_specs(&[ProfileName::Moderate], &pairs[..2], 2, 5, 0);
        let dir = tempfile::tempdir().unwrap();
        let res = run_matrix(&two, &[ck.clone()], &obs, &small_config(), Some(dir.path())).unwrap();
        assert_eq!(res.summaries.len(), 4);
        for f in ["spec.json", "network_ticks.csv", "controller_ticks.csv", "latents.jsonl"] {
            assert!(dir.path().join("moderate_AB_1").join(f).exists(), "{f}");
        }
        let mut t3 = Vec::new();
        res.write_torque_table(&mut t3).unwrap();
        let t3 = String::from_utf8(t3).unwrap();
        // header + (mean, std) × pairs
        assert_eq!(t3.lines().count(), 1 + 2 * 2);
        let mut t2 = Vec::new();
        res.write_probs_table(&mut t2).unwrap();
        assert_eq!(String::from_utf8(t2).unwrap().lines().count(), 1 + 2);

        let missing = matrix_specs(&[ProfileName::Rigid], &pairs[..1], 1, 5, 0);
        assert!(matches!(
            run_matrix(&missing, &[ck], &obs, &small_config(), None),
            Err(Error::MissingProfile(_))
        ));
    }

    #[test]
    fn failing_trial_does_not_stop_matrix() {
        let (ck, obs) = tiny();
        let mut specs = matrix_specs(&[ProfileName::Moderate], &[("A".into(), "B".into())], 1, 5, 0);
        specs.insert(0, TrialSpec { steps: 5, ..TrialSpec::new(ProfileName::Moderate, "A", "Q", 0) });
        let res = run_matrix(&specs, &[ck], &obs, &small_config(), None).unwrap();
        assert_eq!(res.failures.len(), 1);
        assert_eq!(res.summaries.len(), 1);
    }

    #[test]
    fn script_interpolates_and_loops() {
        let set = make_primitives(&PrimitiveSpec::default()).unwrap();
        let a = &set.trajectories[0];
        assert_eq!(script_posture(a, 3.0), a.posture(3).to_vec());
        assert_eq!(script_posture(a, 93.0), a.posture(3).to_vec());
        let mid = script_posture(a, 89.5);
        for j in 0..12 {
            let want = 0.5 * (a.values[[89, j]] + a.values[[0, j]]);
            assert!((mid[j] - want).abs() < 1e-12);
        }
    }
}
