//! Scripted controller runs: a reference trajectory, a plant, gains and a list
//! of square torque pulses. Runs are bit-reproducible from the JSON script.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{inverse_dynamics, ControllerGains, HybridController, Mode, Plant, PlantConfig};
use crate::error::{Error, Result};

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub joint: usize,
    /// Seconds, inclusive.
    pub t_start: f64,
    /// Seconds, exclusive.
    pub t_end: f64,
    pub torque: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Reference {
    /// `offset + amplitude·sin(2π f t + j·phase_step)` on joint `j`.
    Sinusoid {
        offset: f64,
        amplitude: f64,
        freq_hz: f64,
        #[serde(default)]
        phase_step: f64,
    },
    Constant { posture: Vec<f64> },
}

impl Reference {
    pub fn at(&self, t: f64, dims: usize) -> Vec<f64> {
        match self {
            Reference::Sinusoid { offset, amplitude, freq_hz, phase_step } => (0..dims)
                .map(|j| offset + amplitude * (2.0 * PI * freq_hz * t + j as f64 * phase_step).sin())
                .collect(),
            Reference::Constant { posture } => posture.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub duration_s: f64,
    pub plant: PlantConfig,
    pub gains: ControllerGains,
    pub disturbances: Vec<Disturbance>,
    pub reference: Reference,
}

impl Scenario {
    /// Single joint tracking a 0.5 rad, 0.25 Hz sinusoid with a 2 Nm pulse over 4 s to 7 s.
    pub fn pulse_demo() -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            duration_s: 15.0,
            plant: PlantConfig::uniform(1, 1.5),
            gains: ControllerGains::default(),
            disturbances: vec![Disturbance { joint: 0, t_start: 4.0, t_end: 7.0, torque: 2.0 }],
            reference: Reference::Sinusoid { offset: 0.0, amplitude: 0.5, freq_hz: 0.25, phase_step: 0.0 },
        }
    }

    pub fn ticks(&self) -> usize {
        (self.duration_s * self.plant.rate_hz).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Version { found: self.schema_version, expected: SCENARIO_SCHEMA_VERSION });
        }
        self.plant.validate()?;
        self.gains.validate()?;
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::Config("duration must be positive".into()));
        }
        let dims = self.plant.dims();
        for d in &self.disturbances {
            if d.joint >= dims {
                return Err(Error::Config(format!("disturbance joint {} out of {dims}", d.joint)));
            }
            if !(d.t_start <= d.t_end && d.torque.is_finite()) {
                return Err(Error::Config("disturbance needs t_start <= t_end and finite torque".into()));
            }
        }
        match &self.reference {
            Reference::Constant { posture } if posture.len() != dims => {
                Err(Error::Shape(format!("reference posture has {} joints, plant {dims}", posture.len())))
            }
            Reference::Sinusoid { offset, amplitude, freq_hz, phase_step }
                if ![offset, amplitude, freq_hz, phase_step].iter().all(|v| v.is_finite()) =>
            {
                Err(Error::Config("reference parameters must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn injected(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.plant.dims()];
        for d in &self.disturbances {
            if t >= d.t_start && t < d.t_end {
                out[d.joint] += d.torque;
            }
        }
        out
    }
}

/// State seen by the controller on one joint at one tick, and what it commanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRow {
    pub t: f64,
    pub joint: usize,
    pub theta: f64,
    pub theta_net: f64,
    pub tau: f64,
    pub tau_ext: f64,
    pub mode: Mode,
    pub command: f64,
    pub limited: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub dims: usize,
    /// Tick-major, joint-minor.
    pub rows: Vec<TickRow>,
}

impl ScenarioRun {
    pub fn joint(&self, j: usize) -> impl Iterator<Item = &TickRow> {
        self.rows.iter().filter(move |r| r.joint == j)
    }

    /// Mode changes on joint `j` as (time, new mode).
    pub fn switches(&self, j: usize) -> Vec<(f64, Mode)> {
        let mut out = Vec::new();
        let mut prev = Mode::Active;
        for r in self.joint(j) {
            if r.mode != prev {
                out.push((r.t, r.mode));
                prev = r.mode;
            }
        }
        out
    }

    /// Largest per-tick change of the commanded target, any joint.
    pub fn max_command_step(&self, start: &[f64]) -> f64 {
        let mut prev = start.to_vec();
        let mut m = 0.0f64;
        for r in &self.rows {
            m = m.max((r.command - prev[r.joint]).abs());
            prev[r.joint] = r.command;
        }
        m
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_tick_rows(&self.rows, writer)
    }
}

/// Controller tick log as CSV.
pub fn write_tick_rows<W: Write>(rows: &[TickRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "joint", "theta", "theta_net", "tau", "tau_ext", "mode", "command", "limited"])?;
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.joint.to_string(),
            r.theta.to_string(),
            r.theta_net.to_string(),
            r.tau.to_string(),
            r.tau_ext.to_string(),
            r.mode.as_str().to_string(),
            r.command.to_string(),
            u8::from(r.limited).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run the script. At each tick the controller reads the latest measurements,
/// commands a target, and the plant advances with that tick's injected torque.
pub fn run_scenario(sc: &Scenario) -> Result<ScenarioRun> {
    sc.validate()?;
    let dims = sc.plant.dims();
    let dt = sc.plant.dt();
    let start = sc.reference.at(0.0, dims);
    let mut plant = Plant::new(sc.plant.clone(), &start)?;
    let mut ctl = HybridController::new(sc.gains.clone(), plant.theta())?;
    let mut limited = vec![false; dims];
    let mut rows = Vec::with_capacity(sc.ticks() * dims);
    for k in 0..sc.ticks() {
        let t = k as f64 * dt;
        let net = sc.reference.at(t, dims);
        let theta = plant.theta().to_vec();
        let tau = plant.tau().to_vec();
        let act = inverse_dynamics(plant.config(), &plant.history())?;
        let cmd = ctl.tick(&theta, &tau, &act, &net)?;
        for j in 0..dims {
            let js = &ctl.joints[j];
            rows.push(TickRow {
                t,
                joint: j,
                theta: theta[j],
                theta_net: net[j],
                tau: tau[j],
                tau_ext: js.tau_ext,
                mode: js.mode,
                command: cmd[j],
                limited: limited[j],
            });
        }
        let reading = plant.plant_step(&cmd, &sc.injected(t))?;
        limited = reading.limited;
    }
    Ok(ScenarioRun { dims, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_shape() {
        let sc = Scenario::pulse_demo();
        let run = run_scenario(&sc).unwrap();
        let sw = run.switches(0);
        assert_eq!(sw.len(), 2, "{sw:?}");
        assert_eq!(sw[0].1, Mode::Compliant);
        assert_eq!(sw[1].1, Mode::Active);
        assert!(sw[0].0 >= 4.0 && sw[0].0 < 4.1);
        assert!(sw[1].0 > 7.0);
        assert!(run.max_command_step(&[0.0]) <= sc.gains.delta_max + 1e-12);
        // Compliance lets the pulse move the joint well off the reference.
        let max_dev = run.joint(0).map(|r| (r.theta - r.theta_net).abs()).fold(0.0, f64::max);
        assert!(max_dev > 0.3, "{max_dev}");
        let settled = run.joint(0).filter(|r| r.t >= 12.0).all(|r| (r.theta - r.theta_net).abs() < 0.05);
        assert!(settled);
    }

    #[test]
    fn no_disturbance_stays_active_and_tracks() {
        let mut sc = Scenario::pulse_demo();
        sc.disturbances.clear();
        let run = run_scenario(&sc).unwrap();
        assert!(run.rows.iter().all(|r| r.mode == Mode::Active));
        assert!(run.rows.iter().all(|r| r.tau_ext.abs() < 1e-9));
        assert!(run.rows.iter().filter(|r| r.t > 1.0).all(|r| (r.theta - r.theta_net).abs() < 0.05));
    }

    #[test]
    fn json_roundtrip_and_bit_reproducible() {
        let sc = Scenario::pulse_demo();
        let s = serde_json::to_string_pretty(&sc).unwrap();
        let back = Scenario::from_json_str(&s).unwrap();
        assert_eq!(back, sc);
        let mut a = Vec::new();
        let mut b = Vec::new();
        run_scenario(&sc).unwrap().write_csv(&mut a).unwrap();
        run_scenario(&back).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_scripts() {
        let mut sc = Scenario::pulse_demo();
        sc.disturbances[0].joint = 3;
        assert!(sc.validate().is_err());
        let mut sc = Scenario::pulse_demo();
        sc.schema_version = 9;
        assert!(sc.validate().is_err());
        assert!(Scenario::from_json_str("{").is_err());
    }
}
