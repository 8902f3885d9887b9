//! Live interaction: the session engine driven by client commands instead of
//! the scripted human, and the JSON messages exchanged with the client.
//!
//! Commands are queued as they arrive and applied only at the next fast tick
//! boundary. A held torque command stays in force until replaced.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::analysis::{latent_pca, Classification, ObserverNet, Pca2Result};
use crate::checkpoint::Checkpoint;
use crate::control::{clamp_torque, ControllerGains, Mode};
use crate::error::{Error, Result};
use crate::regression::LatentSnapshot;
use crate::session::{Engine, SessionConfig};
use crate::trainer::ProfileName;

pub const WIRE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMessage {
    pub schema_version: u32,
    /// Fast tick index.
    pub t: u64,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Hello {
        server: String,
        profile: ProfileName,
        labels: Vec<String>,
        joints: usize,
    },
    Config {
        /// Per-joint bound applied to client torques (Nm).
        torque_bound: f64,
        fast_rate_hz: f64,
        network_rate_hz: f64,
        limits: Vec<(f64, f64)>,
        gains: ControllerGains,
        intent: String,
        pca: PcaFrame,
    },
    State {
        t_us: u64,
        network_tick: usize,
        theta: Vec<f64>,
        theta_net: Vec<f64>,
        tau_ext: Vec<f64>,
        modes: Vec<Mode>,
        /// Torques applied during this tick, after clamping.
        injected: Vec<f64>,
        intent: String,
    },
    TorqueCmd {
        joint: usize,
        torque: f64,
    },
    IntentCmd {
        intent: String,
    },
    Latent {
        snapshot: LatentSnapshot,
        /// Top-layer d in the announced PCA frame.
        pca: [f64; 2],
    },
    Metrics {
        network_tick: usize,
        intention: Classification,
        behavior: Classification,
        /// Mean Σ_j |τ̂^ext| over the last network period.
        tau_ext_sum: f64,
    },
    Error {
        message: String,
    },
}

/// PCA frame of the top layer and the bounding box of generation latents in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaFrame {
    pub mean: Vec<f64>,
    pub axes: [Vec<f64>; 2],
    pub bounds: [(f64, f64); 2],
}

impl PcaFrame {
    pub fn from_pca(p: &Pca2Result) -> Self {
        let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 2];
        for pt in &p.projected {
            for c in 0..2 {
                bounds[c].0 = bounds[c].0.min(pt[c]);
                bounds[c].1 = bounds[c].1.max(pt[c]);
            }
        }
        Self { mean: p.mean.clone(), axes: p.axes.clone(), bounds }
    }

    fn project(&self, x: &[f64]) -> [f64; 2] {
        let mut out = [0.0; 2];
        for (o, axis) in out.iter_mut().zip(&self.axes) {
            *o = x.iter().zip(&self.mean).zip(axis).map(|((v, m), a)| (v - m) * a).sum();
        }
        out
    }
}

impl SessionMessage {
    pub fn new(t: u64, body: Body) -> Self {
        Self { schema_version: WIRE_SCHEMA_VERSION, t, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("messages always serialize")
    }

    /// Parse and check the schema version. Unknown fields are ignored.
    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            schema_version: u32,
        }
        let h: Header = serde_json::from_str(s)?;
        if h.schema_version != WIRE_SCHEMA_VERSION {
            return Err(Error::Version { found: h.schema_version, expected: WIRE_SCHEMA_VERSION });
        }
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Command {
    Torque { joint: usize, torque: f64 },
    Intent(usize),
}

/// Step-driven live session. The caller paces ticks (wall clock or tests).
#[derive(Debug, Clone)]
pub struct LiveSession {
    ck: Checkpoint,
    observer: ObserverNet,
    engine: Engine,
    pca: PcaFrame,
    queue: VecDeque<Command>,
    held: Vec<f64>,
    bound: f64,
    seed: u64,
    switches: u64,
    ticks: u64,
    period: (f64, usize),
}

impl LiveSession {
    pub fn new(ck: Checkpoint, observer: ObserverNet, config: &SessionConfig, intent: &str, seed: u64) -> Result<Self> {
        let idx = ck
            .label_index(intent)
            .ok_or_else(|| Error::Config(format!("unknown primitive `{intent}`")))?;
        if observer.inputs() != ck.config.output_dims {
            return Err(Error::Shape("observer and network differ in posture width".into()));
        }
        let engine = Engine::new(&ck, config, idx, seed)?;
        let pca = PcaFrame::from_pca(&latent_pca(&ck)?);
        Ok(Self {
            held: vec![0.0; ck.config.output_dims],
            bound: config.human.bound,
            pca,
            engine,
            ck,
            observer,
            queue: VecDeque::new(),
            seed,
            switches: 0,
            ticks: 0,
            period: (0.0, 0),
        })
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn fast_tick_us(&self) -> u64 {
        self.engine.fast_tick_us()
    }

    pub fn torque_bound(&self) -> f64 {
        self.bound
    }

    pub fn intent_label(&self) -> &str {
        &self.ck.labels[self.engine.intent()]
    }

    /// `hello` and `config`, sent on connect.
    pub fn greeting(&self) -> Vec<SessionMessage> {
        let plant = self.engine.plant_config();
        vec![
            SessionMessage::new(
                self.ticks,
                Body::Hello {
                    server: format!("pvhri {}", env!("CARGO_PKG_VERSION")),
                    profile: self.ck.profile.name,
                    labels: self.ck.labels.clone(),
                    joints: self.ck.config.output_dims,
                },
            ),
            SessionMessage::new(
                self.ticks,
                Body::Config {
                    torque_bound: self.bound,
                    fast_rate_hz: plant.rate_hz,
                    network_rate_hz: 1e6 / self.engine.network_tick_us() as f64,
                    limits: plant.limits.clone(),
                    gains: self.engine.gains().clone(),
                    intent: self.intent_label().to_string(),
                    pca: self.pca.clone(),
                },
            ),
        ]
    }

    /// Queue a client message. Returns the immediate reply, if any: the
    /// clamped echo of a torque command or an error.
    pub fn submit(&mut self, msg: &SessionMessage) -> Option<SessionMessage> {
        match &msg.body {
            Body::TorqueCmd { joint, torque } => {
                if *joint >= self.held.len() {
                    return Some(self.error(format!("joint {joint} out of range 0..{}", self.held.len())));
                }
                let torque = clamp_torque(*torque, self.bound);
                self.queue.push_back(Command::Torque { joint: *joint, torque });
                Some(SessionMessage::new(self.ticks, Body::TorqueCmd { joint: *joint, torque }))
            }
            Body::IntentCmd { intent } => match self.ck.label_index(intent) {
                Some(i) => {
                    self.queue.push_back(Command::Intent(i));
                    None
                }
                None => Some(self.error(format!("unknown primitive `{intent}`"))),
            },
            _ => Some(self.error("only torque_cmd and intent_cmd are accepted".into())),
        }
    }

    /// The client let go: drop queued commands and zero the held torques.
    pub fn release(&mut self) {
        self.queue.clear();
        self.held.iter_mut().for_each(|t| *t = 0.0);
    }

    /// Parse raw text and queue it; malformed input yields an error message.
    pub fn submit_text(&mut self, text: &str) -> Option<SessionMessage> {
        match SessionMessage::from_json(text) {
            Ok(m) => self.submit(&m),
            Err(e) => Some(self.error(e.to_string())),
        }
    }

    fn error(&self, message: String) -> SessionMessage {
        SessionMessage::new(self.ticks, Body::Error { message })
    }

    /// Drain the queue, run a network tick if due, then one fast tick.
    /// Returns the messages produced: latent and metrics on network ticks, and
    /// always one state.
    pub fn step(&mut self) -> Result<Vec<SessionMessage>> {
        let mut out = Vec::new();
        while let Some(c) = self.queue.pop_front() {
            match c {
                Command::Torque { joint, torque } => self.held[joint] = torque,
                Command::Intent(i) => {
                    self.switches += 1;
                    let seed = self.seed.wrapping_add(self.switches);
                    self.engine.switch_intent(&self.ck, i, seed)?;
                    // Publish the new intention now rather than at the next scheduled tick.
                    out.extend(self.network_tick()?);
                }
            }
        }
        if self.engine.network_due() {
            out.extend(self.network_tick()?);
        }
        let step = self.engine.fast_tick(&self.held.clone())?;
        self.period.0 += step.tau_ext_sum();
        self.period.1 += 1;
        out.push(SessionMessage::new(
            self.ticks,
            Body::State {
                t_us: step.t_us,
                network_tick: self.engine.network_ticks().saturating_sub(1),
                theta: step.theta,
                theta_net: self.engine.theta_net().to_vec(),
                tau_ext: step.tau_ext,
                modes: step.modes,
                injected: step.injected,
                intent: self.intent_label().to_string(),
            },
        ));
        self.ticks += 1;
        Ok(out)
    }

    fn network_tick(&mut self) -> Result<Vec<SessionMessage>> {
        let tau_ext_sum = self.period.0 / self.period.1.max(1) as f64;
        self.period = (0.0, 0);
        let s = self.engine.network_tick(&self.ck, &self.observer)?;
        let top = s.snapshot.d.last().cloned().unwrap_or_default();
        let pca = self.pca.project(&top);
        Ok(vec![
            SessionMessage::new(self.ticks, Body::Latent { snapshot: s.snapshot, pca }),
            SessionMessage::new(
                self.ticks,
                Body::Metrics { network_tick: s.tick.n, intention: s.intention, behavior: s.behavior, tau_ext_sum },
            ),
        ])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::tiny;

    fn session() -> LiveSession {
        let (ck, obs) = tiny();
        let config = SessionConfig {
            regression: crate::regression::RegressionConfig { window: 4, inner_epochs: 2, ..Default::default() },
            ..SessionConfig::default()
        };
        LiveSession::new(ck, obs, &config, "A", 5).unwrap()
    }

    fn state(msgs: &[SessionMessage]) -> (Vec<f64>, Vec<f64>, String) {
        msgs.iter()
            .find_map(|m| match &m.body {
                Body::State { injected, tau_ext, intent, .. } => Some((injected.clone(), tau_ext.clone(), intent.clone())),
                _ => None,
            })
            .expect("state every tick")
    }

    #[test]
    fn greeting_then_state_every_tick() {
        let mut s = session();
        let g = s.greeting();
        assert!(matches!(g[0].body, Body::Hello { joints: 3, .. }));
        assert!(matches!(g[1].body, Body::Config { torque_bound, .. } if torque_bound == 3.0));
        let first = s.step().unwrap();
        // Network tick at t = 0: latent, metrics, then state.
        assert_eq!(first.len(), 3);
        for _ in 0..30 {
            let m = s.step().unwrap();
            assert_eq!(m.iter().filter(|m| matches!(m.body, Body::State { .. })).count(), 1);
        }
    }

    #[test]
    fn torque_is_clamped_and_applied_next_tick() {
        let mut s = session();
        s.step().unwrap();
        let ack = s.submit_text(&SessionMessage::new(0, Body::TorqueCmd { joint: 1, torque: 9.0 }).to_json());
        assert_eq!(ack.unwrap().body, Body::TorqueCmd { joint: 1, torque: 3.0 });
        let (injected, _, _) = state(&s.step().unwrap());
        assert_eq!(injected, vec![0.0, 3.0, 0.0]);
        // The plant reports it one tick later as external torque.
        let (_, tau_ext, _) = state(&s.step().unwrap());
        assert!((tau_ext[1] - 3.0).abs() < 1e-9);
        s.release();
        let (injected, _, _) = state(&s.step().unwrap());
        assert_eq!(injected, vec![0.0; 3]);
    }

    #[test]
    fn silent_client_matches_passive_human() {
        let (ck, obs) = tiny();
        let config = SessionConfig {
            regression: crate::regression::RegressionConfig { window: 4, inner_epochs: 2, ..Default::default() },
            ..SessionConfig::default()
        };
        let mut live = LiveSession::new(ck.clone(), obs.clone(), &config, "B", 2).unwrap();
        let mut engine = Engine::new(&ck, &config, 1, 2).unwrap();
        for _ in 0..40 {
            if engine.network_due() {
                engine.network_tick(&ck, &obs).unwrap();
            }
            let a = engine.fast_tick(&[0.0; 3]).unwrap();
            let (_, tau_ext, _) = state(&live.step().unwrap());
            assert_eq!(a.tau_ext, tau_ext);
        }
    }

    #[test]
    fn intent_switch_and_errors() {
        let mut s = session();
        s.step().unwrap();
        assert!(s.submit_text(&SessionMessage::new(0, Body::IntentCmd { intent: "C".into() }).to_json()).is_none());
        let msgs = s.step().unwrap();
        assert!(msgs.iter().any(|m| matches!(m.body, Body::Metrics { .. })));
        assert_eq!(state(&msgs).2, "C");

        let bad = s.submit_text("{not json");
        assert!(matches!(bad.unwrap().body, Body::Error { .. }));
        let joint = s.submit(&SessionMessage::new(0, Body::TorqueCmd { joint: 9, torque: 1.0 }));
        assert!(matches!(joint.unwrap().body, Body::Error { .. }));
        let wrong = s.submit(&SessionMessage::new(0, Body::Error { message: "x".into() }));
        assert!(matches!(wrong.unwrap().body, Body::Error { .. }));
        // The session keeps running after errors.
        s.step().unwrap();
    }

    #[test]
    fn wire_roundtrip_and_tagging() {
        let m = SessionMessage::new(7, Body::TorqueCmd { joint: 2, torque: -1.25 });
        let s = m.to_json();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["type"], "torque_cmd");
        assert_eq!(v["schema_version"], WIRE_SCHEMA_VERSION);
        assert_eq!(v["payload"]["joint"], 2);
        assert_eq!(SessionMessage::from_json(&s).unwrap(), m);
    }

    #[test]
    fn unknown_fields_ignored_unknown_types_rejected() {
        let ok = r#"{"schema_version":1,"t":0,"type":"intent_cmd","payload":{"intent":"B","extra":1},"more":true}"#;
        assert_eq!(
            SessionMessage::from_json(ok).unwrap().body,
            Body::IntentCmd { intent: "B".into() }
        );
        let bad = r#"{"schema_version":1,"t":0,"type":"teleport","payload":{}}"#;
        assert!(SessionMessage::from_json(bad).is_err());
        let old = r#"{"schema_version":0,"t":0,"type":"intent_cmd","payload":{"intent":"B"}}"#;
        assert!(matches!(SessionMessage::from_json(old), Err(Error::Version { .. })));
        assert!(SessionMessage::from_json("[]").is_err());
    }
}
