use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use pvrnn_hri::analysis::{
    self, criteria, fit_observer, generation_mse, latent_pca, run_transition, split_by_steps, training_trend, Check,
    ObserverNet, TransitionConfig,
};
use pvrnn_hri::checkpoint::Checkpoint;
use pvrnn_hri::config::RunConfig;
use pvrnn_hri::control::scenario::{run_scenario, Scenario};
use pvrnn_hri::encoding::Trajectory;
use pvrnn_hri::primitives::{make_primitives, LABELS};
use pvrnn_hri::pvrnn::GenerationMode;
use pvrnn_hri::session::{incongruent_pairs, matrix_specs, run_matrix, run_trial, SessionConfig, TrialSpec};
use pvrnn_hri::trainer::{read_curves_csv, write_curves_csv, CognitiveProfile, ProfileName, Trainer};
use pvrnn_hri::NETWORK_RATE_HZ;

use crate::{
    AnalyzeArgs, CliError, CliResult, GenDataArgs, GenerateArgs, MatrixArgs, ModeArg, RegressArgs, ScenarioArgs,
    TrainArgs, TrialArgs,
};

/// Relative tolerance for "final deficit close to its minimum".
pub const DEFICIT_TOL: f64 = 0.05;
/// Trailing-mean window over epochs for training trends.
pub const TREND_SMOOTH: usize = 50;

pub fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Usage(format!("config file {} not found", p.display())));
            }
            Ok(RunConfig::load(p)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn require_file(path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("file {} not found", path.display())))
    }
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    require_file(path)?;
    Ok(Checkpoint::load(path)?)
}

/// `path` itself, or `<path>/<profile>.json` when it is a directory.
pub fn checkpoint_path(path: &Path, profile: ProfileName) -> PathBuf {
    if path.is_dir() {
        path.join(format!("{profile}.json"))
    } else {
        path.to_path_buf()
    }
}

fn load_set(dir: &Path, profiles: &[ProfileName]) -> CliResult<Vec<Checkpoint>> {
    if !dir.is_dir() {
        return Err(CliError::Usage(format!("checkpoint directory {} not found", dir.display())));
    }
    profiles.iter().map(|&p| load_checkpoint(&dir.join(format!("{p}.json")))).collect()
}

pub fn load_trajectory(path: &Path) -> CliResult<Trajectory> {
    require_file(path)?;
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        let f = fs::File::open(path).map_err(|e| io_err(path, e))?;
        Ok(Trajectory::from_csv_reader(f, NETWORK_RATE_HZ, None)?)
    } else {
        Ok(Trajectory::load(path)?)
    }
}

/// Observer from file, or fitted on the checkpoint's primitives.
pub fn observer_for(config: &RunConfig, path: Option<&Path>, ck: &Checkpoint) -> CliResult<ObserverNet> {
    match path {
        Some(p) => {
            require_file(p)?;
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let net: ObserverNet = serde_json::from_str(&text).map_err(pvrnn_hri::Error::from)?;
            if net.inputs() != ck.config.output_dims || net.labels != ck.labels {
                return Err(CliError::Usage(format!("observer {} does not match the checkpoint", p.display())));
            }
            Ok(net)
        }
        None => {
            let rep = fit_observer(ck.labels.clone(), &ck.dataset, &config.observer)?;
            eprintln!("observer fitted: held-out accuracy {:.3}", rep.test_accuracy);
            Ok(rep.net)
        }
    }
}

fn session_config(config: &RunConfig, gain: Option<f64>) -> SessionConfig {
    let mut s = config.session.clone();
    if let Some(g) = gain {
        s.human.gain = g;
    }
    s
}

fn report(checks: &[Check], out: &Path) -> CliResult {
    for c in checks {
        println!("{c}");
    }
    write_file(&out.join("checks.json"), serde_json::to_string_pretty(checks).map_err(pvrnn_hri::Error::from)?)?;
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::Check(failed));
    }
    Ok(())
}

pub fn gen_data(config: &RunConfig, args: GenDataArgs) -> CliResult {
    let set = make_primitives(&config.primitives)?;
    create_dir(&args.out)?;
    for (label, traj) in set.labels.iter().zip(&set.trajectories) {
        traj.save(&args.out.join(format!("{label}.json")))?;
        let path = args.out.join(format!("{label}.csv"));
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        traj.write_csv(f)?;
    }
    let mut obs_cfg = config.observer.clone();
    if let Some(s) = args.seed {
        obs_cfg.seed = s;
    }
    let rep = fit_observer(set.labels.clone(), &set.trajectories, &obs_cfg)?;
    write_file(&args.out.join("observer.json"), serde_json::to_string(&rep.net).map_err(pvrnn_hri::Error::from)?)?;
    println!(
        "wrote {} primitives to {}; observer accuracy train {:.3} held-out {:.3}",
        set.labels.len(),
        args.out.display(),
        rep.train_accuracy,
        rep.test_accuracy
    );
    Ok(())
}

fn training_data(config: &RunConfig, data: Option<&Path>) -> CliResult<(Vec<String>, Vec<Trajectory>)> {
    match data {
        None => {
            let set = make_primitives(&config.primitives)?;
            Ok((set.labels, set.trajectories))
        }
        Some(dir) => {
            let mut labels = Vec::new();
            let mut trajs = Vec::new();
            for l in LABELS {
                trajs.push(load_trajectory(&dir.join(format!("{l}.json")))?);
                labels.push(l.to_string());
            }
            Ok((labels, trajs))
        }
    }
}

pub fn train(config: &RunConfig, args: TrainArgs) -> CliResult {
    let profiles: Vec<ProfileName> = if args.profiles.is_empty() {
        ProfileName::ALL.to_vec()
    } else {
        args.profiles.iter().map(|&p| p.into()).collect()
    };
    let mut train_cfg = config.train.clone();
    let mut net = config.network.clone();
    if let Some(e) = args.epochs {
        train_cfg.epochs = e;
    }
    if let Some(s) = args.seed {
        train_cfg.seed = s;
        net.seed = s;
    }
    create_dir(&args.out)?;
    for profile in profiles {
        let ck_path = args.out.join(format!("{profile}.json"));
        let curves_path = args.out.join(format!("{profile}_curves.csv"));
        let mut earlier = Vec::new();
        let mut trainer = if args.resume && ck_path.is_file() {
            let ck = Checkpoint::load(&ck_path)?;
            if ck.profile.name != profile {
                return Err(CliError::Usage(format!("{} holds profile {}", ck_path.display(), ck.profile.name)));
            }
            if curves_path.is_file() {
                let f = fs::File::open(&curves_path).map_err(|e| io_err(&curves_path, e))?;
                earlier = read_curves_csv(f)?;
                earlier.truncate(ck.epochs_done);
            }
            let mut t = Trainer::from_checkpoint(ck)?;
            t.train.epochs = train_cfg.epochs;
            t
        } else {
            let (labels, data) = training_data(config, args.data.as_deref())?;
            Trainer::new(
                net.clone(),
                config.coding()?,
                CognitiveProfile::reference(profile),
                train_cfg.clone(),
                labels,
                data,
            )?
        };
        let ceiling = trainer.reconstruction_ceiling();
        while trainer.epochs_done() < train_cfg.epochs {
            let e = trainer.epoch()?;
            if args.log_every > 0 && (e.epoch % args.log_every == 0 || e.epoch == train_cfg.epochs) {
                eprintln!(
                    "{profile} epoch {}: deficit {:.4} kl {:.4}",
                    e.epoch,
                    ceiling - e.reconstruction,
                    e.regulation
                );
            }
        }
        trainer.to_checkpoint().save(&ck_path)?;
        earlier.extend_from_slice(&trainer.log);
        let f = fs::File::create(&curves_path).map_err(|e| io_err(&curves_path, e))?;
        write_curves_csv(&earlier, f)?;
        println!("{profile}: {} epochs -> {}", trainer.epochs_done(), ck_path.display());
    }
    Ok(())
}

pub fn generate(args: GenerateArgs) -> CliResult {
    let ck = load_checkpoint(&args.checkpoint)?;
    let mode = match args.mode {
        ModeArg::Mean => GenerationMode::Mean,
        ModeArg::Sampled => GenerationMode::Sampled,
    };
    create_dir(&args.out)?;
    for (label, traj) in ck.labels.iter().zip(analysis::generate_primitives(&ck, mode, args.seed)?) {
        traj.save(&args.out.join(format!("{label}.json")))?;
    }
    let mse = generation_mse(&ck, mode, args.draws, args.seed)?;
    let mut csv = String::from("step,mse\n");
    for (t, v) in mse.per_step.iter().enumerate() {
        let _ = writeln!(csv, "{t},{v}");
    }
    write_file(&args.out.join("mse.csv"), csv)?;
    println!("{} generation mean MSE {:.6}", ck.profile.name, mse.mean);
    Ok(())
}

pub fn regress(config: &RunConfig, args: RegressArgs) -> CliResult {
    let ck = load_checkpoint(&args.checkpoint)?;
    let evidence = load_trajectory(&args.evidence)?;
    let intent = ck
        .label_index(&args.intent)
        .ok_or_else(|| CliError::Usage(format!("unknown primitive `{}`", args.intent)))?;
    let observer = observer_for(config, args.observer.as_deref(), &ck)?;
    let tc = TransitionConfig {
        regression: config.session.regression.clone(),
        steps: args.steps,
        ..TransitionConfig::default()
    };
    let run = analysis::regress_offline(&ck, &observer, &tc, intent, &evidence, args.seed)?;
    create_dir(&args.out)?;
    let pca = latent_pca(&ck)?;
    let path = args.out.join("regress.csv");
    let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    run.write_csv(&ck.labels, Some(&pca), f)?;
    run.prediction_trajectory(&ck)?.save(&args.out.join("predictions.json"))?;
    let last = run.labels.last().map(|&l| ck.labels[l].as_str()).unwrap_or("-");
    println!("{} ticks; final prediction labelled {last}", run.labels.len());
    Ok(())
}

pub fn trial(config: &RunConfig, args: TrialArgs) -> CliResult {
    let profile: ProfileName = args.profile.into();
    let ck = load_checkpoint(&checkpoint_path(&args.checkpoints, profile))?;
    for l in [&args.robot, &args.human] {
        if ck.label_index(l).is_none() {
            return Err(CliError::Usage(format!("unknown primitive `{l}`")));
        }
    }
    let observer = observer_for(config, args.observer.as_deref(), &ck)?;
    let mut spec = TrialSpec::new(profile, &args.robot, &args.human, args.seed);
    spec.steps = args.steps;
    let rec = run_trial(&spec, &ck, &observer, &session_config(config, args.gain), true)?;
    rec.save(&args.out)?;
    let p = rec.probs()?;
    let t = rec.torque();
    println!(
        "{profile} {}: p(I) {:.3} p(B) {:.3} torque {:.3} ± {:.3}",
        spec.pair(),
        p.p_intent,
        p.p_behavior,
        t.mean,
        t.std
    );
    Ok(())
}

pub fn matrix(config: &RunConfig, args: MatrixArgs) -> CliResult {
    if args.repeats == 0 {
        return Err(CliError::Usage("--repeats must be at least 1".into()));
    }
    let cks = load_set(&args.checkpoints, &ProfileName::ALL)?;
    let observer = observer_for(config, args.observer.as_deref(), &cks[0])?;
    let mut pairs = incongruent_pairs(&cks[0].labels);
    if args.congruent || args.check {
        pairs.extend(cks[0].labels.iter().map(|l| (l.clone(), l.clone())));
    }
    let specs = matrix_specs(&ProfileName::ALL, &pairs, args.repeats, args.steps, args.seed);
    create_dir(&args.out)?;
    let res = run_matrix(&specs, &cks, &observer, &session_config(config, args.gain), Some(&args.out))?;
    for f in &res.failures {
        eprintln!("trial {} {} #{} failed: {}", f.spec.profile, f.spec.pair(), f.spec.repeat, f.error);
    }
    let mut incongruent = res.clone();
    incongruent.summaries.retain(|s| !s.spec.congruent());
    let mut buf = Vec::new();
    incongruent.write_probs_table(&mut buf)?;
    write_file(&args.out.join("probs.csv"), &buf)?;
    buf.clear();
    res.write_torque_table(&mut buf)?;
    write_file(&args.out.join("torque.csv"), &buf)?;
    write_file(&args.out.join("summary.json"), serde_json::to_string_pretty(&res).map_err(pvrnn_hri::Error::from)?)?;
    println!("{} trials, {} failed -> {}", specs.len(), res.failures.len(), args.out.display());
    for p in ProfileName::ALL {
        if let (Some(inc), con) = criteria::protocol_means(&res, p) {
            let con = con.map_or("-".to_string(), |v| format!("{v:.3}"));
            println!(
                "{p}: incongruent p(I) {:.3} p(B) {:.3} torque {:.3}; congruent torque {con}",
                inc[0], inc[1], inc[2]
            );
        }
    }
    if args.check {
        return report(&criteria::protocol_checks(&res), &args.out);
    }
    if !res.failures.is_empty() {
        return Err(CliError::Io(format!("{} trials failed", res.failures.len())));
    }
    Ok(())
}

pub fn analyze(config: &RunConfig, args: AnalyzeArgs) -> CliResult {
    let cks = load_set(&args.checkpoints, &ProfileName::ALL)?;
    create_dir(&args.out)?;
    let mut checks = Vec::new();

    // Observer on held-out steps of the frozen primitives.
    let observer = observer_for(config, args.observer.as_deref(), &cks[0])?;
    let (_, test) = split_by_steps(&cks[0].dataset, config.observer.holdout_every)?;
    let acc = observer.accuracy(&test);
    checks.push(Check::new("observer.held_out", acc == 1.0, format!("accuracy {acc:.4} on {} postures", test.labels.len())));

    // Training trends from the curves written by `train`.
    let mut trends = Vec::new();
    let mut csv = String::from("profile,final_deficit,min_deficit,final_kl\n");
    for ck in &cks {
        let path = args.checkpoints.join(format!("{}_curves.csv", ck.profile.name));
        if !path.is_file() {
            continue;
        }
        let f = fs::File::open(&path).map_err(|e| io_err(&path, e))?;
        let t = training_trend(&read_curves_csv(f)?, analysis::reconstruction_ceiling(ck)?, TREND_SMOOTH)?;
        let _ = writeln!(csv, "{},{},{},{}", ck.profile.name, t.final_deficit, t.min_deficit, t.final_regulation);
        trends.push((ck.profile.name, t));
    }
    write_file(&args.out.join("training_trends.csv"), csv)?;
    if trends.len() == cks.len() {
        checks.extend(criteria::training_checks(&trends, DEFICIT_TOL));
    } else {
        eprintln!("training curves missing; trend checks skipped");
    }

    // Generation MSE per step, both modes.
    let mut curves = Vec::new();
    for ck in &cks {
        let m = generation_mse(ck, GenerationMode::Mean, 1, args.seed)?;
        let s = generation_mse(ck, GenerationMode::Sampled, args.draws, args.seed)?;
        curves.push((ck.profile.name, m, s));
    }
    let mut csv = String::from("step");
    for (p, _, _) in &curves {
        let _ = write!(csv, ",{p}_mean,{p}_sampled");
    }
    csv.push('\n');
    for t in 0..curves[0].1.per_step.len() {
        let _ = write!(csv, "{t}");
        for (_, m, s) in &curves {
            let _ = write!(csv, ",{},{}", m.per_step[t], s.per_step[t]);
        }
        csv.push('\n');
    }
    write_file(&args.out.join("generation_mse.csv"), csv)?;
    let means: Vec<_> = curves.iter().map(|(p, m, _)| (*p, m.mean)).collect();
    let flex = curves.iter().find(|(p, _, _)| *p == ProfileName::Flexible).map(|(_, _, s)| s.mean);
    if let Some(flex) = flex {
        checks.push(criteria::generation_check(&means, flex));
    }

    // Transitions from one intention to every other primitive, and the PCA frames.
    let tc = TransitionConfig { regression: config.session.regression.clone(), ..TransitionConfig::default() };
    let mut runs = Vec::new();
    let mut csv = String::from("profile,intent,evidence,converged_at,tail\n");
    let mut pca_csv = String::from("profile,primitive,step,pc1,pc2\n");
    for ck in &cks {
        let intent = ck
            .label_index(&args.intent)
            .ok_or_else(|| CliError::Usage(format!("unknown primitive `{}`", args.intent)))?;
        let pca = latent_pca(ck)?;
        let per = pca.projected.len() / ck.labels.len().max(1);
        for (k, pt) in pca.projected.iter().enumerate() {
            let _ = writeln!(pca_csv, "{},{},{},{},{}", ck.profile.name, ck.labels[k / per], k % per, pt[0], pt[1]);
        }
        for ev in 0..ck.labels.len() {
            if ev == intent {
                continue;
            }
            let run = run_transition(ck, &observer, &tc, intent, ev, args.seed)?;
            let at = run.converged_at.map_or(String::new(), |t| t.to_string());
            let _ = writeln!(csv, "{},{},{},{at},{}", ck.profile.name, ck.labels[intent], ck.labels[ev], run.tail);
            let path = args.out.join(format!("transition_{}_{}{}.csv", ck.profile.name, ck.labels[intent], ck.labels[ev]));
            let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
            run.write_csv(&ck.labels, Some(&pca), f)?;
            runs.push((ck.profile.name, run));
        }
    }
    write_file(&args.out.join("transitions.csv"), csv)?;
    write_file(&args.out.join("pca_generation.csv"), pca_csv)?;
    checks.extend(criteria::transition_checks(&runs, &cks[0].labels, tc.frac, tc.steps));

    if args.check {
        return report(&checks, &args.out);
    }
    for c in &checks {
        println!("{c}");
    }
    Ok(())
}

pub fn scenario(args: ScenarioArgs) -> CliResult {
    if let Some(path) = &args.write_demo {
        let text = serde_json::to_string_pretty(&Scenario::pulse_demo()).map_err(pvrnn_hri::Error::from)?;
        write_file(path, text + "\n")?;
        println!("wrote {}", path.display());
        return Ok(());
    }
    let sc = match &args.script {
        Some(p) => {
            require_file(p)?;
            Scenario::from_json_str(&fs::read_to_string(p).map_err(|e| io_err(p, e))?)?
        }
        None => Scenario::pulse_demo(),
    };
    let run = run_scenario(&sc)?;
    match &args.out {
        Some(p) => {
            let f = fs::File::create(p).map_err(|e| io_err(p, e))?;
            run.write_csv(f)?;
            for j in 0..run.dims {
                let sw: Vec<String> = run.switches(j).iter().map(|(t, m)| format!("{t:.2}s {}", m.as_str())).collect();
                println!("joint {j}: {} switches [{}]", sw.len(), sw.join(", "));
            }
        }
        None => run.write_csv(std::io::stdout().lock())?,
    }
    Ok(())
}
