//! Scenario files, scenario execution and the four output artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{
    false_accept_rate, false_reject_rate, far_frr, Adversary, AdversaryConfig, AdversaryKind,
    LabeledOutcome, Population,
};
use crate::channel::ChannelConfig;
use crate::error::{ConfigError, HarnessError, ReportError, ScenarioError};
use crate::protocol::{
    fleet_cost_inspect, AccessReport, CostModel, Engine, FleetCost, GatewayPhase, Outcome,
    ProtocolParams, PufParams, Responder, Session, TrustPoint,
};
use crate::rng::RngStream;
use crate::trust::{attribute_set_label, AttributeKind, AttributeSet, TrustPolicy};

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "AUTHSIM_SEED";

fn default_attribute_sets() -> Vec<AttributeSet> {
    vec![
        [AttributeKind::Rssi].into_iter().collect(),
        [
            AttributeKind::Rssi,
            AttributeKind::Cfo,
            AttributeKind::Attack,
        ]
        .into_iter()
        .collect(),
    ]
}

fn default_adversaries() -> Vec<AdversaryConfig> {
    [
        AdversaryKind::Eavesdropper,
        AdversaryKind::IpSpoofImpersonator,
        AdversaryKind::AttributeForger,
        AdversaryKind::Replayer,
    ]
    .into_iter()
    .map(AdversaryConfig::new)
    .collect()
}

fn default_sessions() -> usize {
    100
}

fn default_devices() -> usize {
    10
}

fn default_slots() -> usize {
    50
}

fn default_fleet_sizes() -> Vec<usize> {
    vec![10, 100, 1000]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub protocol: ProtocolParams,
    #[serde(default)]
    pub trust: TrustPolicy,
    /// Attribute sets tracked side by side; the last one drives access.
    #[serde(default = "default_attribute_sets")]
    pub attribute_sets: Vec<AttributeSet>,
    #[serde(default = "default_adversaries")]
    pub adversaries: Vec<AdversaryConfig>,
    /// Legitimate sessions.
    #[serde(default = "default_sessions")]
    pub n_sessions: usize,
    /// Adversarial sessions, assigned round-robin over `adversaries`.
    #[serde(default = "default_sessions")]
    pub n_adversarial_sessions: usize,
    #[serde(default = "default_devices")]
    pub n_devices: usize,
    #[serde(default = "default_slots")]
    pub n_slots: usize,
    #[serde(default)]
    pub cost_model: CostModel,
    #[serde(default)]
    pub puf: PufParams,
    #[serde(default = "default_fleet_sizes")]
    pub fleet_sizes: Vec<usize>,
}

fn at(prefix: &str, e: ConfigError) -> ScenarioError {
    ScenarioError::Schema {
        path: format!("{prefix}.{}", e.field),
        message: e.message,
    }
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

impl Scenario {
    /// A scenario with every optional field at its default.
    pub fn named(name: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            master_seed: None,
            channel: ChannelConfig::default(),
            protocol: ProtocolParams::default(),
            trust: TrustPolicy::default(),
            attribute_sets: default_attribute_sets(),
            adversaries: default_adversaries(),
            n_sessions: default_sessions(),
            n_adversarial_sessions: default_sessions(),
            n_devices: default_devices(),
            n_slots: default_slots(),
            cost_model: CostModel::default(),
            puf: PufParams::default(),
            fleet_sizes: default_fleet_sizes(),
        }
    }

    /// Parses and validates scenario JSON.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            match inner.classify() {
                serde_json::error::Category::Data => schema(path, inner.to_string()),
                _ => ScenarioError::Parse(inner.to_string()),
            }
        })?;
        de.end().map_err(|e| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(schema(
                "schema_version",
                format!(
                    "unsupported version {}, expected {SCHEMA_VERSION}",
                    self.schema_version
                ),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(schema("name", "must not be empty"));
        }
        self.channel.validate().map_err(|e| at("channel", e))?;
        self.protocol.validate().map_err(|e| at("protocol", e))?;
        self.trust.validate().map_err(|e| at("trust", e))?;
        self.cost_model
            .validate()
            .map_err(|e| at("cost_model", e))?;
        self.puf.validate().map_err(|e| at("puf", e))?;
        if self.attribute_sets.is_empty() {
            return Err(schema("attribute_sets", "must list at least one set"));
        }
        if let Some(i) = self.attribute_sets.iter().position(|s| s.is_empty()) {
            return Err(schema(format!("attribute_sets[{i}]"), "must not be empty"));
        }
        for (i, a) in self.adversaries.iter().enumerate() {
            a.validate()
                .map_err(|e| at(&format!("adversaries[{i}]"), e))?;
        }
        if self.n_sessions == 0 {
            return Err(schema("n_sessions", "must be at least 1"));
        }
        if self.n_devices == 0 {
            return Err(schema("n_devices", "must be at least 1"));
        }
        if self.n_slots == 0 {
            return Err(schema("n_slots", "must be at least 1"));
        }
        if let Some(i) = self.fleet_sizes.iter().position(|&n| n == 0) {
            return Err(schema(format!("fleet_sizes[{i}]"), "must be at least 1"));
        }
        Ok(())
    }

    /// Master seed from, in order: `flag`, the file, `AUTHSIM_SEED`, 42.
    pub fn resolve_seed(&self, flag: Option<u64>) -> Result<u64, ScenarioError> {
        resolve_seed(
            flag,
            self.master_seed,
            std::env::var(SEED_ENV).ok().as_deref(),
        )
    }
}

pub fn resolve_seed(
    flag: Option<u64>,
    file: Option<u64>,
    env: Option<&str>,
) -> Result<u64, ScenarioError> {
    if let Some(seed) = flag.or(file) {
        return Ok(seed);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| schema(SEED_ENV, format!("`{v}` is not an unsigned integer"))),
        None => Ok(DEFAULT_SEED),
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Scenario::from_json(&text)
}

/// One session as reported in `outcomes.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub index: usize,
    pub population: Population,
    pub device_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adversary: Option<AdversaryKind>,
    pub outcome: Outcome,
    pub ever_terminated: bool,
    /// Zero-based slot of termination under the operational set.
    pub terminated_at: Option<usize>,
    pub attempts: u32,
    pub messages: usize,
    pub key_transmissions: usize,
    pub total_cost: u64,
    pub bit_agreement: Option<f64>,
}

/// Trust trajectory of one session under one attribute set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub attribute_set: String,
    pub session: usize,
    pub population: Population,
    pub device_id: String,
    pub points: Vec<TrustPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub sessions: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySummary {
    /// Position in the scenario's adversary list.
    pub index: usize,
    pub kind: AdversaryKind,
    pub attack_probability: f64,
    pub sessions: usize,
    pub accepted: usize,
    pub terminated: usize,
    /// Mean number of slots until termination, over terminated sessions.
    pub mean_slots_to_termination: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsBundle {
    pub scenario: String,
    pub master_seed: u64,
    pub n_legitimate: usize,
    pub n_adversarial: usize,
    /// Legitimate sessions that ended the handshake authenticated.
    pub seed_match_rate: f64,
    pub bit_agreement: Option<AgreementStats>,
    pub far: Option<f64>,
    pub frr: Option<f64>,
    pub key_transmissions: usize,
    pub mean_session_cost: f64,
    pub attribute_sets: Vec<String>,
    pub adversaries: Vec<AdversarySummary>,
    pub costs: Vec<FleetCost>,
    #[serde(skip)]
    pub outcomes: Vec<SessionRecord>,
    #[serde(skip)]
    pub trajectories: Vec<TrajectoryRecord>,
}

impl MetricsBundle {
    pub fn labeled_outcomes(&self) -> Vec<LabeledOutcome> {
        self.outcomes
            .iter()
            .map(|r| LabeledOutcome {
                population: r.population,
                outcome: r.outcome.clone(),
                ever_terminated: r.ever_terminated,
            })
            .collect()
    }

    pub fn far_frr(&self) -> Result<(f64, f64), crate::error::MetricsError> {
        far_frr(&self.labeled_outcomes())
    }
}

fn device_id(i: usize) -> String {
    format!("dev-{i}")
}

fn enrolled_engine(s: &Scenario, root: &RngStream) -> Result<Engine, HarnessError> {
    let mut engine = Engine::new(s.protocol.clone(), s.trust.clone(), s.cost_model.clone());
    for i in 0..s.n_devices {
        let id = device_id(i);
        let mut rng = root.child(format!("enroll/{id}"));
        engine
            .enroll(&id, s.channel.clone(), &mut rng)
            .map_err(|source| HarnessError::Enrollment {
                device: id.clone(),
                source,
            })?;
    }
    Ok(engine)
}

/// Runs the scenario and hands every finished session to `inspect`.
pub fn run_scenario_inspect(
    s: &Scenario,
    master_seed: u64,
    inspect: &mut dyn FnMut(&Session),
) -> Result<MetricsBundle, HarnessError> {
    let root = RngStream::new(master_seed, format!("scenario/{}", s.name));
    let engine = enrolled_engine(s, &root)?;
    let mut outcomes = Vec::with_capacity(s.n_sessions + s.n_adversarial_sessions);
    let mut trajectories = Vec::new();

    let mut finish = |index: usize,
                      population: Population,
                      adversary: Option<AdversaryKind>,
                      session: Session,
                      report: Option<AccessReport>| {
        inspect(&session);
        let t = &session.transcript;
        let terminated_at = report
            .as_ref()
            .and_then(|r| r.operational())
            .and_then(|tr| tr.terminated_at);
        if let Some(report) = report {
            for tr in report.trajectories {
                trajectories.push(TrajectoryRecord {
                    attribute_set: tr.attribute_set,
                    session: index,
                    population,
                    device_id: t.device_id.clone(),
                    points: tr.points,
                });
            }
        }
        outcomes.push(SessionRecord {
            index,
            population,
            device_id: t.device_id.clone(),
            adversary,
            outcome: t.outcome.clone(),
            ever_terminated: session.phase == GatewayPhase::Terminated,
            terminated_at,
            attempts: t.attempts,
            messages: t.messages.len(),
            key_transmissions: t.key_transmissions(),
            total_cost: t.total_cost,
            bit_agreement: session.bit_agreement,
        });
    };

    let access = |session: &mut Session, adversary: Option<&mut Adversary>, rng: &RngStream| {
        (session.phase == GatewayPhase::Granted).then(|| {
            engine
                .ongoing_access(session, s.n_slots, &s.attribute_sets, adversary, rng)
                .expect("granted session")
        })
    };

    for i in 0..s.n_sessions {
        let rng = root.child(format!("legit/{i}"));
        let id = device_id(i % s.n_devices);
        let mut session = engine.run_session(&id, Responder::Device, &rng);
        let report = access(&mut session, None, &rng.child("access"));
        finish(i, Population::Legitimate, None, session, report);
    }

    let n_adv = if s.adversaries.is_empty() {
        0
    } else {
        s.n_adversarial_sessions
    };
    for j in 0..n_adv {
        let rng = root.child(format!("adversarial/{j}"));
        let id = device_id(j % s.n_devices);
        let config = &s.adversaries[j % s.adversaries.len()];
        let mut adversary = Adversary::new(config.clone());
        let eavesdropping =
            config.kind == AdversaryKind::Eavesdropper && config.ever_on(s.n_slots as u64);
        let responder = if eavesdropping {
            Responder::Eavesdropper {
                rho_eve: config.rho_eve,
            }
        } else {
            Responder::Device
        };
        let mut session = engine.run_session(&id, responder, &rng);
        let report = if eavesdropping {
            access(&mut session, None, &rng.child("access"))
        } else {
            access(&mut session, Some(&mut adversary), &rng.child("access"))
        };
        finish(
            j,
            Population::Adversarial,
            Some(config.kind),
            session,
            report,
        );
    }

    let costs = compare_baseline_inspect(s, master_seed, inspect)?;

    Ok(summarize(s, master_seed, outcomes, trajectories, costs))
}

pub fn run_scenario(s: &Scenario, master_seed: u64) -> Result<MetricsBundle, HarnessError> {
    run_scenario_inspect(s, master_seed, &mut |_| {})
}

fn summarize(
    s: &Scenario,
    master_seed: u64,
    outcomes: Vec<SessionRecord>,
    trajectories: Vec<TrajectoryRecord>,
    costs: Vec<FleetCost>,
) -> MetricsBundle {
    let legit: Vec<&SessionRecord> = outcomes
        .iter()
        .filter(|r| r.population == Population::Legitimate)
        .collect();
    let n_legitimate = legit.len();
    let n_adversarial = outcomes.len() - n_legitimate;
    let matched = legit
        .iter()
        .filter(|r| r.outcome.is_authenticated() || r.ever_terminated)
        .count();

    let agreements: Vec<f64> = legit.iter().filter_map(|r| r.bit_agreement).collect();
    let bit_agreement = (!agreements.is_empty()).then(|| AgreementStats {
        sessions: agreements.len(),
        mean: crate::stats::mean(&agreements),
        min: agreements.iter().copied().fold(f64::INFINITY, f64::min),
        max: agreements.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    });

    let labeled: Vec<LabeledOutcome> = outcomes
        .iter()
        .map(|r| LabeledOutcome {
            population: r.population,
            outcome: r.outcome.clone(),
            ever_terminated: r.ever_terminated,
        })
        .collect();

    let adversaries = s
        .adversaries
        .iter()
        .enumerate()
        .map(|(k, config)| {
            let mine: Vec<&SessionRecord> = outcomes
                .iter()
                .filter(|r| r.population == Population::Adversarial)
                .filter(|r| r.index % s.adversaries.len() == k)
                .collect();
            let slots: Vec<f64> = mine
                .iter()
                .filter_map(|r| r.terminated_at)
                .map(|t| (t + 1) as f64)
                .collect();
            AdversarySummary {
                index: k,
                kind: config.kind,
                attack_probability: config.attack_probability,
                sessions: mine.len(),
                accepted: mine
                    .iter()
                    .filter(|r| r.outcome.is_authenticated() && !r.ever_terminated)
                    .count(),
                terminated: slots.len(),
                mean_slots_to_termination: (!slots.is_empty()).then(|| crate::stats::mean(&slots)),
            }
        })
        .collect();

    let total: u64 = outcomes.iter().map(|r| r.total_cost).sum();
    MetricsBundle {
        scenario: s.name.clone(),
        master_seed,
        n_legitimate,
        n_adversarial,
        seed_match_rate: matched as f64 / n_legitimate.max(1) as f64,
        bit_agreement,
        far: false_accept_rate(&labeled).ok(),
        frr: false_reject_rate(&labeled).ok(),
        key_transmissions: outcomes.iter().map(|r| r.key_transmissions).sum(),
        mean_session_cost: total as f64 / outcomes.len().max(1) as f64,
        attribute_sets: s.attribute_sets.iter().map(attribute_set_label).collect(),
        adversaries,
        costs,
        outcomes,
        trajectories,
    }
}

/// Fleet cost rows only.
pub fn compare_baseline(s: &Scenario, master_seed: u64) -> Result<Vec<FleetCost>, HarnessError> {
    compare_baseline_inspect(s, master_seed, &mut |_| {})
}

pub fn compare_baseline_inspect(
    s: &Scenario,
    master_seed: u64,
    inspect: &mut dyn FnMut(&Session),
) -> Result<Vec<FleetCost>, HarnessError> {
    let root = RngStream::new(master_seed, format!("scenario/{}", s.name));
    let template = Engine::new(s.protocol.clone(), s.trust.clone(), s.cost_model.clone());
    fleet_cost_inspect(
        &template,
        &s.channel,
        &s.puf,
        &s.fleet_sizes,
        &root.child("fleet"),
        inspect,
    )
    .map_err(|source| HarnessError::Enrollment {
        device: "fleet".into(),
        source,
    })
}

/// Independent scenarios in parallel, results in input order.
pub fn run_batch(items: &[(Scenario, u64)]) -> Vec<Result<MetricsBundle, HarnessError>> {
    items
        .par_iter()
        .map(|(s, seed)| run_scenario(s, *seed))
        .collect()
}

pub const METRICS_FILE: &str = "metrics.json";
pub const TRAJECTORIES_FILE: &str = "trust_trajectories.csv";
pub const OUTCOMES_FILE: &str = "outcomes.jsonl";
pub const COSTS_FILE: &str = "costs.csv";

pub fn costs_csv(rows: &[FleetCost]) -> String {
    let mut out = String::from("scheme,n_devices,total_cost,wall_time_s\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.scheme.name(),
            r.n_devices,
            r.total_cost,
            r.wall_time_s
        );
    }
    out
}

pub fn trajectories_csv(records: &[TrajectoryRecord]) -> String {
    let mut out = String::from("attribute_set,session,population,device_id,step,value,level\n");
    for r in records {
        let population = match r.population {
            Population::Legitimate => "legitimate",
            Population::Adversarial => "adversarial",
        };
        for (step, p) in r.points.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.attribute_set, r.session, population, r.device_id, step, p.value, p.level
            );
        }
    }
    out
}

pub fn outcomes_jsonl(records: &[SessionRecord]) -> String {
    records
        .iter()
        .map(|r| crate::canonical::to_string(r) + "\n")
        .collect()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, ReportError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| ReportError {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes the four artifacts, overwriting earlier runs.
pub fn report(bundle: &MetricsBundle, out_dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    ensure_dir(out_dir)?;
    Ok(vec![
        write(
            out_dir,
            METRICS_FILE,
            &(crate::canonical::to_string(bundle) + "\n"),
        )?,
        write(
            out_dir,
            TRAJECTORIES_FILE,
            &trajectories_csv(&bundle.trajectories),
        )?,
        write(out_dir, OUTCOMES_FILE, &outcomes_jsonl(&bundle.outcomes))?,
        write(out_dir, COSTS_FILE, &costs_csv(&bundle.costs))?,
    ])
}

pub fn report_costs(rows: &[FleetCost], out_dir: &Path) -> Result<PathBuf, ReportError> {
    ensure_dir(out_dir)?;
    write(out_dir, COSTS_FILE, &costs_csv(rows))
}

/// One named self-test result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Known-answer hash vectors, the PRBS15 period and a closed-form SVM case.
pub fn selftest() -> Vec<SelfCheck> {
    use crate::prbs::{sha256, LfsrState, PrbsWidth};
    use crate::svm::{train_binary, SvmParams};

    let mut checks = Vec::new();
    let vectors: [(&'static str, &[u8], &str); 2] = [
        (
            "sha256 empty",
            b"",
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855",
        ),
        (
            "sha256 abc",
            b"abc",
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad",
        ),
    ];
    for (name, input, expected) in vectors {
        let got = hex::encode(sha256(input));
        checks.push(SelfCheck {
            name,
            passed: got == expected,
            detail: got,
        });
    }

    let start = LfsrState::from_register(1, PrbsWidth::Prbs15);
    let mut state = start;
    let (mut period, mut ones) = (0u64, 0u64);
    loop {
        ones += u64::from(state.next_bit());
        period += 1;
        if state == start || period > PrbsWidth::Prbs15.period() {
            break;
        }
    }
    checks.push(SelfCheck {
        name: "prbs15 period",
        passed: period == 32_767 && ones == 16_384,
        detail: format!("period {period}, ones {ones}"),
    });

    let params = SvmParams {
        standardize: false,
        ..SvmParams::linear(1e3)
    };
    let worst = train_binary(&[vec![0.0, 0.0], vec![1.0, 1.0]], &[-1, 1], &params)
        .map(|m| {
            [
                [0.0, 0.0],
                [1.0, 1.0],
                [2.0, -1.0],
                [0.25, 0.5],
                [-3.0, 4.0],
            ]
            .iter()
            .map(|x| (m.decision(x).unwrap_or(f64::NAN) - (x[0] + x[1] - 1.0)).abs())
            .fold(0.0, f64::max)
        })
        .unwrap_or(f64::INFINITY);
    checks.push(SelfCheck {
        name: "svm two-point margin",
        passed: worst <= 1e-3,
        detail: format!("max deviation {worst:.2e}"),
    });
    checks
}
