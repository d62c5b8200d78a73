//! Command implementations behind the `decsig` binary.
//!
//! Every command writes to a caller-supplied sink so the same code serves
//! the binary and the tests. Errors map to exit codes through [`exit_code`].

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::centralized;
use crate::decentralized;
use crate::error::{Error, Result};
use crate::model::{
    CentralizedMechanism, DecentralizedMechanism, LocationModel, PriorMode, ProductSpace,
    SystemModel,
};
use crate::oracle;
use crate::random;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Input(_) | Error::Invalid(_) => EXIT_INPUT,
        Error::Precondition(_) => EXIT_PRECONDITION,
        Error::Internal(_) | Error::Lp(_) => EXIT_INTERNAL,
    }
}

// ---------------------------------------------------------------------------
// Instance files

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub locations: Vec<LocationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint_prior: Option<Vec<JointEntry>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocationEntry {
    pub name: String,
    pub states: Vec<String>,
    pub prior: Vec<f64>,
    pub utility: Vec<f64>,
    #[serde(default = "default_payoff")]
    pub payoff: f64,
}

fn default_payoff() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointEntry {
    pub state: Vec<String>,
    pub prob: f64,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Input(format!(
                "instance file, line {} column {}: {e}",
                e.line(),
                e.column()
            ))
        })
    }

    pub fn load(path: &Path) -> Result<SystemModel> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)?.to_system()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialize")
    }

    /// Builds and validates the model.
    pub fn to_system(&self) -> Result<SystemModel> {
        let locations: Vec<LocationModel> = self
            .locations
            .iter()
            .map(|l| {
                LocationModel::new(l.name.clone(), l.states.clone(), l.prior.clone(), l.utility.clone())
                    .with_payoff(l.payoff)
            })
            .collect();
        let system = match &self.joint_prior {
            None => SystemModel::from_parts(locations, PriorMode::Independent),
            Some(entries) => {
                let table = joint_table_from_entries(&locations, entries)?;
                SystemModel::joint(locations, table)?
            }
        };
        let violations = system.validate();
        if violations.is_empty() {
            Ok(system)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub fn from_system(system: &SystemModel) -> Self {
        let locations = system
            .locations
            .iter()
            .map(|l| LocationEntry {
                name: l.name.clone(),
                states: l.states.clone(),
                prior: l.prior.clone(),
                utility: l.utility.clone(),
                payoff: l.payoff,
            })
            .collect();
        let joint_prior = match &system.prior_mode {
            PriorMode::Independent => None,
            PriorMode::Joint(table) => {
                let space = system.state_space();
                Some(
                    table
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(i, &prob)| JointEntry {
                            state: space
                                .decode(i)
                                .iter()
                                .zip(&system.locations)
                                .map(|(&s, l)| l.states[s].clone())
                                .collect(),
                            prob,
                        })
                        .collect(),
                )
            }
        };
        InstanceFile { locations, joint_prior }
    }
}

fn joint_table_from_entries(locations: &[LocationModel], entries: &[JointEntry]) -> Result<Vec<f64>> {
    let space = ProductSpace::new(locations.iter().map(|l| l.num_states()).collect());
    if space.size() > crate::model::MAX_JOINT_STATES {
        return Err(Error::Input(format!(
            "joint state space has {} states, above the limit of {}",
            space.size(),
            crate::model::MAX_JOINT_STATES
        )));
    }
    let lookup: Vec<HashMap<&str, usize>> = locations
        .iter()
        .map(|l| l.states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect())
        .collect();
    let mut table = vec![0.0; space.size()];
    let mut seen = vec![false; space.size()];
    for (e, entry) in entries.iter().enumerate() {
        if entry.state.len() != locations.len() {
            return Err(Error::Input(format!(
                "joint_prior[{e}].state has {} labels, expected {}",
                entry.state.len(),
                locations.len()
            )));
        }
        let coords = entry
            .state
            .iter()
            .zip(&lookup)
            .enumerate()
            .map(|(k, (label, map))| {
                map.get(label.as_str()).copied().ok_or_else(|| {
                    Error::Input(format!(
                        "joint_prior[{e}].state: {label:?} is not a state of {:?}",
                        locations[k].name
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let idx = space.index(&coords).expect("labels resolved to valid indices");
        if std::mem::replace(&mut seen[idx], true) {
            return Err(Error::Input(format!("joint_prior[{e}].state repeats an earlier entry")));
        }
        table[idx] = entry.prob;
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Formatting helpers

/// Rounds to 9 significant digits and prints the shortest representation.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    let s = format!("{rounded}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn fmt6(x: f64) -> String {
    let s = format!("{x:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn fmt_vec(v: &[f64]) -> String {
    format!("({})", v.iter().map(|&x| fmt6(x)).collect::<Vec<_>>().join(", "))
}

fn state_label(system: &SystemModel, coords: &[usize]) -> String {
    let parts: Vec<&str> = coords
        .iter()
        .zip(&system.locations)
        .map(|(&s, l)| l.states[s].as_str())
        .collect();
    format!("({})", parts.join(","))
}

fn io_err(e: std::io::Error) -> Error {
    Error::Internal(format!("write failed: {e}"))
}

fn write_centralized_table(out: &mut String, system: &SystemModel, mech: &CentralizedMechanism) {
    let space = system.state_space();
    let header: Vec<String> = std::iter::once("leave".to_string())
        .chain(system.locations.iter().map(|l| l.name.clone()))
        .collect();
    let _ = writeln!(out, "mechanism σ(a|ω), columns {}", header.join(" "));
    for (wi, w) in space.iter().enumerate() {
        let row: Vec<String> = mech.row(wi).iter().map(|&p| fmt6(p)).collect();
        let _ = writeln!(out, "  {}: {}", state_label(system, &w), row.join(" "));
    }
}

fn write_local_tables(out: &mut String, system: &SystemModel, mech: &DecentralizedMechanism) {
    let _ = writeln!(out, "mechanism σ_k(s|ω_k)");
    for (loc, local) in system.locations.iter().zip(&mech.per_location) {
        let _ = writeln!(out, "  {} [signals {}]", loc.name, local.signals.join(" "));
        for (state, row) in loc.states.iter().zip(&local.rows) {
            let cells: Vec<String> = row.iter().map(|&p| fmt6(p)).collect();
            let _ = writeln!(out, "    {state}: {}", cells.join(" "));
        }
    }
}

// ---------------------------------------------------------------------------
// solve

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Centralized,
    Decentralized,
    Heterogeneous,
    FullInfo,
    NoInfo,
}

impl std::str::FromStr for SolveMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "centralized" => SolveMode::Centralized,
            "decentralized" => SolveMode::Decentralized,
            "heterogeneous" => SolveMode::Heterogeneous,
            "full-info" => SolveMode::FullInfo,
            "no-info" => SolveMode::NoInfo,
            _ => return Err(Error::Input(format!("unknown mode {s:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub mode: SolveMode,
    pub summary: bool,
    /// Centralized mode: maximize Σ v_k T_k instead of throughput.
    pub weighted: bool,
    /// Decentralized mode on joint priors: run the single-location fallback.
    pub fallback: bool,
}

pub fn cmd_solve(system: &SystemModel, opts: &SolveOptions, out: &mut dyn Write) -> Result<()> {
    let mut s = String::new();
    let k = system.num_locations();
    let _ = writeln!(
        s,
        "K = {k}, |Ω| = {}, prior = {}",
        system.state_space().size(),
        if system.is_independent() { "independent" } else { "joint" }
    );
    match opts.mode {
        SolveMode::Centralized => {
            let sol = centralized::solve_centralized(system, opts.weighted)?;
            let _ = writeln!(s, "mode: centralized{}", if opts.weighted { " (weighted)" } else { "" });
            let _ = writeln!(s, "Th = {}", fmt6(sol.report.throughput));
            if opts.weighted {
                let _ = writeln!(s, "Val = {}", fmt6(sol.report.value));
            }
            let _ = writeln!(s, "T_k = {}", fmt_vec(&sol.report.per_location_throughput));
            let _ = writeln!(s, "obedience slack = {:.3e}", centralized::obedience_slack(system, &sol.mechanism)?);
            if !opts.summary {
                write_centralized_table(&mut s, system, &sol.mechanism);
            }
        }
        SolveMode::Decentralized if system.is_independent() => {
            let sol = decentralized::compose_optimal(system)?;
            let _ = writeln!(s, "mode: decentralized");
            let _ = writeln!(s, "Th_D = {}", fmt6(sol.report.throughput));
            let _ = writeln!(s, "Th_iso = {}", fmt_vec(&sol.th_iso()));
            let _ = writeln!(s, "T_k = {}", fmt_vec(&sol.report.per_location_throughput));
            let verdict = decentralized::check_obedience(system, &sol.mechanism)?;
            let _ = writeln!(s, "obedience: {verdict:?}");
            if !opts.summary {
                write_local_tables(&mut s, system, &sol.mechanism);
            }
        }
        SolveMode::Decentralized => {
            if !opts.fallback {
                return Err(Error::Precondition(
                    "decentralized mode on a joint prior needs --fallback; \
                     the result is a guaranteed fraction, not an optimum"
                        .into(),
                ));
            }
            let central = centralized::solve_centralized(system, false)?;
            let fb = decentralized::correlated_fallback(system, &central.mechanism)?;
            let (_, report) = oracle::evaluate_best_response(system, &fb.mechanism)?;
            let _ = writeln!(s, "mode: decentralized (fallback)");
            let _ = writeln!(s, "Th = {}", fmt6(central.report.throughput));
            let _ = writeln!(s, "Th_fallback = {}", fmt6(report.throughput));
            let _ = writeln!(s, "signalling location = {}", system.locations[fb.location].name);
            let _ = writeln!(s, "T_k (centralized) = {}", fmt_vec(&fb.central_throughput));
            if !opts.summary {
                write_local_tables(&mut s, system, &fb.mechanism);
            }
        }
        SolveMode::Heterogeneous => {
            let sol = decentralized::heterogeneous_compose(system)?;
            let _ = writeln!(s, "mode: heterogeneous");
            let _ = writeln!(s, "Val_D = {}", fmt6(sol.value));
            let order: Vec<&str> = sol.order.iter().map(|&k| system.locations[k].name.as_str()).collect();
            let _ = writeln!(s, "priority = ({})", order.join(", "));
            let th: Vec<f64> = sol.isolated.iter().map(|i| i.th_iso).collect();
            let _ = writeln!(s, "Th_iso = {}", fmt_vec(&th));
            if !opts.summary {
                write_local_tables(&mut s, system, &sol.mechanism);
            }
        }
        SolveMode::FullInfo | SolveMode::NoInfo => {
            let (name, mech) = if opts.mode == SolveMode::FullInfo {
                ("full-info", oracle::full_information(system))
            } else {
                ("no-info", oracle::no_information(system))
            };
            let (_, report) = oracle::evaluate_best_response(system, &mech)?;
            let _ = writeln!(s, "mode: {name}");
            let _ = writeln!(s, "Th = {}", fmt6(report.throughput));
            let _ = writeln!(s, "Val = {}", fmt6(report.value));
            let _ = writeln!(s, "T_k = {}", fmt_vec(&report.per_location_throughput));
        }
    }
    out.write_all(s.as_bytes()).map_err(io_err)
}

// ---------------------------------------------------------------------------
// compare

pub const COMPARE_HEADER: [&str; 4] = ["mechanism", "objective", "ratio_to_centralized", "guarantee"];

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub mechanism: String,
    pub objective: f64,
    pub ratio: Option<f64>,
    pub guarantee: Option<f64>,
}

fn ratio(x: f64, reference: f64) -> Option<f64> {
    (reference > 0.0).then(|| x / reference)
}

/// One row per mechanism family; returned rows are also written as CSV.
pub fn compare_rows(system: &SystemModel) -> Result<Vec<CompareRow>> {
    let k = system.num_locations();
    let central = centralized::solve_centralized(system, false)?;
    let th = central.report.throughput;
    let mut rows = vec![CompareRow {
        mechanism: "centralized".into(),
        objective: th,
        ratio: ratio(th, th),
        guarantee: None,
    }];
    if system.is_independent() {
        let d = decentralized::compose_optimal(system)?;
        rows.push(CompareRow {
            mechanism: "decentralized".into(),
            objective: d.report.throughput,
            ratio: ratio(d.report.throughput, th),
            guarantee: Some(bounds::gamma(k)?),
        });
    } else {
        let fb = decentralized::correlated_fallback(system, &central.mechanism)?;
        let (_, r) = oracle::evaluate_best_response(system, &fb.mechanism)?;
        rows.push(CompareRow {
            mechanism: "fallback".into(),
            objective: r.throughput,
            ratio: ratio(r.throughput, th),
            guarantee: Some(1.0 / k as f64),
        });
    }
    for (name, mech) in [
        ("full-info", oracle::full_information(system)),
        ("no-info", oracle::no_information(system)),
    ] {
        let (_, r) = oracle::evaluate_best_response(system, &mech)?;
        rows.push(CompareRow {
            mechanism: name.into(),
            objective: r.throughput,
            ratio: ratio(r.throughput, th),
            guarantee: None,
        });
    }
    let payoffs = system.payoffs();
    let uniform = payoffs.iter().all(|&v| v == payoffs[0]);
    if system.is_independent() && !uniform {
        let weighted = centralized::solve_centralized(system, true)?;
        let val = weighted.report.value;
        rows.push(CompareRow {
            mechanism: "centralized-weighted".into(),
            objective: val,
            ratio: ratio(val, val),
            guarantee: None,
        });
        match decentralized::heterogeneous_compose(system) {
            Ok(h) => rows.push(CompareRow {
                mechanism: "heterogeneous".into(),
                objective: h.value,
                ratio: ratio(h.value, val),
                guarantee: Some(bounds::gamma(k)?),
            }),
            // Without the negative-mean condition there is no guarantee to report.
            Err(Error::Precondition(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn cmd_compare(system: &SystemModel, out: &mut dyn Write) -> Result<()> {
    let rows = compare_rows(system)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Internal(format!("CSV output failed: {e}"));
    w.write_record(COMPARE_HEADER).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.mechanism.clone(),
            fmt_sig(r.objective),
            opt_cell(r.ratio),
            opt_cell(r.guarantee),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

// ---------------------------------------------------------------------------
// verify

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    IndependentBound,
    Tightness,
    CorrelatedBound,
    Lemmas,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "independent-bound" => Suite::IndependentBound,
            "tightness" => Suite::Tightness,
            "correlated-bound" => Suite::CorrelatedBound,
            "lemmas" => Suite::Lemmas,
            _ => return Err(Error::Input(format!("unknown suite {s:?}"))),
        })
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub suite: Suite,
    pub k_range: Option<RangeInclusive<usize>>,
    pub x_list: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub tolerance: f64,
}

impl VerifyOptions {
    pub fn new(suite: Suite) -> Self {
        VerifyOptions {
            suite,
            k_range: None,
            x_list: None,
            trials: None,
            seed: 0,
            tolerance: crate::GUARANTEE_TOL,
        }
    }
}

/// Pass count and worst slack of one property; slack ≥ 0 means the
/// property held with room to spare.
struct Property {
    name: &'static str,
    total: usize,
    passed: usize,
    worst: f64,
    failure: Option<String>,
}

impl Property {
    fn new(name: &'static str) -> Self {
        Property {
            name,
            total: 0,
            passed: 0,
            worst: f64::INFINITY,
            failure: None,
        }
    }

    /// `detail` is only rendered for the first failure.
    fn record(&mut self, slack: f64, ok: bool, detail: impl FnOnce() -> String) {
        self.total += 1;
        self.worst = self.worst.min(slack);
        if ok {
            self.passed += 1;
        } else if self.failure.is_none() {
            self.failure = Some(detail());
        }
    }

    fn check(&mut self, slack: f64, tol: f64, detail: impl FnOnce() -> String) {
        self.record(slack, slack >= -tol, detail);
    }
}

fn instance_detail(label: String, system: &SystemModel) -> String {
    format!("{label}\n{}", InstanceFile::from_system(system).to_json())
}

/// Mixes a property id into the seed so properties draw independent streams.
fn property_seed(seed: u64, id: u64) -> u64 {
    seed ^ id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn check_k_range(range: &RangeInclusive<usize>, lo: usize, hi: usize, suite: &str) -> Result<()> {
    if range.is_empty() || *range.start() < lo || *range.end() > hi {
        return Err(Error::Input(format!(
            "{suite} supports K in {lo}..{hi}, got {}..{}",
            range.start(),
            range.end()
        )));
    }
    Ok(())
}

fn verify_independent(opts: &VerifyOptions) -> Result<Vec<Property>> {
    let ks = opts.k_range.clone().unwrap_or(2..=5);
    check_k_range(&ks, 1, 6, "independent-bound")?;
    let trials = opts.trials.unwrap_or(100);
    let tol = opts.tolerance;
    let mut gamma_p = Property::new("Th_D >= gamma(K) Th");
    let mut lp_p = Property::new("LP Th matches best-response evaluation");
    let mut hetero_p = Property::new("Val_D >= gamma(K) Val");
    for t in 0..trials as u64 {
        let mut rng = random::trial_rng(property_seed(opts.seed, 1), t);
        let k = rand::Rng::gen_range(&mut rng, ks.clone());
        let sys = random::random_independent(&mut rng, k, 2..=3, true)?;
        let c = centralized::solve_centralized(&sys, false)?;
        let (_, br) = oracle::evaluate_best_response(&sys, &c.mechanism)?;
        let lp_gap = -(c.objective - br.throughput).abs();
        lp_p.check(lp_gap, tol, || instance_detail(format!("trial {t}: LP {} vs {}", c.objective, br.throughput), &sys));
        let d = decentralized::compose_optimal(&sys)?;
        let g = bounds::gamma(k)?;
        let slack = d.report.throughput - g * c.objective;
        gamma_p.check(slack, tol, || instance_detail(format!("trial {t}: Th_D − Γ_K Th = {slack:e}"), &sys));

        let mut rng = random::trial_rng(property_seed(opts.seed, 2), t);
        let k = rand::Rng::gen_range(&mut rng, ks.clone());
        let sys = random::random_assumption1(&mut rng, k, 2..=3)?;
        let val = centralized::solve_centralized(&sys, true)?.objective;
        let h = decentralized::heterogeneous_compose(&sys)?;
        let slack = h.value - bounds::gamma(k)? * val;
        hetero_p.check(slack, tol, || instance_detail(format!("trial {t}: Val_D − Γ_K Val = {slack:e}"), &sys));
    }
    Ok(vec![lp_p, gamma_p, hetero_p])
}

fn verify_tightness(opts: &VerifyOptions) -> Result<Vec<Property>> {
    let ks = opts.k_range.clone().unwrap_or(2..=4);
    check_k_range(&ks, 2, 8, "tightness")?;
    let xs = opts.x_list.clone().unwrap_or_else(|| vec![2.0, 3.0, 10.0]);
    let tol = opts.tolerance;
    let mut closed = Property::new("Th_D matches closed form within 1e-6");
    let mut central = Property::new("centralized Th = 1");
    let mut above = Property::new("Th_D / Th >= gamma(K)");
    for k in ks {
        for &x in &xs {
            let inst = bounds::make_tightness_instance(k, x)?;
            let d = decentralized::compose_optimal(&inst.system)?;
            let err = (d.report.throughput - inst.predicted_th_d).abs();
            closed.check(-err, 1e-6, || instance_detail(format!("K={k} X={x}: |ΔTh_D| = {err:e}"), &inst.system));
            let th = centralized::solve_centralized(&inst.system, false)?.objective;
            central.check(-(th - 1.0).abs(), tol, || instance_detail(format!("K={k} X={x}: Th = {th}"), &inst.system));
            let slack = d.report.throughput / th - bounds::gamma(k)?;
            above.check(slack, tol, || instance_detail(format!("K={k} X={x}: ratio − Γ_K = {slack:e}"), &inst.system));
        }
    }
    Ok(vec![closed, central, above])
}

fn verify_correlated(opts: &VerifyOptions) -> Result<Vec<Property>> {
    let ks = opts.k_range.clone().unwrap_or(2..=4);
    check_k_range(&ks, 2, 6, "correlated-bound")?;
    let trials = opts.trials.unwrap_or(100);
    let tol = opts.tolerance;
    let mut fallback = Property::new("fallback Th >= Th / K");
    for t in 0..trials as u64 {
        let mut rng = random::trial_rng(property_seed(opts.seed, 3), t);
        let k = rand::Rng::gen_range(&mut rng, ks.clone());
        let sys = random::random_joint_binary(&mut rng, k)?;
        let c = centralized::solve_centralized(&sys, false)?;
        let fb = decentralized::correlated_fallback(&sys, &c.mechanism)?;
        let (_, r) = oracle::evaluate_best_response(&sys, &fb.mechanism)?;
        let slack = r.throughput - c.objective / k as f64;
        fallback.check(slack, tol, || instance_detail(format!("trial {t}: fallback − Th/K = {slack:e}"), &sys));
    }
    let mut residual = Property::new("z* residual <= 1e-12");
    let mut symmetric = Property::new("symmetric max F = K z*");
    let mut monotone = Property::new("upper bound decreasing in K");
    for k in 2..=128usize {
        let z = bounds::solve_zstar(k)?;
        let r = (z - (1.0 - z).powi(k as i32 - 1)).abs();
        residual.record(1e-12 - r, r <= 1e-12, || format!("K={k}: residual {r:e}"));
        let m = bounds::max_f_symmetric(k)?;
        let err = (bounds::f_value(&m.u) - k as f64 * z).abs();
        symmetric.record(1e-9 - err, err <= 1e-9, || format!("K={k}: |F(u) − K z*| = {err:e}"));
    }
    let mut k = 2usize;
    while k <= 1 << 15 {
        let gap = bounds::correlated_upper_bound(k)? - bounds::correlated_upper_bound(2 * k)?;
        monotone.record(gap, gap > 0.0, || format!("bound({k}) − bound({}) = {gap:e}", 2 * k));
        k *= 2;
    }
    let mut x_check = Property::new("correlated instance masses sum to 1");
    for k in 2..=6usize {
        let sys = bounds::make_correlated_instance(k, 2.0 * k as f64)?;
        let err = (sys.joint_table().iter().sum::<f64>() - 1.0).abs();
        x_check.record(-err, err <= 1e-12, || format!("K={k}: mass error {err:e}"));
    }
    Ok(vec![fallback, residual, symmetric, monotone, x_check])
}

fn verify_lemmas(opts: &VerifyOptions) -> Result<Vec<Property>> {
    let trials = opts.trials.unwrap_or(1000);
    let mut series = Property::new("series inequality gap >= -1e-12");
    let mut product = Property::new("F_d throughput = 1 - prod(1 - P(u_k = 1))");
    let mut verdict = Property::new("obedience verdict matches F_d best response");
    for t in 0..trials as u64 {
        let mut rng = random::trial_rng(property_seed(opts.seed, 4), t);
        let k = rand::Rng::gen_range(&mut rng, 2..=6usize);
        let x = random::random_admissible_vector(&mut rng, k);
        let gap = bounds::series_inequality_gap(&x)?;
        series.check(gap, 1e-12, || format!("trial {t}: x = {x:?}, gap {gap:e}"));

        let mut rng = random::trial_rng(property_seed(opts.seed, 5), t);
        let k = rand::Rng::gen_range(&mut rng, 1..=3usize);
        let sys = random::random_independent(&mut rng, k, 2..=3, true)?;
        let mech = random::random_binary_mechanism(&mut rng, &sys);
        let closed = decentralized::product_throughput(&sys, &mech)?;
        let actions: Vec<usize> = (0..1usize << k)
            .map(|u| (0..k).find(|&l| (u >> l) & 1 == 1).map_or(0, |l| l + 1))
            .collect();
        let f = crate::model::CustomerStrategy::pure(k, &actions);
        let enumerated = oracle::evaluate(&sys, &mech, &f)?.throughput;
        let err = (closed - enumerated).abs();
        product.check(-err, 1e-9, || instance_detail(format!("trial {t}: |closed − enumerated| = {err:e}"), &sys));

        let mut rng = random::trial_rng(property_seed(opts.seed, 6), t);
        let sys = random::random_independent(&mut rng, 2, 2..=3, true)?;
        let mech = random::random_binary_mechanism(&mut rng, &sys);
        let v = decentralized::check_obedience(&sys, &mech)?;
        let exists = oracle::fd_optimal_strategy(&sys, &mech)?.is_some();
        let agree = (v != decentralized::ObedienceVerdict::Neither) == exists;
        verdict.record(if agree { 0.0 } else { -1.0 }, agree, || {
            instance_detail(format!("trial {t}: verdict {v:?}, F_d optimum exists: {exists}"), &sys)
        });
    }
    Ok(vec![series, product, verdict])
}

/// Runs a property suite; returns whether every property passed.
pub fn cmd_verify(opts: &VerifyOptions, out: &mut dyn Write) -> Result<bool> {
    let props = match opts.suite {
        Suite::IndependentBound => verify_independent(opts)?,
        Suite::Tightness => verify_tightness(opts)?,
        Suite::CorrelatedBound => verify_correlated(opts)?,
        Suite::Lemmas => verify_lemmas(opts)?,
    };
    let mut s = String::new();
    let mut all = true;
    for p in &props {
        let ok = p.passed == p.total;
        all &= ok;
        let _ = writeln!(
            s,
            "{} {}: {}/{} passed, worst slack {:.6e}",
            if ok { "PASS" } else { "FAIL" },
            p.name,
            p.passed,
            p.total,
            p.worst
        );
        if let Some(detail) = &p.failure {
            let _ = writeln!(s, "first failure: {detail}");
        }
    }
    let _ = writeln!(s, "{}", if all { "all properties passed" } else { "some properties failed" });
    out.write_all(s.as_bytes()).map_err(io_err)?;
    Ok(all)
}

// ---------------------------------------------------------------------------
// sweep

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Tightness,
    Correlated,
}

impl std::str::FromStr for Generator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tightness" => Generator::Tightness,
            "correlated" => Generator::Correlated,
            _ => return Err(Error::Input(format!("unknown generator {s:?}"))),
        })
    }
}

pub const SWEEP_HEADER: [&str; 8] = ["K", "X", "Th", "Th_D", "ratio", "gamma", "1/K", "upper_bound"];

/// Largest joint state space for which sweep runs the centralized LP.
pub const SWEEP_LP_STATES: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub k: usize,
    pub x: Option<f64>,
    pub th: Option<f64>,
    pub th_d: Option<f64>,
    pub ratio: Option<f64>,
    pub gamma: f64,
    pub inv_k: f64,
    pub upper_bound: f64,
}

pub fn sweep_rows(generator: Generator, ks: RangeInclusive<usize>, xs: &[f64]) -> Result<Vec<SweepRow>> {
    if ks.is_empty() || *ks.start() < 2 {
        return Err(Error::Input("sweep needs a nonempty K range starting at 2 or above".into()));
    }
    let mut rows = Vec::new();
    for k in ks {
        let base = |x, th: Option<f64>, th_d: Option<f64>| -> Result<SweepRow> {
            Ok(SweepRow {
                k,
                x,
                th,
                th_d,
                ratio: match (th, th_d) {
                    (Some(a), Some(b)) if a > 0.0 => Some(b / a),
                    _ => None,
                },
                gamma: bounds::gamma(k)?,
                inv_k: 1.0 / k as f64,
                upper_bound: bounds::correlated_upper_bound(k)?,
            })
        };
        match generator {
            Generator::Tightness => {
                for &x in xs {
                    let inst = bounds::make_tightness_instance(k, x)?;
                    let small = inst.system.state_space().size() <= SWEEP_LP_STATES;
                    let th = if small {
                        centralized::solve_centralized(&inst.system, false)?.objective
                    } else {
                        inst.predicted_th
                    };
                    // the optimal product mechanism's throughput, without enumerating signals
                    let th_d = 1.0
                        - inst
                            .system
                            .locations
                            .iter()
                            .map(|l| decentralized::solve_isolated(l).map(|s| 1.0 - s.th_iso))
                            .product::<Result<f64>>()?;
                    rows.push(base(Some(x), Some(th), Some(th_d))?);
                }
            }
            Generator::Correlated => {
                if xs.is_empty() {
                    rows.push(base(None, None, None)?);
                }
                for &x in xs {
                    if 3usize.saturating_pow(k as u32) > SWEEP_LP_STATES {
                        rows.push(base(Some(x), None, None)?);
                        continue;
                    }
                    let sys = bounds::make_correlated_instance(k, x)?;
                    let c = centralized::solve_centralized(&sys, false)?;
                    let fb = decentralized::correlated_fallback(&sys, &c.mechanism)?;
                    let (_, r) = oracle::evaluate_best_response(&sys, &fb.mechanism)?;
                    rows.push(base(Some(x), Some(c.objective), Some(r.throughput))?);
                }
            }
        }
    }
    Ok(rows)
}

pub fn cmd_sweep(
    generator: Generator,
    ks: RangeInclusive<usize>,
    xs: &[f64],
    out: &mut dyn Write,
) -> Result<()> {
    let rows = sweep_rows(generator, ks, xs)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Internal(format!("CSV output failed: {e}"));
    w.write_record(SWEEP_HEADER).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.k.to_string(),
            opt_cell(r.x),
            opt_cell(r.th),
            opt_cell(r.th_d),
            opt_cell(r.ratio),
            fmt_sig(r.gamma),
            fmt_sig(r.inv_k),
            fmt_sig(r.upper_bound),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

// ---------------------------------------------------------------------------
// argument parsing helpers

/// Parses `"3"`, `"2..5"` or `"2..=5"` (both inclusive).
pub fn parse_k_range(s: &str) -> Result<RangeInclusive<usize>> {
    let bad = || Error::Input(format!("invalid K range {s:?}; expected N or A..B"));
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
    let range = match s.split_once("..") {
        None => {
            let k = parse(s)?;
            k..=k
        }
        Some((a, b)) => parse(a)?..=parse(b.strip_prefix('=').unwrap_or(b))?,
    };
    if range.is_empty() {
        return Err(bad());
    }
    Ok(range)
}

/// Parses a comma-separated list of finite numbers.
pub fn parse_x_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Input(format!("invalid number {t:?} in X list")))
        })
        .collect()
}
