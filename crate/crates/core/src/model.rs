//! Domain types: locations, systems, mechanisms, strategies and reports.
//!
//! State tuples are enumerated in mixed-radix order with location 0 varying
//! fastest. Every dense table in the crate (joint priors, centralized
//! mechanisms, joint signal spaces of decentralized mechanisms) uses this
//! order.

use std::fmt;

use crate::error::{Error, Result};

/// Tolerance for every row-stochasticity and normalization check.
pub const PROB_TOL: f64 = 1e-9;

/// Entries down to this value are accepted as rounding noise and read as 0.
pub const NEG_CLAMP: f64 = -1e-12;

/// Largest joint state space a dense joint prior may have without override.
pub const MAX_JOINT_STATES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct LocationModel {
    pub name: String,
    pub states: Vec<String>,
    pub prior: Vec<f64>,
    pub utility: Vec<f64>,
    pub payoff: f64,
}

impl LocationModel {
    pub fn new(
        name: impl Into<String>,
        states: Vec<String>,
        prior: Vec<f64>,
        utility: Vec<f64>,
    ) -> Self {
        Self {
            name: name.into(),
            states,
            prior,
            utility,
            payoff: 1.0,
        }
    }

    /// Location whose states are labelled `0..n`.
    pub fn with_indexed_states(name: impl Into<String>, prior: Vec<f64>, utility: Vec<f64>) -> Self {
        let states = (0..prior.len()).map(|i| i.to_string()).collect();
        Self::new(name, states, prior, utility)
    }

    pub fn with_payoff(mut self, payoff: f64) -> Self {
        self.payoff = payoff;
        self
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// E[h(ω)] under the location's marginal prior.
    pub fn expected_utility(&self) -> f64 {
        self.prior.iter().zip(&self.utility).map(|(p, h)| p * h).sum()
    }

    /// True when some state with positive prior has nonnegative utility.
    pub fn persuadable(&self) -> bool {
        self.prior
            .iter()
            .zip(&self.utility)
            .any(|(&p, &h)| p > 0.0 && h >= 0.0)
    }

    fn violations(&self, index: usize, out: &mut Vec<Violation>) {
        let field = |f: &str| format!("locations[{index}].{f}");
        if self.states.is_empty() {
            out.push(Violation::new(field("states"), "state list is empty", 0.0));
        }
        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].contains(s) {
                out.push(Violation::new(
                    field("states"),
                    format!("duplicate state label {s:?}"),
                    0.0,
                ));
            }
        }
        if self.prior.len() != self.states.len() {
            out.push(Violation::new(
                field("prior"),
                format!(
                    "has {} entries for {} states",
                    self.prior.len(),
                    self.states.len()
                ),
                (self.prior.len() as f64 - self.states.len() as f64).abs(),
            ));
        }
        if self.utility.len() != self.states.len() {
            out.push(Violation::new(
                field("utility"),
                format!(
                    "has {} entries for {} states",
                    self.utility.len(),
                    self.states.len()
                ),
                (self.utility.len() as f64 - self.states.len() as f64).abs(),
            ));
        }
        for (i, &p) in self.prior.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                out.push(Violation::new(
                    format!("{}[{i}]", field("prior")),
                    format!("entry {p} is negative or not finite"),
                    if p.is_finite() { -p } else { f64::INFINITY },
                ));
            }
        }
        let total: f64 = self.prior.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            out.push(Violation::new(
                field("prior"),
                format!("prior sums to {total}"),
                (total - 1.0).abs(),
            ));
        }
        if let Some(h) = self.utility.iter().find(|h| !h.is_finite()) {
            out.push(Violation::new(
                field("utility"),
                format!("entry {h} is not finite"),
                f64::INFINITY,
            ));
        }
        if !self.payoff.is_finite() {
            out.push(Violation::new(
                field("payoff"),
                format!("payoff {} is not finite", self.payoff),
                f64::INFINITY,
            ));
        }
    }
}

/// One failed invariant: which field, what went wrong, and by how much.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
    pub magnitude: f64,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>, magnitude: f64) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
            magnitude,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} (breach {:e})", self.field, self.message, self.magnitude)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriorMode {
    /// The joint prior is the product of the location marginals.
    Independent,
    /// Dense joint prior, one entry per state tuple in canonical order.
    Joint(Vec<f64>),
}

/// Mixed-radix indexing of a product space, first coordinate fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSpace {
    radices: Vec<usize>,
    size: usize,
}

impl ProductSpace {
    pub fn new(radices: Vec<usize>) -> Self {
        let size = radices
            .iter()
            .try_fold(1usize, |acc, &r| acc.checked_mul(r))
            .unwrap_or(usize::MAX);
        Self { radices, size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    pub fn index(&self, coords: &[usize]) -> Option<usize> {
        if coords.len() != self.radices.len() {
            return None;
        }
        let mut idx = 0;
        let mut stride = 1;
        for (&c, &r) in coords.iter().zip(&self.radices) {
            if c >= r {
                return None;
            }
            idx += c * stride;
            stride *= r;
        }
        Some(idx)
    }

    pub fn decode_into(&self, mut index: usize, coords: &mut [usize]) {
        for (c, &r) in coords.iter_mut().zip(&self.radices) {
            *c = index % r;
            index /= r;
        }
    }

    pub fn decode(&self, index: usize) -> Vec<usize> {
        let mut coords = vec![0; self.radices.len()];
        self.decode_into(index, &mut coords);
        coords
    }

    /// Iterates over all coordinate tuples in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.size).map(|i| self.decode(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub locations: Vec<LocationModel>,
    pub prior_mode: PriorMode,
}

impl SystemModel {
    /// Builds an independent system, rejecting it if any invariant fails.
    pub fn independent(locations: Vec<LocationModel>) -> Result<Self> {
        Self::from_parts(locations, PriorMode::Independent).checked()
    }

    /// Builds a joint-prior system. Refuses state spaces above
    /// [`MAX_JOINT_STATES`]; use [`SystemModel::joint_unbounded`] to override.
    pub fn joint(locations: Vec<LocationModel>, table: Vec<f64>) -> Result<Self> {
        let space = ProductSpace::new(locations.iter().map(|l| l.num_states()).collect());
        if space.size() > MAX_JOINT_STATES {
            return Err(Error::Input(format!(
                "joint state space has {} elements, above the limit of {MAX_JOINT_STATES}",
                space.size()
            )));
        }
        Self::joint_unbounded(locations, table)
    }

    pub fn joint_unbounded(locations: Vec<LocationModel>, table: Vec<f64>) -> Result<Self> {
        Self::from_parts(locations, PriorMode::Joint(table)).checked()
    }

    /// Builds a joint system whose stored marginals are derived from `table`.
    pub fn joint_with_marginals(mut locations: Vec<LocationModel>, table: Vec<f64>) -> Result<Self> {
        let space = ProductSpace::new(locations.iter().map(|l| l.num_states()).collect());
        if table.len() != space.size() {
            return Err(Error::Input(format!(
                "joint table has {} entries, expected {}",
                table.len(),
                space.size()
            )));
        }
        let marginals = marginals_of(&space, &table);
        for (loc, m) in locations.iter_mut().zip(marginals) {
            loc.prior = m;
        }
        Self::joint(locations, table)
    }

    /// Assembles a system without checking invariants; pair with [`SystemModel::validate`].
    pub fn from_parts(locations: Vec<LocationModel>, prior_mode: PriorMode) -> Self {
        Self {
            locations,
            prior_mode,
        }
    }

    fn checked(self) -> Result<Self> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::Invalid(violations))
        }
    }

    pub fn num_locations(&self) -> usize {
        self.locations.len()
    }

    pub fn is_independent(&self) -> bool {
        matches!(self.prior_mode, PriorMode::Independent)
    }

    pub fn state_space(&self) -> ProductSpace {
        ProductSpace::new(self.locations.iter().map(|l| l.num_states()).collect())
    }

    pub fn payoffs(&self) -> Vec<f64> {
        self.locations.iter().map(|l| l.payoff).collect()
    }

    /// μ(ω) for a state tuple given as per-location state indices.
    pub fn joint_prior(&self, state: &[usize]) -> Result<f64> {
        let space = self.state_space();
        let index = space.index(state).ok_or_else(|| {
            Error::Input(format!(
                "state tuple {state:?} is out of range for radices {:?}",
                space.radices()
            ))
        })?;
        Ok(match &self.prior_mode {
            PriorMode::Independent => self.product_prior(state),
            PriorMode::Joint(table) => table[index],
        })
    }

    fn product_prior(&self, state: &[usize]) -> f64 {
        self.locations
            .iter()
            .zip(state)
            .map(|(l, &s)| l.prior[s])
            .product()
    }

    /// μ(ω) for every state tuple, in canonical order.
    pub fn joint_table(&self) -> Vec<f64> {
        match &self.prior_mode {
            PriorMode::Joint(table) => table.clone(),
            PriorMode::Independent => {
                let mut table = vec![1.0];
                for loc in &self.locations {
                    let mut next = Vec::with_capacity(table.len() * loc.num_states());
                    for &p in &loc.prior {
                        next.extend(table.iter().map(|t| t * p));
                    }
                    table = next;
                }
                table
            }
        }
    }

    /// Checks every invariant and reports each breach; empty means valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.locations.is_empty() {
            out.push(Violation::new("locations", "system has no locations", 0.0));
        }
        for (i, loc) in self.locations.iter().enumerate() {
            loc.violations(i, &mut out);
        }
        let PriorMode::Joint(table) = &self.prior_mode else {
            return out;
        };
        if !out.is_empty() {
            return out;
        }
        let space = self.state_space();
        if table.len() != space.size() {
            out.push(Violation::new(
                "joint_prior",
                format!("has {} entries, expected {}", table.len(), space.size()),
                (table.len() as f64 - space.size() as f64).abs(),
            ));
            return out;
        }
        for (i, &p) in table.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                out.push(Violation::new(
                    format!("joint_prior[{i}]"),
                    format!("entry {p} is negative or not finite"),
                    if p.is_finite() { -p } else { f64::INFINITY },
                ));
            }
        }
        let total: f64 = table.iter().sum();
        if (total - 1.0).abs() > PROB_TOL {
            out.push(Violation::new(
                "joint_prior",
                format!("joint prior sums to {total}"),
                (total - 1.0).abs(),
            ));
        }
        for (k, (loc, marginal)) in self
            .locations
            .iter()
            .zip(marginals_of(&space, table))
            .enumerate()
        {
            let gap = loc
                .prior
                .iter()
                .zip(&marginal)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if gap > PROB_TOL {
                out.push(Violation::new(
                    format!("locations[{k}].prior"),
                    format!("disagrees with the joint prior marginal by {gap}"),
                    gap,
                ));
            }
        }
        out
    }
}

/// Per-location marginals of a dense joint table.
pub fn marginals_of(space: &ProductSpace, table: &[f64]) -> Vec<Vec<f64>> {
    let mut marginals: Vec<Vec<f64>> = space.radices().iter().map(|&r| vec![0.0; r]).collect();
    let mut coords = vec![0; space.radices().len()];
    for (i, &p) in table.iter().enumerate() {
        space.decode_into(i, &mut coords);
        for (m, &c) in marginals.iter_mut().zip(&coords) {
            m[c] += p;
        }
    }
    marginals
}

/// Reads a probability, mapping rounding noise below zero to exactly zero.
#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    if p < 0.0 {
        0.0
    } else {
        p
    }
}

fn check_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    what: &str,
) -> Result<()> {
    for (i, row) in rows.enumerate() {
        if let Some(p) = row.iter().find(|&&p| !p.is_finite() || p < NEG_CLAMP) {
            return Err(Error::Input(format!("{what} row {i} has invalid entry {p}")));
        }
        let total: f64 = row.iter().map(|&p| clamp_prob(p)).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::Input(format!("{what} row {i} sums to {total}")));
        }
    }
    Ok(())
}

/// σ(s|ω) over a finite signal set; `table[ω * n_signals + s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedMechanism {
    signals: Vec<String>,
    table: Vec<f64>,
}

impl CentralizedMechanism {
    pub fn new(signals: Vec<String>, table: Vec<f64>) -> Result<Self> {
        if signals.is_empty() || !table.len().is_multiple_of(signals.len()) {
            return Err(Error::Input(format!(
                "mechanism table of {} entries does not fit {} signals",
                table.len(),
                signals.len()
            )));
        }
        check_rows(table.chunks(signals.len()), "mechanism")?;
        let table = table.into_iter().map(clamp_prob).collect();
        Ok(Self { signals, table })
    }

    /// Direct mechanism over actions `0..=K`, signal `a` recommending action `a`.
    pub fn direct(num_locations: usize, table: Vec<f64>) -> Result<Self> {
        Self::new((0..=num_locations).map(|a| a.to_string()).collect(), table)
    }

    pub fn signals(&self) -> &[String] {
        &self.signals
    }

    pub fn num_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn num_states(&self) -> usize {
        self.table.len() / self.signals.len()
    }

    pub fn prob(&self, state: usize, signal: usize) -> f64 {
        self.table[state * self.signals.len() + signal]
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let n = self.signals.len();
        &self.table[state * n..(state + 1) * n]
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// σ_k(s_k|ω_k) for one location; `rows[ω_k][s_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMechanism {
    pub signals: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl LocalMechanism {
    pub fn new(signals: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.iter().any(|r| r.len() != signals.len()) {
            return Err(Error::Input(format!(
                "local mechanism rows must have {} entries",
                signals.len()
            )));
        }
        check_rows(rows.iter().map(Vec::as_slice), "local mechanism")?;
        let rows = rows
            .into_iter()
            .map(|r| r.into_iter().map(clamp_prob).collect())
            .collect();
        Ok(Self { signals, rows })
    }

    /// Binary signal set {0, 1} with `send_one[ω_k] = σ_k(1|ω_k)`.
    pub fn binary(send_one: &[f64]) -> Result<Self> {
        Self::new(
            vec!["0".into(), "1".into()],
            send_one.iter().map(|&q| vec![1.0 - q, q]).collect(),
        )
    }

    /// Binary mechanism that sends 0 in every state.
    pub fn silent(num_states: usize) -> Self {
        Self {
            signals: vec!["0".into(), "1".into()],
            rows: vec![vec![1.0, 0.0]; num_states],
        }
    }

    pub fn num_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn is_binary(&self) -> bool {
        self.signals.len() == 2
    }

    /// σ_k(1|ω_k) per state; only meaningful for binary mechanisms.
    pub fn send_one(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r[1]).collect()
    }
}

/// Product mechanism σ(s|ω) = Π_k σ_k(s_k|ω_k).
#[derive(Debug, Clone, PartialEq)]
pub struct DecentralizedMechanism {
    pub per_location: Vec<LocalMechanism>,
}

impl DecentralizedMechanism {
    pub fn new(per_location: Vec<LocalMechanism>) -> Self {
        Self { per_location }
    }

    pub fn binary(send_one: &[Vec<f64>]) -> Result<Self> {
        Ok(Self::new(
            send_one
                .iter()
                .map(|q| LocalMechanism::binary(q))
                .collect::<Result<_>>()?,
        ))
    }

    pub fn is_binary(&self) -> bool {
        self.per_location.iter().all(LocalMechanism::is_binary)
    }

    pub fn signal_space(&self) -> ProductSpace {
        ProductSpace::new(self.per_location.iter().map(|l| l.num_signals()).collect())
    }

    pub fn check_shape(&self, system: &SystemModel) -> Result<()> {
        if self.per_location.len() != system.num_locations() {
            return Err(Error::Input(format!(
                "mechanism has {} locations, system has {}",
                self.per_location.len(),
                system.num_locations()
            )));
        }
        for (k, (m, loc)) in self.per_location.iter().zip(&system.locations).enumerate() {
            if m.rows.len() != loc.num_states() {
                return Err(Error::Input(format!(
                    "location {k} mechanism has {} rows for {} states",
                    m.rows.len(),
                    loc.num_states()
                )));
            }
        }
        Ok(())
    }

    /// Expands to the joint conditional table over the product signal space.
    pub fn to_centralized(&self, system: &SystemModel) -> Result<CentralizedMechanism> {
        self.check_shape(system)?;
        let states = system.state_space();
        let signals = self.signal_space();
        let mut table = Vec::with_capacity(states.size() * signals.size());
        let mut w = vec![0; states.radices().len()];
        let mut s = vec![0; signals.radices().len()];
        for wi in 0..states.size() {
            states.decode_into(wi, &mut w);
            for si in 0..signals.size() {
                signals.decode_into(si, &mut s);
                let p: f64 = self
                    .per_location
                    .iter()
                    .enumerate()
                    .map(|(k, m)| m.rows[w[k]][s[k]])
                    .product();
                table.push(p);
            }
        }
        let labels = (0..signals.size())
            .map(|si| {
                let s = signals.decode(si);
                let parts: Vec<&str> = s
                    .iter()
                    .enumerate()
                    .map(|(k, &x)| self.per_location[k].signals[x].as_str())
                    .collect();
                format!("({})", parts.join(","))
            })
            .collect();
        CentralizedMechanism::new(labels, table)
    }
}

/// f(a|s) over actions `0..=K` (0 = leave); `rows[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerStrategy {
    pub rows: Vec<Vec<f64>>,
}

impl CustomerStrategy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        check_rows(rows.iter().map(Vec::as_slice), "strategy")?;
        Ok(Self { rows })
    }

    /// Pure strategy taking `actions[s]` on signal `s`.
    pub fn pure(num_locations: usize, actions: &[usize]) -> Self {
        let rows = actions
            .iter()
            .map(|&a| {
                let mut row = vec![0.0; num_locations + 1];
                row[a] = 1.0;
                row
            })
            .collect();
        Self { rows }
    }

    /// Follow the recommendation of a direct mechanism.
    pub fn obedient(num_locations: usize) -> Self {
        let actions: Vec<usize> = (0..=num_locations).collect();
        Self::pure(num_locations, &actions)
    }

    pub fn num_actions(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// Most likely action on signal `s`, smallest index on ties.
    pub fn action(&self, s: usize) -> usize {
        let row = &self.rows[s];
        let mut best = 0;
        for (a, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = a;
            }
        }
        best
    }

    /// Membership in the class that joins only locations signalling 1 and
    /// never leaves when some location signals 1. Signals are binary vectors
    /// in canonical order (location 0 is the lowest bit).
    pub fn is_fd(&self, num_locations: usize) -> bool {
        if self.rows.len() != 1 << num_locations {
            return false;
        }
        self.rows.iter().enumerate().all(|(u, row)| {
            if row.len() != num_locations + 1 {
                return false;
            }
            if u != 0 && row[0] > PROB_TOL {
                return false;
            }
            (0..num_locations).all(|k| (u >> k) & 1 == 1 || row[k + 1] <= PROB_TOL)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalStat {
    pub signal: usize,
    pub label: String,
    pub probability: f64,
    /// E[h_k(ω_k) | s] for each location.
    pub posterior_utility: Vec<f64>,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub throughput: f64,
    pub value: f64,
    pub per_location_throughput: Vec<f64>,
    pub signal_stats: Vec<SignalStat>,
    /// Whether the evaluated strategy is a best response (up to the slack tolerance).
    pub optimal_strategy_ok: bool,
    /// Smallest (chosen-action utility − best utility) across positive-probability signals.
    pub worst_obedience_slack: f64,
}
