//! Brute-force ground truth: exact Bayesian best responses, enumeration of
//! throughput and value, the full- and no-information baselines, and grid
//! searches over binary decentralized mechanisms.
//!
//! Nothing here calls into the LP solver; solvers are tested against it.

use crate::decentralized::{obedience_verdict, LocalStats, ObedienceVerdict};
use crate::error::{Error, Result};
use crate::model::{
    CentralizedMechanism, CustomerStrategy, DecentralizedMechanism, EvaluationReport,
    LocalMechanism, SignalStat, SystemModel,
};
use crate::GUARANTEE_TOL;

/// Signals at or below this probability are skipped when forming posteriors.
pub const SIGNAL_PROB_EPS: f64 = 1e-12;
/// Absolute tolerance for ties in the customer's expected utility.
pub const UTILITY_TIE_TOL: f64 = 1e-9;
/// Parameter-count guard for [`grid_search_decentralized`].
pub const MAX_GRID_PARAMS: usize = 8;
/// Candidate-count guard for grid searches.
pub const MAX_GRID_CANDIDATES: u64 = 400_000_000;

/// Anything that induces σ(s|ω) over a finite signal set.
pub trait Mechanism {
    fn num_signals(&self) -> usize;
    fn signal_label(&self, s: usize) -> String;
    /// Dense σ(s|ω), state-major, validated against `system`'s shape.
    fn conditional_table(&self, system: &SystemModel) -> Result<Vec<f64>>;
}

impl Mechanism for CentralizedMechanism {
    fn num_signals(&self) -> usize {
        CentralizedMechanism::num_signals(self)
    }

    fn signal_label(&self, s: usize) -> String {
        self.signals()[s].clone()
    }

    fn conditional_table(&self, system: &SystemModel) -> Result<Vec<f64>> {
        let n = system.state_space().size();
        if self.num_states() != n {
            return Err(Error::Input(format!(
                "mechanism covers {} states, system has {n}",
                self.num_states()
            )));
        }
        Ok(self.table().to_vec())
    }
}

impl Mechanism for DecentralizedMechanism {
    fn num_signals(&self) -> usize {
        self.signal_space().size()
    }

    fn signal_label(&self, s: usize) -> String {
        let coords = self.signal_space().decode(s);
        let parts: Vec<&str> = coords
            .iter()
            .enumerate()
            .map(|(k, &x)| self.per_location[k].signals[x].as_str())
            .collect();
        format!("({})", parts.join(","))
    }

    fn conditional_table(&self, system: &SystemModel) -> Result<Vec<f64>> {
        Ok(self.to_centralized(system)?.table().to_vec())
    }
}

/// P(ŝ = s) and E[h_k(ω̂_k) 1{ŝ = s}] for every signal.
#[derive(Debug, Clone)]
pub struct SignalMoments {
    pub prob: Vec<f64>,
    /// `mass[s][k]`
    pub mass: Vec<Vec<f64>>,
}

impl SignalMoments {
    /// Posterior expected utility of joining each location, or `None` for
    /// (numerically) zero-probability signals.
    pub fn posterior(&self, s: usize) -> Option<Vec<f64>> {
        let p = self.prob[s];
        (p > SIGNAL_PROB_EPS).then(|| self.mass[s].iter().map(|m| m / p).collect())
    }
}

pub fn signal_moments(system: &SystemModel, mech: &impl Mechanism) -> Result<SignalMoments> {
    let table = mech.conditional_table(system)?;
    let ns = mech.num_signals();
    let k = system.num_locations();
    let mu = system.joint_table();
    let space = system.state_space();
    let mut prob = vec![0.0; ns];
    let mut mass = vec![vec![0.0; k]; ns];
    let mut w = vec![0; k];
    for (wi, &m) in mu.iter().enumerate() {
        if m == 0.0 {
            continue;
        }
        space.decode_into(wi, &mut w);
        let h: Vec<f64> = (0..k).map(|l| system.locations[l].utility[w[l]]).collect();
        for s in 0..ns {
            let weight = m * table[wi * ns + s];
            if weight == 0.0 {
                continue;
            }
            prob[s] += weight;
            for (acc, hl) in mass[s].iter_mut().zip(&h) {
                *acc += weight * hl;
            }
        }
    }
    Ok(SignalMoments { prob, mass })
}

/// System-favoring choice among near-maximizers of `utilities`
/// (`utilities[0]` is leaving): largest payoff, then smallest index.
fn choose_action(utilities: &[f64], payoff: &[f64]) -> usize {
    let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut chosen = 0;
    let mut chosen_v = f64::NEG_INFINITY;
    for (a, &u) in utilities.iter().enumerate() {
        if u >= best - UTILITY_TIE_TOL {
            let v = if a == 0 { 0.0 } else { payoff[a - 1] };
            if v > chosen_v {
                chosen = a;
                chosen_v = v;
            }
        }
    }
    chosen
}

fn action_utilities(posterior: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(posterior.iter().copied()).collect()
}

/// Pure best response with system-favoring tie-breaking.
pub fn best_response(system: &SystemModel, mech: &impl Mechanism) -> Result<CustomerStrategy> {
    let moments = signal_moments(system, mech)?;
    let payoff = system.payoffs();
    let actions: Vec<usize> = (0..mech.num_signals())
        .map(|s| match moments.posterior(s) {
            Some(post) => choose_action(&action_utilities(&post), &payoff),
            None => 0,
        })
        .collect();
    Ok(CustomerStrategy::pure(system.num_locations(), &actions))
}

/// Exact throughput, value and diagnostics of `strategy` against `mech`.
pub fn evaluate(
    system: &SystemModel,
    mech: &impl Mechanism,
    strategy: &CustomerStrategy,
) -> Result<EvaluationReport> {
    let k = system.num_locations();
    let ns = mech.num_signals();
    if strategy.rows.len() != ns || strategy.rows.iter().any(|r| r.len() != k + 1) {
        return Err(Error::Input(format!(
            "strategy shape {}x{} does not match {ns} signals and {} actions",
            strategy.rows.len(),
            strategy.num_actions(),
            k + 1
        )));
    }
    let moments = signal_moments(system, mech)?;
    let mut per_location = vec![0.0; k];
    let mut stats = Vec::new();
    let mut worst = 0.0f64;
    for s in 0..ns {
        let p = moments.prob[s];
        for (t, f) in per_location.iter_mut().zip(&strategy.rows[s][1..]) {
            *t += p * f;
        }
        let Some(post) = moments.posterior(s) else {
            continue;
        };
        let utilities = action_utilities(&post);
        let best = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (a, &f) in strategy.rows[s].iter().enumerate() {
            if f > SIGNAL_PROB_EPS {
                worst = worst.min(utilities[a] - best);
            }
        }
        stats.push(SignalStat {
            signal: s,
            label: mech.signal_label(s),
            probability: p,
            posterior_utility: post,
            action: strategy.action(s),
        });
    }
    let throughput = per_location.iter().sum();
    let value = per_location
        .iter()
        .zip(&system.locations)
        .map(|(t, l)| t * l.payoff)
        .sum();
    Ok(EvaluationReport {
        throughput,
        value,
        per_location_throughput: per_location,
        signal_stats: stats,
        optimal_strategy_ok: worst >= -GUARANTEE_TOL,
        worst_obedience_slack: worst,
    })
}

/// Best response followed by evaluation.
pub fn evaluate_best_response(
    system: &SystemModel,
    mech: &impl Mechanism,
) -> Result<(CustomerStrategy, EvaluationReport)> {
    let f = best_response(system, mech)?;
    let report = evaluate(system, mech, &f)?;
    Ok((f, report))
}

/// Each location reveals its own state.
pub fn full_information(system: &SystemModel) -> DecentralizedMechanism {
    DecentralizedMechanism::new(
        system
            .locations
            .iter()
            .map(|l| {
                let n = l.num_states();
                LocalMechanism {
                    signals: l.states.clone(),
                    rows: (0..n)
                        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                        .collect(),
                }
            })
            .collect(),
    )
}

/// Each location sends the same signal regardless of its state.
pub fn no_information(system: &SystemModel) -> DecentralizedMechanism {
    DecentralizedMechanism::new(
        system
            .locations
            .iter()
            .map(|l| LocalMechanism {
                signals: vec!["-".into()],
                rows: vec![vec![1.0]; l.num_states()],
            })
            .collect(),
    )
}

/// Strategy in the F_d class that is optimal under a binary decentralized
/// mechanism, found by exhaustive search over signal vectors, if one exists.
pub fn fd_optimal_strategy(
    system: &SystemModel,
    mech: &DecentralizedMechanism,
) -> Result<Option<CustomerStrategy>> {
    if !mech.is_binary() {
        return Err(Error::Input("F_d strategies need binary signals".into()));
    }
    let k = system.num_locations();
    let moments = signal_moments(system, mech)?;
    let mut actions = Vec::with_capacity(1 << k);
    for u in 0..(1usize << k) {
        let sending: Vec<usize> = (0..k).filter(|&l| (u >> l) & 1 == 1).collect();
        let Some(post) = moments.posterior(u) else {
            actions.push(sending.first().map_or(0, |&l| l + 1));
            continue;
        };
        let best = post.iter().copied().fold(0.0, f64::max);
        if u == 0 {
            if best > UTILITY_TIE_TOL {
                return Ok(None);
            }
            actions.push(0);
            continue;
        }
        match sending.iter().find(|&&l| post[l] >= best - UTILITY_TIE_TOL) {
            Some(&l) => actions.push(l + 1),
            None => return Ok(None),
        }
    }
    Ok(Some(CustomerStrategy::pure(k, &actions)))
}

/// Grid {0, r, 2r, …, 1}.
pub fn grid_points(resolution: f64) -> Result<Vec<f64>> {
    if !(resolution > 0.0 && resolution < 1.0) {
        return Err(Error::Input(format!(
            "grid resolution {resolution} is outside (0, 1)"
        )));
    }
    let steps = (1.0 / resolution - 1e-9).ceil() as usize;
    Ok((0..=steps).map(|i| (i as f64 * resolution).min(1.0)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub mechanism: DecentralizedMechanism,
    pub throughput: f64,
    pub candidates: u64,
    /// Candidates that passed the filter (all of them for the unfiltered search).
    pub accepted: u64,
}

fn check_grid_size(system: &SystemModel, points: usize) -> Result<u64> {
    let params: usize = system.locations.iter().map(|l| l.num_states()).sum();
    if params > MAX_GRID_PARAMS {
        return Err(Error::Input(format!(
            "grid search over {params} parameters exceeds the guard of {MAX_GRID_PARAMS}"
        )));
    }
    let total = (points as u64).checked_pow(params as u32).unwrap_or(u64::MAX);
    if total > MAX_GRID_CANDIDATES {
        return Err(Error::Input(format!(
            "grid search would evaluate {total} candidates (limit {MAX_GRID_CANDIDATES})"
        )));
    }
    Ok(total)
}

fn odometer_next(digits: &mut [usize], base: &[usize]) -> bool {
    for (d, &b) in digits.iter_mut().zip(base) {
        *d += 1;
        if *d < b {
            return true;
        }
        *d = 0;
    }
    false
}

/// Exhaustive search over binary decentralized mechanisms with σ_k(1|ω_k)
/// on a grid; every candidate is scored by its best-response throughput.
/// Works for joint priors as well; the result is a lower bound on Th_D.
pub fn grid_search_decentralized(system: &SystemModel, resolution: f64) -> Result<GridResult> {
    let points = grid_points(resolution)?;
    let candidates = check_grid_size(system, points.len())?;
    let k = system.num_locations();
    let space = system.state_space();
    let mu = system.joint_table();
    let payoff = system.payoffs();
    // (μ(ω), state tuple, h_k(ω_k)) for positive-probability states
    let support: Vec<(f64, Vec<usize>, Vec<f64>)> = mu
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, &m)| {
            let w = space.decode(i);
            let h = (0..k).map(|l| system.locations[l].utility[w[l]]).collect();
            (m, w, h)
        })
        .collect();
    let offsets: Vec<usize> = system
        .locations
        .iter()
        .scan(0, |acc, l| {
            let o = *acc;
            *acc += l.num_states();
            Some(o)
        })
        .collect();
    let params: usize = system.locations.iter().map(|l| l.num_states()).sum();
    let nu = 1usize << k;
    let mut digits = vec![0usize; params];
    let base = vec![points.len(); params];
    let mut prob = vec![0.0; nu];
    let mut mass = vec![0.0; nu * k];
    let mut dist = vec![0.0; nu];
    let mut best_t = f64::NEG_INFINITY;
    let mut best_digits = digits.clone();
    let mut utilities = vec![0.0; k + 1];
    loop {
        prob.iter_mut().for_each(|p| *p = 0.0);
        mass.iter_mut().for_each(|p| *p = 0.0);
        for (m, w, h) in &support {
            dist[0] = *m;
            let mut len = 1;
            for l in 0..k {
                let q = points[digits[offsets[l] + w[l]]];
                for u in 0..len {
                    let d = dist[u];
                    dist[u] = d * (1.0 - q);
                    dist[u + len] = d * q;
                }
                len *= 2;
            }
            for u in 0..nu {
                let d = dist[u];
                if d != 0.0 {
                    prob[u] += d;
                    for l in 0..k {
                        mass[u * k + l] += d * h[l];
                    }
                }
            }
        }
        let mut t = 0.0;
        for u in 0..nu {
            if prob[u] > SIGNAL_PROB_EPS {
                utilities[0] = 0.0;
                for l in 0..k {
                    utilities[l + 1] = mass[u * k + l] / prob[u];
                }
                if choose_action(&utilities, &payoff) != 0 {
                    t += prob[u];
                }
            }
        }
        if t > best_t + 1e-15 {
            best_t = t;
            best_digits.copy_from_slice(&digits);
        }
        if !odometer_next(&mut digits, &base) {
            break;
        }
    }
    let send_one: Vec<Vec<f64>> = (0..k)
        .map(|l| {
            (0..system.locations[l].num_states())
                .map(|i| points[best_digits[offsets[l] + i]])
                .collect()
        })
        .collect();
    Ok(GridResult {
        mechanism: DecentralizedMechanism::binary(&send_one)?,
        throughput: best_t,
        candidates,
        accepted: candidates,
    })
}

/// Grid search restricted to mechanisms admitting an optimal F_d strategy
/// (checked with the two-condition characterization); each accepted
/// candidate is scored by the closed form 1 − Π_k (1 − P(u_k = 1)).
pub fn grid_search_obedient(system: &SystemModel, resolution: f64) -> Result<GridResult> {
    if !system.is_independent() {
        return Err(Error::Input(
            "obedience-filtered grid search requires independent locations".into(),
        ));
    }
    let points = grid_points(resolution)?;
    let candidates = check_grid_size(system, points.len())?;
    // per-location grid points and their sufficient statistics
    let per_location: Vec<Vec<(Vec<f64>, LocalStats)>> = system
        .locations
        .iter()
        .map(|loc| {
            let n = loc.num_states();
            let mut digits = vec![0; n];
            let base = vec![points.len(); n];
            let mut out = Vec::new();
            loop {
                let q: Vec<f64> = digits.iter().map(|&d| points[d]).collect();
                out.push((q.clone(), LocalStats::new(loc, &q)));
                if !odometer_next(&mut digits, &base) {
                    break;
                }
            }
            out
        })
        .collect();
    let base: Vec<usize> = per_location.iter().map(Vec::len).collect();
    let mut digits = vec![0; base.len()];
    let mut stats: Vec<LocalStats> = digits.iter().enumerate().map(|(l, &d)| per_location[l][d].1).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut accepted = 0;
    loop {
        for (l, &d) in digits.iter().enumerate() {
            stats[l] = per_location[l][d].1;
        }
        if obedience_verdict(&stats) != ObedienceVerdict::Neither {
            accepted += 1;
            let t = 1.0 - stats.iter().map(|s| 1.0 - s.send_one).product::<f64>();
            if best.as_ref().is_none_or(|(bt, _)| t > *bt + 1e-15) {
                best = Some((t, digits.clone()));
            }
        }
        if !odometer_next(&mut digits, &base) {
            break;
        }
    }
    // the all-zero mechanism always passes condition (II) unless some E[h] > 0,
    // and then condition (I) holds for the all-one mechanism at that location
    let (throughput, best_digits) =
        best.ok_or_else(|| Error::Internal("no grid candidate admits an F_d strategy".into()))?;
    let send_one: Vec<Vec<f64>> = best_digits
        .iter()
        .enumerate()
        .map(|(l, &d)| per_location[l][d].0.clone())
        .collect();
    Ok(GridResult {
        mechanism: DecentralizedMechanism::binary(&send_one)?,
        throughput,
        candidates,
        accepted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LocationModel;

    fn single(p_good: f64) -> SystemModel {
        SystemModel::independent(vec![LocationModel::with_indexed_states(
            "a",
            vec![p_good, 1.0 - p_good],
            vec![1.0, -1.0],
        )])
        .unwrap()
    }

    #[test]
    fn no_information_negative_mean_leaves() {
        let sys = single(0.2);
        let mech = no_information(&sys);
        let f = best_response(&sys, &mech).unwrap();
        assert_eq!(f.action(0), 0);
        let r = evaluate(&sys, &mech, &f).unwrap();
        assert_eq!(r.throughput, 0.0);
        assert!((r.signal_stats[0].posterior_utility[0] + 0.6).abs() < 1e-12);
    }

    #[test]
    fn no_information_nonnegative_mean_joins() {
        let sys = single(0.5);
        let (_, r) = evaluate_best_response(&sys, &no_information(&sys)).unwrap();
        assert!((r.throughput - 1.0).abs() < 1e-12);
    }

    #[test]
    fn full_information_joins_good_state() {
        let sys = single(0.2);
        let (_, r) = evaluate_best_response(&sys, &full_information(&sys)).unwrap();
        assert!((r.throughput - 0.2).abs() < 1e-12);
    }

    #[test]
    fn leave_everywhere_is_zero() {
        let sys = single(0.2);
        let mech = full_information(&sys);
        let f = CustomerStrategy::pure(1, &[0, 0]);
        let r = evaluate(&sys, &mech, &f).unwrap();
        assert_eq!((r.throughput, r.value), (0.0, 0.0));
        assert!(!r.optimal_strategy_ok);
    }

    #[test]
    fn constant_signals_follow_product_formula() {
        let loc = |p: f64| LocationModel::with_indexed_states("l", vec![p, 1.0 - p], vec![1.0, -1.0]);
        let sys = SystemModel::independent(vec![loc(0.3), loc(0.6)]).unwrap();
        let mech = DecentralizedMechanism::binary(&[vec![0.3, 0.3], vec![0.5, 0.5]]).unwrap();
        let f = CustomerStrategy::pure(2, &[0, 1, 2, 2]);
        let r = evaluate(&sys, &mech, &f).unwrap();
        assert!((r.throughput - 0.65).abs() < 1e-12);
        let sum: f64 = r.per_location_throughput.iter().sum();
        assert!((sum - r.throughput).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let sys = single(0.2);
        let mech = full_information(&sys);
        let f = CustomerStrategy::pure(1, &[0]);
        assert!(matches!(evaluate(&sys, &mech, &f), Err(Error::Input(_))));
    }

    #[test]
    fn ties_favor_payoff_then_index() {
        assert_eq!(choose_action(&[0.0, 0.0, 0.0], &[1.0, 1.0]), 1);
        assert_eq!(choose_action(&[0.0, 0.0, 0.0], &[1.0, 2.0]), 2);
        assert_eq!(choose_action(&[0.0, 0.0, 0.0], &[-1.0, -2.0]), 0);
        assert_eq!(choose_action(&[0.0, -1e-10, 0.5], &[5.0, 1.0]), 2);
    }

    #[test]
    fn grid_points_cover_unit_interval() {
        let g = grid_points(0.25).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid_points(0.02).unwrap().len(), 51);
        assert!(grid_points(0.0).is_err());
        assert!(grid_points(1.0).is_err());
    }

    #[test]
    fn grid_single_location() {
        let sys = single(0.2);
        let g = grid_search_decentralized(&sys, 0.01).unwrap();
        assert!((g.throughput - 0.4).abs() <= 0.01, "{}", g.throughput);
        let o = grid_search_obedient(&sys, 0.01).unwrap();
        assert!((o.throughput - 0.4).abs() <= 0.01, "{}", o.throughput);
    }

    #[test]
    fn grid_all_negative_is_zero() {
        let loc = LocationModel::with_indexed_states("l", vec![0.4, 0.6], vec![-0.5, -1.0]);
        let sys = SystemModel::independent(vec![loc.clone(), loc]).unwrap();
        let g = grid_search_decentralized(&sys, 0.1).unwrap();
        assert_eq!(g.throughput, 0.0);
    }

    #[test]
    fn grid_guard() {
        let loc = LocationModel::with_indexed_states("l", vec![0.2, 0.3, 0.5], vec![1.0, -1.0, 0.0]);
        let sys = SystemModel::independent(vec![loc.clone(), loc.clone(), loc]).unwrap();
        assert!(matches!(
            grid_search_decentralized(&sys, 0.5),
            Err(Error::Input(_))
        ));
    }
}
