//! Optimal direct (obedient-recommendation) mechanisms via linear programming.
//!
//! Variables are σ(a|ω) for every state tuple ω (canonical order) and every
//! action a ∈ {0, …, K}, laid out as `ω * (K + 1) + a`.

use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{CentralizedMechanism, CustomerStrategy, EvaluationReport, SystemModel};
use crate::oracle;

/// Column of σ(action | state) in the centralized LP.
pub fn var_index(num_locations: usize, state: usize, action: usize) -> usize {
    state * (num_locations + 1) + action
}

fn require_valid(system: &SystemModel) -> Result<()> {
    let violations = system.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(violations))
    }
}

/// Builds the obedience LP. Constraint order: the K² cross-location rows
/// (including the trivial k = ℓ rows), the K join-vs-leave rows, the K
/// leave-recommendation rows, then one stochasticity row per state.
pub fn build_centralized_lp(system: &SystemModel, weighted: bool) -> Result<LinearProgram> {
    require_valid(system)?;
    let k = system.num_locations();
    let space = system.state_space();
    let mu = system.joint_table();
    let n_states = space.size();
    let width = k + 1;
    let mut lp = LinearProgram::new(n_states * width);

    let states: Vec<Vec<usize>> = space.iter().collect();
    let h = |l: usize, w: &[usize]| system.locations[l].utility[w[l]];

    for wi in 0..n_states {
        for a in 1..=k {
            let weight = if weighted { system.locations[a - 1].payoff } else { 1.0 };
            lp.objective[var_index(k, wi, a)] = mu[wi] * weight;
        }
    }
    for rec in 0..k {
        for other in 0..k {
            let mut row = vec![0.0; lp.n_vars()];
            for (wi, w) in states.iter().enumerate() {
                row[var_index(k, wi, rec + 1)] = mu[wi] * (h(rec, w) - h(other, w));
            }
            lp.add_constraint(row, Relation::Ge, 0.0);
        }
    }
    for rec in 0..k {
        let mut row = vec![0.0; lp.n_vars()];
        for (wi, w) in states.iter().enumerate() {
            row[var_index(k, wi, rec + 1)] = mu[wi] * h(rec, w);
        }
        lp.add_constraint(row, Relation::Ge, 0.0);
    }
    for l in 0..k {
        let mut row = vec![0.0; lp.n_vars()];
        for (wi, w) in states.iter().enumerate() {
            row[var_index(k, wi, 0)] = mu[wi] * h(l, w);
        }
        lp.add_constraint(row, Relation::Le, 0.0);
    }
    for wi in 0..n_states {
        let mut row = vec![0.0; lp.n_vars()];
        row[var_index(k, wi, 0)..var_index(k, wi, 0) + width].fill(1.0);
        lp.add_constraint(row, Relation::Eq, 1.0);
    }
    Ok(lp)
}

#[derive(Debug, Clone)]
pub struct CentralizedSolution {
    pub mechanism: CentralizedMechanism,
    pub report: EvaluationReport,
    /// LP optimum: Th when unweighted, Val when weighted.
    pub objective: f64,
}

/// Solves the obedience LP and evaluates the result under the obedient strategy.
pub fn solve_centralized(system: &SystemModel, weighted: bool) -> Result<CentralizedSolution> {
    let lp = build_centralized_lp(system, weighted)?;
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Err(Error::Internal(
                "centralized LP reported infeasible, but always recommending 0 is feasible".into(),
            ))
        }
        LpStatus::Unbounded => {
            return Err(Error::Internal(
                "centralized LP reported unbounded, but its objective is bounded by Σ|w_k|".into(),
            ))
        }
    }
    let k = system.num_locations();
    // Renormalize each row after clamping solver noise below zero.
    let mut table = Vec::with_capacity(sol.x.len());
    for row in sol.x.chunks(k + 1) {
        let clamped: Vec<f64> = row.iter().map(|&p| p.clamp(0.0, 1.0)).collect();
        let total: f64 = clamped.iter().sum();
        table.extend(clamped.iter().map(|p| p / total));
    }
    let mechanism = CentralizedMechanism::direct(k, table)?;
    let report = oracle::evaluate(system, &mechanism, &CustomerStrategy::obedient(k))?;
    Ok(CentralizedSolution {
        mechanism,
        report,
        objective: sol.objective_value,
    })
}

/// T_k(σ) = Σ_ω μ(ω) σ(k|ω) for a direct mechanism under obedience.
pub fn per_location_throughput(system: &SystemModel, mech: &CentralizedMechanism) -> Vec<f64> {
    let k = system.num_locations();
    let mu = system.joint_table();
    (1..=k)
        .map(|a| mu.iter().enumerate().map(|(wi, m)| m * mech.prob(wi, a)).sum())
        .collect()
}

/// Smallest slack of the obedience constraints (negative means violated).
pub fn obedience_slack(system: &SystemModel, mech: &CentralizedMechanism) -> Result<f64> {
    let k = system.num_locations();
    if mech.num_signals() != k + 1 || mech.num_states() != system.state_space().size() {
        return Err(Error::Input(format!(
            "direct mechanism must have {} signals over {} states",
            k + 1,
            system.state_space().size()
        )));
    }
    let space = system.state_space();
    let mu = system.joint_table();
    // mass[s][l] = Σ_ω μ σ(s|ω) h_l(ω_l)
    let mut mass = vec![vec![0.0; k]; k + 1];
    for (wi, w) in space.iter().enumerate() {
        for s in 0..=k {
            let weight = mu[wi] * mech.prob(wi, s);
            for l in 0..k {
                mass[s][l] += weight * system.locations[l].utility[w[l]];
            }
        }
    }
    let mut slack = f64::INFINITY;
    for rec in 0..k {
        slack = slack.min(mass[rec + 1][rec]);
        for other in 0..k {
            slack = slack.min(mass[rec + 1][rec] - mass[rec + 1][other]);
        }
    }
    for l in 0..k {
        slack = slack.min(-mass[0][l]);
    }
    Ok(slack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LocationModel;

    fn single(p_good: f64, h: [f64; 2]) -> SystemModel {
        SystemModel::independent(vec![LocationModel::with_indexed_states(
            "a",
            vec![p_good, 1.0 - p_good],
            h.to_vec(),
        )])
        .unwrap()
    }

    #[test]
    fn dimensions_single_location() {
        let lp = build_centralized_lp(&single(0.2, [1.0, -1.0]), false).unwrap();
        assert_eq!(lp.n_vars(), 4);
        let eq = lp.constraints.iter().filter(|c| c.relation == Relation::Eq).count();
        assert_eq!(lp.constraints.len() - eq, 3);
        assert_eq!(eq, 2);
    }

    #[test]
    fn single_location_persuasion() {
        // p·1 + (1−p)·z·(−1) = 0 ⇒ z = 0.25, Th = 0.2 + 0.8·0.25
        let sol = solve_centralized(&single(0.2, [1.0, -1.0]), false).unwrap();
        assert!((sol.objective - 0.4).abs() < 1e-9);
        assert!((sol.report.throughput - 0.4).abs() < 1e-9);
        assert!((sol.mechanism.prob(0, 1) - 1.0).abs() < 1e-9);
        assert!((sol.mechanism.prob(1, 1) - 0.25).abs() < 1e-9);
        assert!(sol.report.optimal_strategy_ok);
    }

    #[test]
    fn nonnegative_utility_gives_full_throughput() {
        let sol = solve_centralized(&single(0.3, [2.0, 0.0]), false).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.mechanism.prob(1, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn slack_detects_disobedience() {
        let sys = single(0.2, [1.0, -1.0]);
        let always_join = CentralizedMechanism::direct(1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let s = obedience_slack(&sys, &always_join).unwrap();
        assert!((s + 0.6).abs() < 1e-12);
        let never = CentralizedMechanism::direct(1, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(obedience_slack(&sys, &never).unwrap().abs() < 1e-12);
    }

    #[test]
    fn per_location_sum_matches_objective() {
        let loc = |p: f64| LocationModel::with_indexed_states("l", vec![p, 1.0 - p], vec![1.0, -1.0]);
        let sys = SystemModel::independent(vec![loc(0.2), loc(0.35)]).unwrap();
        let sol = solve_centralized(&sys, false).unwrap();
        let t = per_location_throughput(&sys, &sol.mechanism);
        assert!((t.iter().sum::<f64>() - sol.objective).abs() < 1e-9);
        assert!(obedience_slack(&sys, &sol.mechanism).unwrap() >= -1e-7);
    }
}
