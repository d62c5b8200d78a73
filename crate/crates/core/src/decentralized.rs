//! Decentralized mechanisms built from per-location isolated LPs.
//!
//! For independent locations the optimal decentralized mechanism is the
//! product of the K single-location optima, and its throughput is
//! 1 − Π_k (1 − Th_k^iso). With heterogeneous payoffs the same product,
//! paired with a priority strategy, keeps the Γ_K guarantee. For correlated
//! locations [`correlated_fallback`] lets one location simulate a
//! centralized mechanism and recovers at least a 1/K share of its throughput.

use crate::centralized;
use crate::error::{Error, Result};
use crate::lp::{self, LinearProgram, LpStatus, Relation};
use crate::model::{
    marginals_of, CentralizedMechanism, CustomerStrategy, DecentralizedMechanism,
    EvaluationReport, LocalMechanism, LocationModel, PriorMode, SystemModel,
};
use crate::oracle;
use crate::GUARANTEE_TOL;

/// Tolerance for the inequalities of the two obedience conditions.
pub const OBEDIENCE_TOL: f64 = 1e-9;
/// μ_k(ω_k)·σ_k(0|ω_k) at or below this counts as zero.
pub const ZERO_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct IsolatedSolution {
    pub location: usize,
    /// Binary mechanism; signal 1 recommends joining.
    pub mechanism: LocalMechanism,
    pub th_iso: f64,
}

fn require_valid_location(location: &LocationModel) -> Result<()> {
    let v = SystemModel::from_parts(vec![location.clone()], PriorMode::Independent).validate();
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(v))
    }
}

/// Solves the single-location persuasion LP over binary signals.
pub fn solve_isolated(location: &LocationModel) -> Result<IsolatedSolution> {
    require_valid_location(location)?;
    let n = location.num_states();
    // columns: σ(0|ω) at 2ω, σ(1|ω) at 2ω + 1
    let mut lp = LinearProgram::new(2 * n);
    let mut join = vec![0.0; 2 * n];
    let mut leave = vec![0.0; 2 * n];
    for (i, (&p, &h)) in location.prior.iter().zip(&location.utility).enumerate() {
        lp.objective[2 * i + 1] = p;
        join[2 * i + 1] = p * h;
        leave[2 * i] = p * h;
    }
    lp.add_constraint(join, Relation::Ge, 0.0);
    lp.add_constraint(leave, Relation::Le, 0.0);
    for i in 0..n {
        let mut row = vec![0.0; 2 * n];
        row[2 * i] = 1.0;
        row[2 * i + 1] = 1.0;
        lp.add_constraint(row, Relation::Eq, 1.0);
    }
    let sol = lp::solve(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Internal(format!(
            "isolated LP for {:?} ended {:?}; never sending 1 is feasible",
            location.name, sol.status
        )));
    }
    let send_one: Vec<f64> = (0..n)
        .map(|i| {
            let (s0, s1) = (sol.x[2 * i].max(0.0), sol.x[2 * i + 1].max(0.0));
            (s1 / (s0 + s1)).clamp(0.0, 1.0)
        })
        .collect();
    let th_iso = location.prior.iter().zip(&send_one).map(|(p, q)| p * q).sum();
    Ok(IsolatedSolution {
        location: 0,
        mechanism: LocalMechanism::binary(&send_one)?,
        th_iso,
    })
}

/// Sufficient statistics of one location's binary mechanism.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalStats {
    /// Σ μ_k σ_k(1|·)
    pub send_one: f64,
    /// Σ μ_k σ_k(0|·)
    pub send_zero: f64,
    /// Σ μ_k σ_k(1|·) h_k
    pub gain_one: f64,
    /// Σ μ_k σ_k(0|·) h_k
    pub gain_zero: f64,
    /// max over states of μ_k σ_k(0|·)
    pub max_zero_mass: f64,
    /// Σ μ_k h_k
    pub mean_utility: f64,
}

impl LocalStats {
    pub fn new(location: &LocationModel, send_one: &[f64]) -> Self {
        let mut s = LocalStats {
            send_one: 0.0,
            send_zero: 0.0,
            gain_one: 0.0,
            gain_zero: 0.0,
            max_zero_mass: 0.0,
            mean_utility: 0.0,
        };
        for ((&p, &h), &q) in location.prior.iter().zip(&location.utility).zip(send_one) {
            let zero = p * (1.0 - q);
            s.send_one += p * q;
            s.send_zero += zero;
            s.gain_one += p * q * h;
            s.gain_zero += zero * h;
            s.max_zero_mass = s.max_zero_mass.max(zero);
            s.mean_utility += p * h;
        }
        s
    }

    /// Posterior utility of joining after signal 1, if that signal is possible.
    pub fn posterior_one(&self) -> Option<f64> {
        (self.send_one > oracle::SIGNAL_PROB_EPS).then(|| self.gain_one / self.send_one)
    }

    fn isolated_feasible(&self) -> bool {
        self.gain_one >= -OBEDIENCE_TOL && self.gain_zero <= OBEDIENCE_TOL
    }
}

/// Which of the two characterizing conditions a binary product mechanism
/// meets; `ConditionI` carries the 0-based index of the witnessing location.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObedienceVerdict {
    ConditionI(usize),
    ConditionII,
    Neither,
}

/// Condition (I) is tested first, location by location.
pub fn obedience_verdict(stats: &[LocalStats]) -> ObedienceVerdict {
    for (k, sk) in stats.iter().enumerate() {
        if sk.max_zero_mass > ZERO_MASS_TOL || sk.mean_utility < -OBEDIENCE_TOL {
            continue;
        }
        let dominates = stats.iter().enumerate().all(|(l, sl)| {
            l == k || sl.send_zero * sk.mean_utility >= sl.gain_zero - OBEDIENCE_TOL
        });
        if dominates {
            return ObedienceVerdict::ConditionI(k);
        }
    }
    if stats.iter().all(LocalStats::isolated_feasible) {
        ObedienceVerdict::ConditionII
    } else {
        ObedienceVerdict::Neither
    }
}

fn require_independent(system: &SystemModel, what: &str) -> Result<()> {
    let v = system.validate();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    if !system.is_independent() {
        return Err(Error::Input(format!(
            "{what} requires independent locations; use correlated_fallback for joint priors"
        )));
    }
    Ok(())
}

pub fn local_stats(system: &SystemModel, mech: &DecentralizedMechanism) -> Result<Vec<LocalStats>> {
    mech.check_shape(system)?;
    if !mech.is_binary() {
        return Err(Error::Input("obedience check needs binary signals at every location".into()));
    }
    Ok(system
        .locations
        .iter()
        .zip(&mech.per_location)
        .map(|(loc, m)| LocalStats::new(loc, &m.send_one()))
        .collect())
}

/// Decides whether some F_d strategy is optimal under `mech`.
pub fn check_obedience(system: &SystemModel, mech: &DecentralizedMechanism) -> Result<ObedienceVerdict> {
    require_independent(system, "the obedience characterization")?;
    Ok(obedience_verdict(&local_stats(system, mech)?))
}

/// Closed-form throughput 1 − Π_k (1 − P(u_k = 1)) of any F_d strategy.
pub fn product_throughput(system: &SystemModel, mech: &DecentralizedMechanism) -> Result<f64> {
    let stats = local_stats(system, mech)?;
    Ok(1.0 - stats.iter().map(|s| 1.0 - s.send_one).product::<f64>())
}

#[derive(Debug, Clone)]
pub struct DecentralizedSolution {
    pub mechanism: DecentralizedMechanism,
    /// F_d strategy: join the location signalling 1 with the highest
    /// posterior utility (smallest index on ties), leave on the zero vector.
    pub strategy: CustomerStrategy,
    pub report: EvaluationReport,
    pub isolated: Vec<IsolatedSolution>,
}

impl DecentralizedSolution {
    pub fn th_iso(&self) -> Vec<f64> {
        self.isolated.iter().map(|s| s.th_iso).collect()
    }

    /// 1 − Π_k (1 − Th_k^iso)
    pub fn closed_form(&self) -> f64 {
        1.0 - self.isolated.iter().map(|s| 1.0 - s.th_iso).product::<f64>()
    }
}

fn solve_all_isolated(system: &SystemModel) -> Result<Vec<IsolatedSolution>> {
    system
        .locations
        .iter()
        .enumerate()
        .map(|(k, loc)| {
            let mut s = solve_isolated(loc)?;
            s.location = k;
            Ok(s)
        })
        .collect()
}

/// Optimal decentralized mechanism for an independent system.
pub fn compose_optimal(system: &SystemModel) -> Result<DecentralizedSolution> {
    require_independent(system, "optimal decentralized composition")?;
    let isolated = solve_all_isolated(system)?;
    let mechanism = DecentralizedMechanism::new(isolated.iter().map(|s| s.mechanism.clone()).collect());
    let stats = local_stats(system, &mechanism)?;
    let k = system.num_locations();
    let actions: Vec<usize> = (0..1usize << k)
        .map(|u| {
            let mut chosen: Option<(usize, f64)> = None;
            for l in (0..k).filter(|&l| (u >> l) & 1 == 1) {
                let h = stats[l].posterior_one().unwrap_or(f64::NEG_INFINITY);
                if chosen.is_none_or(|(_, best)| h > best + oracle::UTILITY_TIE_TOL) {
                    chosen = Some((l, h));
                }
            }
            chosen.map_or(0, |(l, _)| l + 1)
        })
        .collect();
    let strategy = CustomerStrategy::pure(k, &actions);
    let report = oracle::evaluate(system, &mechanism, &strategy)?;
    Ok(DecentralizedSolution {
        mechanism,
        strategy,
        report,
        isolated,
    })
}

#[derive(Debug, Clone)]
pub struct HeterogeneousSolution {
    pub mechanism: DecentralizedMechanism,
    pub strategy: CustomerStrategy,
    pub value: f64,
    /// Retained locations, highest payoff first.
    pub order: Vec<usize>,
    /// Isolated solutions of the retained locations, in `order`.
    pub isolated: Vec<IsolatedSolution>,
}

/// Decentralized mechanism for heterogeneous payoffs: drop locations with
/// v_k ≤ 0 or that can never be persuaded, solve the rest in isolation, and
/// let the customer join the highest-payoff location that signals 1.
pub fn heterogeneous_compose(system: &SystemModel) -> Result<HeterogeneousSolution> {
    require_independent(system, "heterogeneous composition")?;
    let mut order: Vec<usize> = system
        .locations
        .iter()
        .enumerate()
        .filter(|(_, l)| l.payoff > 0.0 && l.persuadable())
        .map(|(k, _)| k)
        .collect();
    for &k in &order {
        let loc = &system.locations[k];
        if loc.expected_utility() >= 0.0 {
            return Err(Error::Precondition(format!(
                "location {k} ({:?}) has nonnegative expected utility {}; \
                 the heterogeneous guarantee needs it strictly negative",
                loc.name,
                loc.expected_utility()
            )));
        }
    }
    order.sort_by(|&a, &b| {
        system.locations[b]
            .payoff
            .total_cmp(&system.locations[a].payoff)
            .then(a.cmp(&b))
    });
    let mut per_location: Vec<LocalMechanism> = system
        .locations
        .iter()
        .map(|l| LocalMechanism::silent(l.num_states()))
        .collect();
    let mut isolated = Vec::with_capacity(order.len());
    for &k in &order {
        let mut s = solve_isolated(&system.locations[k])?;
        s.location = k;
        per_location[k] = s.mechanism.clone();
        isolated.push(s);
    }
    let k_all = system.num_locations();
    let actions: Vec<usize> = (0..1usize << k_all)
        .map(|u| {
            order
                .iter()
                .find(|&&k| (u >> k) & 1 == 1)
                .map_or(0, |&k| k + 1)
        })
        .collect();
    let payoffs: Vec<f64> = order.iter().map(|&k| system.locations[k].payoff).collect();
    let mut value = 0.0;
    let mut none_yet = 1.0;
    for (j, s) in isolated.iter().enumerate() {
        none_yet *= 1.0 - s.th_iso;
        let next = payoffs.get(j + 1).copied().unwrap_or(0.0);
        value += (payoffs[j] - next) * (1.0 - none_yet);
    }
    Ok(HeterogeneousSolution {
        mechanism: DecentralizedMechanism::new(per_location),
        strategy: CustomerStrategy::pure(k_all, &actions),
        value,
        order,
        isolated,
    })
}

#[derive(Debug, Clone)]
pub struct FallbackMechanism {
    pub mechanism: DecentralizedMechanism,
    /// Location that simulates the centralized mechanism.
    pub location: usize,
    /// T_k of the centralized mechanism under obedience.
    pub central_throughput: Vec<f64>,
}

/// Lets the location carrying the largest share of a feasible direct
/// mechanism's throughput recommend joining exactly when the centralized
/// mechanism would have sent the customer there, averaging over the
/// conditional distribution of the other locations' states. Every other
/// location always sends 0.
pub fn correlated_fallback(system: &SystemModel, central: &CentralizedMechanism) -> Result<FallbackMechanism> {
    let v = system.validate();
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    let slack = centralized::obedience_slack(system, central)?;
    if slack < -GUARANTEE_TOL {
        return Err(Error::Precondition(format!(
            "centralized mechanism violates obedience by {:e}",
            -slack
        )));
    }
    let t = centralized::per_location_throughput(system, central);
    let mut chosen = 0;
    for (k, &tk) in t.iter().enumerate() {
        if tk > t[chosen] {
            chosen = k;
        }
    }
    let space = system.state_space();
    let mu = system.joint_table();
    let marginal = &marginals_of(&space, &mu)[chosen];
    let mut joint_mass = vec![0.0; marginal.len()];
    let mut w = vec![0; system.num_locations()];
    for (wi, &m) in mu.iter().enumerate() {
        space.decode_into(wi, &mut w);
        joint_mass[w[chosen]] += m * central.prob(wi, chosen + 1);
    }
    let send_one: Vec<f64> = joint_mass
        .iter()
        .zip(marginal)
        .map(|(&jm, &m)| if m > 0.0 { (jm / m).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    let per_location = system
        .locations
        .iter()
        .enumerate()
        .map(|(k, l)| {
            if k == chosen {
                LocalMechanism::binary(&send_one)
            } else {
                Ok(LocalMechanism::silent(l.num_states()))
            }
        })
        .collect::<Result<_>>()?;
    Ok(FallbackMechanism {
        mechanism: DecentralizedMechanism::new(per_location),
        location: chosen,
        central_throughput: t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_loc(p_good: f64, good: f64, bad: f64) -> LocationModel {
        LocationModel::with_indexed_states("l", vec![p_good, 1.0 - p_good], vec![good, bad])
    }

    #[test]
    fn isolated_single_location() {
        let s = solve_isolated(&binary_loc(0.2, 1.0, -1.0)).unwrap();
        assert!((s.th_iso - 0.4).abs() < 1e-9);
        let q = s.mechanism.send_one();
        assert!((q[0] - 1.0).abs() < 1e-9 && (q[1] - 0.25).abs() < 1e-9);
    }

    #[test]
    fn isolated_extremes() {
        let hopeless = LocationModel::with_indexed_states("l", vec![0.5, 0.5, 0.0], vec![-1.0, -2.0, 5.0]);
        assert!(solve_isolated(&hopeless).unwrap().th_iso.abs() < 1e-12);
        let easy = binary_loc(0.6, 1.0, -1.0);
        assert!((solve_isolated(&easy).unwrap().th_iso - 1.0).abs() < 1e-12);
    }

    #[test]
    fn isolated_rejects_invalid_location() {
        assert!(matches!(
            solve_isolated(&binary_loc(1.2, 1.0, -1.0)),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn verdicts_for_hand_built_mechanisms() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0)]).unwrap();
        // 0.2·1 + 0.8·0.5·(−1) = −0.2 < 0
        let m = DecentralizedMechanism::binary(&[vec![1.0, 0.5]]).unwrap();
        assert_eq!(check_obedience(&sys, &m).unwrap(), ObedienceVerdict::Neither);
        let easy = SystemModel::independent(vec![binary_loc(0.5, 1.0, -1.0)]).unwrap();
        let all_one = DecentralizedMechanism::binary(&[vec![1.0, 1.0]]).unwrap();
        assert_eq!(check_obedience(&easy, &all_one).unwrap(), ObedienceVerdict::ConditionI(0));
    }

    #[test]
    fn non_binary_rejected() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0)]).unwrap();
        let full = oracle::full_information(&sys);
        // full information has two signals here, so use a ternary location
        let _ = full;
        let t = LocationModel::with_indexed_states("t", vec![0.2, 0.3, 0.5], vec![1.0, 0.0, -1.0]);
        let sys3 = SystemModel::independent(vec![t]).unwrap();
        let full3 = oracle::full_information(&sys3);
        assert!(matches!(check_obedience(&sys3, &full3), Err(Error::Input(_))));
    }

    #[test]
    fn compose_two_identical() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0), binary_loc(0.2, 1.0, -1.0)]).unwrap();
        let sol = compose_optimal(&sys).unwrap();
        assert!((sol.report.throughput - 0.64).abs() < 1e-9);
        assert!((sol.closed_form() - 0.64).abs() < 1e-9);
        assert!(sol.strategy.is_fd(2));
        assert_eq!(sol.strategy.action(3), 1);
        assert!(sol.report.worst_obedience_slack >= -1e-7);
        assert_eq!(check_obedience(&sys, &sol.mechanism).unwrap(), ObedienceVerdict::ConditionII);
    }

    #[test]
    fn compose_saturates_when_one_location_is_attractive() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0), binary_loc(0.7, 1.0, -1.0)]).unwrap();
        let sol = compose_optimal(&sys).unwrap();
        assert!((sol.report.throughput - 1.0).abs() < 1e-9);
    }

    #[test]
    fn compose_rejects_joint() {
        let locs = vec![binary_loc(0.5, 1.0, -1.0), binary_loc(0.5, 1.0, -1.0)];
        let sys = SystemModel::joint(locs, vec![0.25; 4]).unwrap();
        assert!(matches!(compose_optimal(&sys), Err(Error::Input(_))));
    }

    #[test]
    fn heterogeneous_two_locations() {
        let sys = SystemModel::independent(vec![
            binary_loc(0.2, 1.0, -1.0).with_payoff(2.0),
            binary_loc(0.2, 1.0, -1.0).with_payoff(1.0),
        ])
        .unwrap();
        let sol = heterogeneous_compose(&sys).unwrap();
        // (2−1)·0.4 + (1−0)·(1 − 0.6²)
        assert!((sol.value - 1.04).abs() < 1e-9);
        let r = oracle::evaluate(&sys, &sol.mechanism, &sol.strategy).unwrap();
        assert!((r.value - sol.value).abs() < 1e-9);
    }

    #[test]
    fn heterogeneous_single_and_order() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0).with_payoff(5.0)]).unwrap();
        assert!((heterogeneous_compose(&sys).unwrap().value - 2.0).abs() < 1e-9);
        let sys = SystemModel::independent(vec![
            binary_loc(0.2, 1.0, -1.0).with_payoff(1.0),
            binary_loc(0.1, 1.0, -1.0).with_payoff(3.0),
            binary_loc(0.3, 1.0, -1.0).with_payoff(1.0),
            binary_loc(0.3, 1.0, -1.0).with_payoff(-1.0),
        ])
        .unwrap();
        let sol = heterogeneous_compose(&sys).unwrap();
        assert_eq!(sol.order, vec![1, 0, 2]);
        assert_eq!(sol.mechanism.per_location[3].send_one(), vec![0.0, 0.0]);
    }

    #[test]
    fn heterogeneous_requires_negative_mean() {
        let sys = SystemModel::independent(vec![binary_loc(0.6, 1.0, -1.0)]).unwrap();
        assert!(matches!(heterogeneous_compose(&sys), Err(Error::Precondition(_))));
    }

    #[test]
    fn fallback_picks_largest_share() {
        let sys = SystemModel::independent(vec![binary_loc(0.5, 1.0, -1.0), binary_loc(0.5, 1.0, -1.0)]).unwrap();
        // ω order: (g,g) (b,g) (g,b) (b,b); recommend a good location, split ties 0.4/0.6
        let table = vec![
            0.0, 0.4, 0.6, //
            0.0, 0.0, 1.0, //
            0.0, 1.0, 0.0, //
            1.0, 0.0, 0.0,
        ];
        let central = CentralizedMechanism::direct(2, table).unwrap();
        let fb = correlated_fallback(&sys, &central).unwrap();
        assert_eq!(fb.location, 1);
        let q = fb.mechanism.per_location[1].send_one();
        // ψ(1|g) = 0.5·0.6 + 0.5·1, ψ(1|b) = 0
        assert!((q[0] - 0.8).abs() < 1e-12 && q[1].abs() < 1e-12);
        assert_eq!(fb.mechanism.per_location[0].send_one(), vec![0.0, 0.0]);
    }

    #[test]
    fn fallback_of_silent_mechanism_is_silent() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0), binary_loc(0.2, 1.0, -1.0)]).unwrap();
        let central = CentralizedMechanism::direct(2, [1.0, 0.0, 0.0].repeat(4)).unwrap();
        let fb = correlated_fallback(&sys, &central).unwrap();
        let (_, r) = oracle::evaluate_best_response(&sys, &fb.mechanism).unwrap();
        assert_eq!(r.throughput, 0.0);
    }

    #[test]
    fn fallback_rejects_disobedient_input() {
        let sys = SystemModel::independent(vec![binary_loc(0.2, 1.0, -1.0)]).unwrap();
        let central = CentralizedMechanism::direct(1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(correlated_fallback(&sys, &central), Err(Error::Precondition(_))));
    }
}
