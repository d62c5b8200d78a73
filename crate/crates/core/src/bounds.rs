//! Guarantee constants, worst-case instance generators and the F(u)
//! maximization behind the correlated upper bound.

use crate::error::{Error, Result};
use crate::model::{LocationModel, SystemModel};

/// Γ_K = 1 − (1 − 1/K)^K.
pub fn gamma(k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Input("gamma needs K ≥ 1".into()));
    }
    let kf = k as f64;
    Ok(-(kf * (-1.0 / kf).ln_1p()).exp_m1())
}

/// (1 − Π(1 − x_k)) − Γ_K Σ x_k for x in [0,1]^K with Σ x ≤ 1.
pub fn series_inequality_gap(x: &[f64]) -> Result<f64> {
    if let Some(bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Input(format!("entry {bad} outside [0, 1]")));
    }
    let total: f64 = x.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::Input(format!("entries sum to {total} > 1")));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let prod: f64 = x.iter().map(|v| 1.0 - v).product();
    Ok((1.0 - prod) - gamma(x.len())? * total)
}

/// Root of z = (1 − z)^{K−1} in [0, 1], by bisection.
pub fn solve_zstar(k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Input("z* is defined for K ≥ 2".into()));
    }
    let f = |z: f64| z - (1.0 - z).powi(k as i32 - 1);
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

/// (1 + K z*_K) / (1 + K)
pub fn correlated_upper_bound(k: usize) -> Result<f64> {
    let z = solve_zstar(k)?;
    let kf = k as f64;
    Ok((1.0 + kf * z) / (1.0 + kf))
}

/// F(u) = Σ_k min{u_k, (1 − Σ_{ℓ≠k} u_ℓ / (K−1))^{K−1}}.
pub fn f_value(u: &[f64]) -> f64 {
    let k = u.len();
    if k < 2 {
        return u.iter().sum();
    }
    let total: f64 = u.iter().sum();
    let km1 = (k - 1) as f64;
    u.iter()
        .map(|&uk| {
            let base = (1.0 - (total - uk) / km1).max(0.0);
            uk.min(base.powi(k as i32 - 1))
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FSearch {
    /// Every point of the grid over [0,1]^K.
    Full,
    /// Only u = (z, …, z) with z ≤ (1 − z)^{K−1}, which contains a maximizer.
    Symmetric,
}

/// Largest dimension searched on the full grid.
pub const MAX_FULL_GRID_K: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FMaximum {
    pub u: Vec<f64>,
    pub value: f64,
    pub search: FSearch,
}

fn check_resolution(resolution: f64) -> Result<()> {
    if resolution > 0.0 && resolution <= 0.5 {
        Ok(())
    } else {
        Err(Error::Input(format!("resolution {resolution} outside (0, 0.5]")))
    }
}

/// Maximizes F on a grid for K ≤ 4 and by the symmetric reduction beyond.
pub fn max_f_grid(k: usize, resolution: f64) -> Result<FMaximum> {
    if k <= MAX_FULL_GRID_K {
        max_f_full(k, resolution)
    } else {
        check_resolution(resolution)?;
        max_f_symmetric(k)
    }
}

pub fn max_f_symmetric(k: usize) -> Result<FMaximum> {
    let z = solve_zstar(k)?;
    Ok(FMaximum {
        u: vec![z; k],
        value: k as f64 * z,
        search: FSearch::Symmetric,
    })
}

pub fn max_f_full(k: usize, resolution: f64) -> Result<FMaximum> {
    check_resolution(resolution)?;
    if k < 2 {
        return Err(Error::Input("F is defined for K ≥ 2".into()));
    }
    if k > MAX_FULL_GRID_K {
        return Err(Error::Input(format!("full grid limited to K ≤ {MAX_FULL_GRID_K}")));
    }
    let points = crate::oracle::grid_points(resolution)?;
    let n = points.len();
    let mut idx = vec![0usize; k];
    let mut u = vec![0.0; k];
    let mut best = FMaximum {
        u: u.clone(),
        value: f64::NEG_INFINITY,
        search: FSearch::Full,
    };
    loop {
        for (ui, &i) in u.iter_mut().zip(&idx) {
            *ui = points[i];
        }
        let v = f_value(&u);
        if v > best.value {
            best.value = v;
            best.u.copy_from_slice(&u);
        }
        let mut pos = 0;
        while pos < k {
            idx[pos] += 1;
            if idx[pos] < n {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }
    Ok(best)
}

/// Worst-case independent instance for the Γ_K guarantee together with its
/// closed-form throughputs.
#[derive(Debug, Clone)]
pub struct TightnessInstance {
    pub system: SystemModel,
    pub p_star: f64,
    pub predicted_th: f64,
    pub predicted_th_d: f64,
}

/// p* = 1 − (X/(X+1))^{1/K}, evaluated without cancellation.
pub fn p_star(k: usize, x: f64) -> f64 {
    -(-(1.0 / x).ln_1p() / k as f64).exp_m1()
}

/// K identical binary locations with μ(1) = p* and h = (−1, X).
pub fn make_tightness_instance(k: usize, x: f64) -> Result<TightnessInstance> {
    if k < 1 {
        return Err(Error::Input("tightness instance needs K ≥ 1".into()));
    }
    if x <= 1.0 || !x.is_finite() {
        return Err(Error::Input(format!("tightness instance needs finite X > 1, got {x}")));
    }
    let p = p_star(k, x);
    let locations = (0..k)
        .map(|i| {
            LocationModel::new(
                format!("loc{}", i + 1),
                vec!["0".into(), "1".into()],
                vec![1.0 - p, p],
                vec![-1.0, x],
            )
        })
        .collect();
    let system = SystemModel::independent(locations)?;
    let iso = (p * (x + 1.0)).min(1.0);
    Ok(TightnessInstance {
        system,
        p_star: p,
        predicted_th: 1.0,
        predicted_th_d: 1.0 - (1.0 - iso).powi(k as i32),
    })
}

/// Correlated instance with states {−1, 0, 1} per location and h = (−X, −1, K):
/// exactly one location is in state 1 with probability 1/(K+1), otherwise
/// exactly one location is in state 0 and the rest are in state −1.
pub fn make_correlated_instance(k: usize, x: f64) -> Result<SystemModel> {
    if k < 2 {
        return Err(Error::Input("correlated instance needs K ≥ 2".into()));
    }
    if x <= k as f64 || !x.is_finite() {
        return Err(Error::Input(format!("correlated instance needs finite X > K = {k}, got {x}")));
    }
    let kf = k as f64;
    let locations: Vec<LocationModel> = (0..k)
        .map(|i| {
            LocationModel::new(
                format!("loc{}", i + 1),
                vec!["-1".into(), "0".into(), "1".into()],
                vec![1.0 / 3.0; 3],
                vec![-x, -1.0, kf],
            )
        })
        .collect();
    let space = crate::model::ProductSpace::new(vec![3; k]);
    let mut table = vec![0.0; space.size()];
    let mut coords = vec![0usize; k];
    for special in 0..k {
        // one location in state 1, the others in state 0
        coords.fill(1);
        coords[special] = 2;
        table[space.index(&coords).expect("in range")] += 1.0 / (kf * (kf + 1.0));
        // one location in state 0, the others in state −1
        coords.fill(0);
        coords[special] = 1;
        table[space.index(&coords).expect("in range")] += 1.0 / (kf + 1.0);
    }
    SystemModel::joint_with_marginals(locations, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_constants() {
        assert_eq!(gamma(1).unwrap(), 1.0);
        assert!((gamma(2).unwrap() - 0.75).abs() < 1e-15);
        assert!((gamma(3).unwrap() - 19.0 / 27.0).abs() < 1e-15);
        assert!((gamma(1_000_000).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-6);
        assert!(gamma(0).is_err());
    }

    #[test]
    fn series_gap_examples() {
        assert!(series_inequality_gap(&[0.5, 0.5]).unwrap().abs() < 1e-15);
        assert_eq!(series_inequality_gap(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!((series_inequality_gap(&[0.5, 0.1]).unwrap() - 0.10).abs() < 1e-12);
        assert!(series_inequality_gap(&[0.7, 0.6]).is_err());
        assert!(series_inequality_gap(&[-0.1]).is_err());
    }

    #[test]
    fn zstar_values() {
        assert_eq!(solve_zstar(2).unwrap(), 0.5);
        assert!((solve_zstar(3).unwrap() - (3.0 - 5f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((correlated_upper_bound(2).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(solve_zstar(1).is_err());
    }

    #[test]
    fn f_grid_k2() {
        let m = max_f_grid(2, 0.01).unwrap();
        assert!((m.value - 1.0).abs() < 1e-12);
        assert_eq!(f_value(&[0.0, 0.0]), 0.0);
        assert!(max_f_grid(2, 0.6).is_err());
        assert!(max_f_grid(2, 0.0).is_err());
    }

    #[test]
    fn f_symmetric_beyond_four() {
        let m = max_f_grid(7, 0.1).unwrap();
        assert_eq!(m.search, FSearch::Symmetric);
        assert!((m.value - 7.0 * solve_zstar(7).unwrap()).abs() < 1e-12);
        assert!((f_value(&m.u) - m.value).abs() < 1e-9);
    }

    #[test]
    fn tightness_k2_x3() {
        let t = make_tightness_instance(2, 3.0).unwrap();
        assert!((t.p_star - 0.1339746).abs() < 1e-7);
        assert!((t.predicted_th_d - 0.7846097).abs() < 1e-7);
        assert!(make_tightness_instance(2, 1.0).is_err());
    }

    #[test]
    fn p_star_stable_for_huge_x() {
        let naive = |k: f64, x: f64| 1.0 - (x / (x + 1.0)).powf(1.0 / k);
        assert!((p_star(2, 3.0) - naive(2.0, 3.0)).abs() < 1e-15);
        let p = p_star(3, 1e12);
        // 1 − (1 − 1/X)^{1/3} ≈ 1/(3X)
        assert!((p * 3e12 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlated_masses() {
        let sys = make_correlated_instance(3, 10.0).unwrap();
        let table = sys.joint_table();
        assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let small = table.iter().filter(|&&p| (p - 1.0 / 12.0).abs() < 1e-15).count();
        let large = table.iter().filter(|&&p| (p - 0.25).abs() < 1e-15).count();
        assert_eq!((small, large), (3, 3));
        assert_eq!(table.iter().filter(|&&p| p > 0.0).count(), 6);
        assert!(make_correlated_instance(3, 3.0).is_err());
    }
}
