//! Reference computations written independently of the library, used as
//! ground truth by the integration tests.
#![allow(dead_code)]

use decsig::SystemModel;

/// Single-location persuasion optimum by the fractional-knapsack argument:
/// states with h ≥ 0 are always recommended; negative states are added in
/// order of least-negative utility until the accumulated surplus runs out.
pub fn knapsack_iso(prior: &[f64], utility: &[f64]) -> f64 {
    let mut budget: f64 = prior.iter().zip(utility).filter(|(_, &h)| h >= 0.0).map(|(p, h)| p * h).sum();
    let mut th: f64 = prior.iter().zip(utility).filter(|(_, &h)| h >= 0.0).map(|(p, _)| p).sum();
    let mut negatives: Vec<(f64, f64)> = prior
        .iter()
        .zip(utility)
        .filter(|(_, &h)| h < 0.0)
        .map(|(&p, &h)| (p, h))
        .collect();
    negatives.sort_by(|a, b| b.1.total_cmp(&a.1));
    for (p, h) in negatives {
        let cost = p * -h;
        if cost <= budget {
            budget -= cost;
            th += p;
        } else {
            th += budget / -h;
            break;
        }
    }
    th
}

/// All joint states of an independent or joint system with their prior mass,
/// enumerated with location 0 varying fastest.
pub fn joint_states(system: &SystemModel) -> Vec<(Vec<usize>, f64)> {
    let radices: Vec<usize> = system.locations.iter().map(|l| l.states.len()).collect();
    let total: usize = radices.iter().product();
    let table = match &system.prior_mode {
        decsig::PriorMode::Joint(t) => Some(t.clone()),
        decsig::PriorMode::Independent => None,
    };
    (0..total)
        .map(|mut i| {
            let idx = i;
            let mut w = Vec::with_capacity(radices.len());
            for &r in &radices {
                w.push(i % r);
                i /= r;
            }
            let p = match &table {
                Some(t) => t[idx],
                None => w.iter().zip(&system.locations).map(|(&s, l)| l.prior[s]).product(),
            };
            (w, p)
        })
        .collect()
}

/// Probability of each binary signal vector u (bit k = location k) and the
/// unnormalized posterior utility mass Σ μ σ(u|ω) h_l(ω_l) for every l.
pub fn binary_signal_moments(system: &SystemModel, send_one: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let k = system.locations.len();
    let mut out = vec![(0.0, vec![0.0; k]); 1 << k];
    for (w, mu) in joint_states(system) {
        for (u, slot) in out.iter_mut().enumerate() {
            let mut p = mu;
            for l in 0..k {
                let q = send_one[l][w[l]];
                p *= if (u >> l) & 1 == 1 { q } else { 1.0 - q };
            }
            slot.0 += p;
            for l in 0..k {
                slot.1[l] += p * system.locations[l].utility[w[l]];
            }
        }
    }
    out
}

/// Throughput of a pure strategy (action per signal vector, 0 = leave).
pub fn binary_throughput(system: &SystemModel, send_one: &[Vec<f64>], actions: &[usize]) -> f64 {
    binary_signal_moments(system, send_one)
        .iter()
        .zip(actions)
        .filter(|(_, &a)| a > 0)
        .map(|((p, _), _)| p)
        .sum()
}

/// Whether some strategy that joins only locations signalling 1, and leaves
/// only on the all-zero signal, is a best response.
pub fn fd_strategy_exists(system: &SystemModel, send_one: &[Vec<f64>], tol: f64) -> bool {
    let k = system.locations.len();
    binary_signal_moments(system, send_one).iter().enumerate().all(|(u, (p, mass))| {
        if *p <= 1e-12 {
            return true;
        }
        let best = mass.iter().fold(0.0f64, |m, &x| m.max(x / p));
        if u == 0 {
            best <= tol
        } else {
            (0..k).any(|l| (u >> l) & 1 == 1 && mass[l] / p >= best - tol)
        }
    })
}

/// Maximum of c·x over {x ≥ 0, A x ≤ b} by enumerating every vertex,
/// for tiny dimensions. Returns None if the region is empty.
pub fn vertex_enumeration_max(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    // hyperplanes: rows of A, then x_j = 0
    let mut planes: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-9)
            && a.iter().zip(b).all(|(row, &bi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() <= bi + 1e-9)
    };
    let mut best: Option<f64> = None;
    let mut pick = vec![0usize; n];
    fn choose(start: usize, depth: usize, m: usize, pick: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if depth == pick.len() {
            f(pick);
            return;
        }
        for i in start..m {
            pick[depth] = i;
            choose(i + 1, depth + 1, m, pick, f);
        }
    }
    let m = planes.len();
    choose(0, 0, m, &mut pick, &mut |idx: &[usize]| {
        let mut mat: Vec<Vec<f64>> = idx.iter().map(|&i| {
            let mut r = planes[i].0.clone();
            r.push(planes[i].1);
            r
        }).collect();
        if let Some(x) = gauss(&mut mat) {
            if feasible(&x) {
                let v: f64 = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
    });
    best
}

fn gauss(m: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-10 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for c in col..=n {
                    m[r][c] -= f * m[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Root of z = (1 − z)^2 in closed form.
pub fn zstar3() -> f64 {
    (3.0 - 5f64.sqrt()) / 2.0
}
