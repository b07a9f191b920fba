//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use apgm::mpc_condense::MpcSpec;
use apgm::randgen::{random_instance, InstanceConfig, RandomInstance};
use apgm::QpProblem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix<R: Rng>(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(lo..=hi))
}

pub fn uniform_vector<R: Rng>(len: usize, lo: f64, hi: f64, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.random_range(lo..=hi))
}

/// `M^T M + shift I`, symmetrized exactly.
pub fn random_spd<R: Rng>(n: usize, shift: f64, rng: &mut R) -> DMatrix<f64> {
    let m = uniform_matrix(n, n, -1.0, 1.0, rng);
    let h = m.transpose() * m + DMatrix::identity(n, n) * shift;
    (&h + h.transpose()) * 0.5
}

/// Dense QP with a known strictly feasible point and an unconstrained minimizer
/// that usually violates some rows.
pub fn random_qp<R: Rng>(n_v: usize, n_c: usize, rng: &mut R) -> QpProblem {
    let h = random_spd(n_v, 0.5, rng);
    let g = uniform_vector(n_v, -3.0, 3.0, rng);
    let a = uniform_matrix(n_c, n_v, -1.0, 1.0, rng);
    let x_feasible = uniform_vector(n_v, -0.5, 0.5, rng);
    let slack = uniform_vector(n_c, 0.05, 1.0, rng);
    let b = &a * x_feasible + slack;
    QpProblem::new(h, g, a, b).expect("random QP is valid")
}

pub fn mpc_instance(n: usize, m: usize, horizon: usize, terminal_rows: bool, seed: u64, instance: u64) -> RandomInstance {
    let mut cfg = InstanceConfig::new(n, m, seed);
    cfg.horizon = horizon;
    cfg.terminal_rows = terminal_rows;
    cfg.instance = instance;
    random_instance(&cfg).expect("instance generation")
}

/// Predicted states `x_1 .. x_N` under inputs `u = (u_0, .., u_{N-1})`.
pub fn simulate(spec: &MpcSpec, x0: &DVector<f64>, u: &DVector<f64>) -> Vec<DVector<f64>> {
    let m = spec.m();
    let mut x = x0.clone();
    (0..spec.horizon)
        .map(|l| {
            x = &spec.a * &x + &spec.b * u.rows(l * m, m);
            x.clone()
        })
        .collect()
}

/// `1/2 sum_{l<N} (x_l'Q x_l + u_l'R u_l) + 1/2 x_N'P x_N` by forward simulation.
pub fn simulated_cost(spec: &MpcSpec, x0: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let m = spec.m();
    let states = simulate(spec, x0, u);
    let mut cost = 0.5 * x0.dot(&(&spec.q * x0));
    for (l, x) in states.iter().enumerate() {
        let ul = u.rows(l * m, m);
        cost += 0.5 * ul.dot(&(&spec.r * ul));
        if l + 1 < spec.horizon {
            cost += 0.5 * x.dot(&(&spec.q * x));
        }
    }
    let last = &states[spec.horizon - 1];
    cost + 0.5 * last.dot(&(&spec.p * last))
}

/// Largest stepwise constraint value: `F x_l`, `Phi x_N` and `Gc u_l`, each compared with 1.
pub fn simulated_max_row(spec: &MpcSpec, x0: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let m = spec.m();
    let states = simulate(spec, x0, u);
    let mut worst = f64::NEG_INFINITY;
    for (l, x) in states.iter().enumerate() {
        worst = worst.max((&spec.f * x).max());
        worst = worst.max((&spec.gc * u.rows(l * m, m)).max());
    }
    if spec.phi.nrows() > 0 {
        worst = worst.max((&spec.phi * &states[spec.horizon - 1]).max());
    }
    worst
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
