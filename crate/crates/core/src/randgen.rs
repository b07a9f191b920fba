//! Random stable, controllable MPC instances with random box constraints.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mpc_condense::{condense, dare, MpcSpec};

const MAX_ATTEMPTS: usize = 100;
const STABILITY_MARGIN: f64 = 0.95;
const RANK_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConfig {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub q_scale: f64,
    pub r_scale: f64,
    pub seed: u64,
    /// Index of the instance within a suite; selects an independent stream.
    pub instance: u64,
    pub upper_range: (f64, f64),
    pub lower_range: (f64, f64),
    /// Whether the state rows are repeated as terminal rows on `x_N`.
    pub terminal_rows: bool,
    /// `x0` is drawn from this fraction of the state box.
    pub x0_radius: f64,
}

impl InstanceConfig {
    pub fn new(n: usize, m: usize, seed: u64) -> Self {
        InstanceConfig {
            n,
            m,
            horizon: 5,
            q_scale: 1.0,
            r_scale: 10.0,
            seed,
            instance: 0,
            upper_range: (1.0, 10.0),
            lower_range: (-10.0, -1.0),
            terminal_rows: true,
            x0_radius: 0.5,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.instance);
        rng
    }
}

/// Spectral radius of a real square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `[B, AB, ..., A^{n-1} B]`.
pub fn controllability_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut c = DMatrix::zeros(n, n * m);
    let mut block = b.clone();
    for k in 0..n {
        c.view_mut((0, k * m), (n, m)).copy_from(&block);
        block = a * block;
    }
    c
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let top = sv.max();
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * top).count()
}

fn uniform_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..=1.0))
}

/// Entries uniform on `[-1, 1]`; `A` rescaled to spectral radius `0.95` when it
/// is not already stable; resampled until `(A, B)` is controllable.
pub fn random_plant<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n < 1 || m < 1 {
        return Err(Error::domain("plant dimensions must be >= 1"));
    }
    for _ in 0..MAX_ATTEMPTS {
        let mut a = uniform_matrix(n, n, rng);
        let b = uniform_matrix(n, m, rng);
        let rho = spectral_radius(&a);
        if rho >= 1.0 {
            a *= STABILITY_MARGIN / rho;
        }
        if numerical_rank(&controllability_matrix(&a, &b)) == n {
            return Ok((a, b));
        }
    }
    Err(Error::domain(format!("no controllable plant after {MAX_ATTEMPTS} draws")))
}

/// Per-component bounds `lower <= x <= upper` for states and inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds {
    pub state_upper: DVector<f64>,
    pub state_lower: DVector<f64>,
    pub input_upper: DVector<f64>,
    pub input_lower: DVector<f64>,
}

/// Normalized rows `e_i / u_i` and `-e_i / |l_i|`, interleaved per component.
pub fn box_rows(upper: &DVector<f64>, lower: &DVector<f64>) -> DMatrix<f64> {
    let n = upper.len();
    let mut rows = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        rows[(2 * i, i)] = 1.0 / upper[i];
        rows[(2 * i + 1, i)] = -1.0 / lower[i].abs();
    }
    rows
}

impl BoxBounds {
    /// `(F, Gc)`.
    pub fn rows(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            box_rows(&self.state_upper, &self.state_lower),
            box_rows(&self.input_upper, &self.input_lower),
        )
    }
}

pub fn random_box<R: Rng>(n: usize, m: usize, upper: (f64, f64), lower: (f64, f64), rng: &mut R) -> BoxBounds {
    let mut draw = |len: usize, range: (f64, f64)| DVector::from_fn(len, |_, _| rng.random_range(range.0..=range.1));
    let state_upper = draw(n, upper);
    let state_lower = draw(n, lower);
    let input_upper = draw(m, upper);
    let input_lower = draw(m, lower);
    BoxBounds { state_upper, state_lower, input_upper, input_lower }
}

/// Box rows with upper bounds from `[1, 10]` and lower bounds from `[-10, -1]`.
pub fn random_bounds<R: Rng>(n: usize, m: usize, rng: &mut R) -> (DMatrix<f64>, DMatrix<f64>) {
    random_box(n, m, (1.0, 10.0), (-10.0, -1.0), rng).rows()
}

#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub spec: MpcSpec,
    pub x0: DVector<f64>,
    pub bounds: BoxBounds,
}

/// Draws a plant, bounds and an initial state for which `u = 0` is strictly
/// feasible in the condensed problem. Deterministic in the config.
pub fn random_instance(config: &InstanceConfig) -> Result<RandomInstance> {
    let wrap = |e: Error| Error::Generation {
        seed: config.seed,
        instance: config.instance,
        reason: e.to_string(),
    };
    let (n, m) = (config.n, config.m);
    if !(config.lower_range.1 < 0.0 && config.upper_range.0 > 0.0) {
        return Err(wrap(Error::domain("bounds must enclose the origin")));
    }
    let mut rng = config.rng();
    let (a, b) = random_plant(n, m, &mut rng).map_err(wrap)?;
    let bounds = random_box(n, m, config.upper_range, config.lower_range, &mut rng);
    let (f, gc) = bounds.rows();
    let q = DMatrix::identity(n, n) * config.q_scale;
    let r = DMatrix::identity(m, m) * config.r_scale;
    let p = dare(&a, &b, &q, &r).map_err(wrap)?;
    let phi = if config.terminal_rows { f.clone() } else { DMatrix::zeros(0, n) };
    let spec = MpcSpec { a, b, f, gc, q, r, p, phi, horizon: config.horizon };
    spec.validate().map_err(wrap)?;

    let radius = config.x0_radius;
    for _ in 0..MAX_ATTEMPTS {
        let x0 = DVector::from_fn(n, |i, _| {
            rng.random_range(radius * bounds.state_lower[i]..=radius * bounds.state_upper[i])
        });
        match condense(&spec, &x0) {
            Ok(_) => return Ok(RandomInstance { spec, x0, bounds }),
            Err(Error::SlaterViolation { .. }) => continue,
            Err(e) => return Err(wrap(e)),
        }
    }
    Err(wrap(Error::domain(format!(
        "no Slater-feasible initial state after {MAX_ATTEMPTS} draws"
    ))))
}
