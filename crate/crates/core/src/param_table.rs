//! Momentum-parameter tables.
//!
//! For an order `alpha >= 2` the sequence starts at `tau_1 = 1` and each
//! successor is the unique positive root of
//!
//! ```text
//! tau^alpha - tau^(alpha-1) - tau_prev^alpha = 0
//! ```
//!
//! With `alpha = 2` this is the classical FISTA sequence. Tables are built once,
//! stored, and read by the solver at every iteration through
//! [`LookupTable::momentum_coeff`].

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Default number of stored roots.
pub const DEFAULT_TABLE_LENGTH: usize = 100_000;

/// Relative residual every stored root must satisfy.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;

/// Magic prefix of the binary table format.
pub const TABLE_MAGIC: &[u8; 8] = b"APGMTBL1";

const MAX_ROOT_ITERS: usize = 200;

fn check_alpha(alpha: u32) -> Result<()> {
    if alpha < 2 {
        return Err(Error::domain(format!("alpha must be >= 2, got {alpha}")));
    }
    Ok(())
}

/// Residual of the recurrence divided by `tau^alpha`.
///
/// For `tau >= 1` this equals the residual relative to `max(1, tau^alpha)` and
/// never overflows, even for very long tables at large `alpha`.
pub fn relative_residual(alpha: u32, tau_prev: f64, tau: f64) -> f64 {
    let a = alpha as i32;
    let r = 1.0 - 1.0 / tau - (tau_prev / tau).powi(a);
    if tau >= 1.0 {
        r.abs()
    } else {
        // below one the unscaled residual is already O(1)
        (r * tau.powi(a)).abs()
    }
}

/// Unique positive root of `tau^alpha - tau^(alpha-1) - tau_prev^alpha = 0`.
///
/// The root lies in `[max(1, tau_prev), tau_prev + 1]`. Newton's method on the
/// scaled function `g(t) = t - 1 - tau_prev (tau_prev / t)^(alpha-1)`, which is
/// increasing and concave, is started from the left end of that bracket and
/// falls back to bisection whenever a step would leave the current bracket.
pub fn next_tau(alpha: u32, tau_prev: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(tau_prev > 0.0) || !tau_prev.is_finite() {
        return Err(Error::domain(format!(
            "previous tau must be positive and finite, got {tau_prev}"
        )));
    }
    let a = alpha as i32;
    let g = |t: f64| t - 1.0 - tau_prev * (tau_prev / t).powi(a - 1);
    let dg = |t: f64| 1.0 + f64::from(alpha - 1) * (tau_prev / t).powi(a);

    let mut lo = tau_prev.max(1.0);
    let mut hi = tau_prev + 1.0;
    if g(hi) < 0.0 {
        return Err(Error::RootFinding {
            alpha,
            tau_prev,
            reason: "upper bracket end has negative sign".into(),
        });
    }

    let mut t = lo;
    for _ in 0..MAX_ROOT_ITERS {
        let gt = g(t);
        if gt == 0.0 {
            break;
        }
        if gt < 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let newton = t - gt / dg(t);
        let next = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - t).abs() <= 4.0 * f64::EPSILON * t || hi - lo <= 4.0 * f64::EPSILON * hi;
        t = next;
        if done {
            break;
        }
    }

    let residual = relative_residual(alpha, tau_prev, t);
    if residual > ROOT_RESIDUAL_TOL || t <= 1.0 {
        return Err(Error::RootFinding {
            alpha,
            tau_prev,
            reason: format!("root {t} has relative residual {residual:e}"),
        });
    }
    Ok(t)
}

/// Lower bound `(p + alpha - 1) / alpha` on the `p`-th table entry.
pub fn lower_bound(alpha: u32, p: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if p < 1 {
        return Err(Error::domain("p must be >= 1"));
    }
    Ok((p as f64 + f64::from(alpha) - 1.0) / f64::from(alpha))
}

/// Convergence-rate envelope `alpha^alpha / (p + alpha - 1)^alpha` (unit constant).
pub fn envelope(alpha: u32, p: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if p < 1 {
        return Err(Error::domain("p must be >= 1"));
    }
    let a = f64::from(alpha);
    Ok((a / (p as f64 + a - 1.0)).powi(alpha as i32))
}

/// Ordered roots `tau_1 .. tau_P` for one order `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct LookupTable {
    alpha: u32,
    taus: Vec<f64>,
}

/// Summary of an invariant sweep over a table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableCheck {
    pub max_relative_residual: f64,
    /// Smallest `tau_p - (p + alpha - 1) / alpha`; non-negative when the lower bound holds.
    pub min_lower_bound_slack: f64,
    pub strictly_increasing: bool,
}

impl TableCheck {
    pub fn passed(&self) -> bool {
        self.max_relative_residual <= ROOT_RESIDUAL_TOL
            && self.min_lower_bound_slack >= 0.0
            && self.strictly_increasing
    }
}

impl LookupTable {
    /// Generates `length` roots starting from `tau_1 = 1`.
    pub fn build(alpha: u32, length: usize) -> Result<Self> {
        check_alpha(alpha)?;
        if length < 1 {
            return Err(Error::domain("table length must be >= 1"));
        }
        let mut table = LookupTable {
            alpha,
            taus: Vec::with_capacity(length),
        };
        table.taus.push(1.0);
        table.extend_to(length)?;
        Ok(table)
    }

    /// Appends roots until the table holds at least `length` entries.
    pub fn extend_to(&mut self, length: usize) -> Result<()> {
        self.taus.reserve(length.saturating_sub(self.taus.len()));
        while self.taus.len() < length {
            let last = *self.taus.last().expect("table is never empty");
            self.taus.push(next_tau(self.alpha, last)?);
        }
        Ok(())
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    /// `tau_p`, 1-indexed.
    pub fn tau(&self, p: usize) -> Result<f64> {
        if p == 0 || p > self.taus.len() {
            return Err(Error::IndexOutOfRange {
                index: p,
                len: self.taus.len(),
            });
        }
        Ok(self.taus[p - 1])
    }

    /// Extrapolation weight `(tau_p - 1) / tau_{p+1}`.
    pub fn momentum_coeff(&self, p: usize) -> Result<f64> {
        if p == 0 || p + 1 > self.taus.len() {
            return Err(Error::IndexOutOfRange {
                index: p + 1,
                len: self.taus.len(),
            });
        }
        Ok((self.taus[p - 1] - 1.0) / self.taus[p])
    }

    pub fn check(&self) -> TableCheck {
        let mut max_res = 0.0f64;
        let mut min_slack = f64::INFINITY;
        let mut increasing = true;
        let a = f64::from(self.alpha);
        for (i, &tau) in self.taus.iter().enumerate() {
            let p = (i + 1) as f64;
            min_slack = min_slack.min(tau - (p + a - 1.0) / a);
            if i > 0 {
                let prev = self.taus[i - 1];
                max_res = max_res.max(relative_residual(self.alpha, prev, tau));
                increasing &= tau > prev;
            }
        }
        if self.taus.first() != Some(&1.0) {
            min_slack = f64::NEG_INFINITY;
        }
        TableCheck {
            max_relative_residual: max_res,
            min_lower_bound_slack: min_slack,
            strictly_increasing: increasing,
        }
    }

    /// Binary layout: magic, `u32` alpha, `u64` length, then `length` `f64`s,
    /// all little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TABLE_MAGIC)?;
        w.write_all(&self.alpha.to_le_bytes())?;
        w.write_all(&(self.taus.len() as u64).to_le_bytes())?;
        for tau in &self.taus {
            w.write_all(&tau.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != TABLE_MAGIC {
            return Err(Error::TableFormat("missing APGMTBL1 magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let alpha = u32::from_le_bytes(b4);
        check_alpha(alpha).map_err(|_| Error::TableFormat(format!("invalid alpha {alpha}")))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8) as usize;
        if len == 0 {
            return Err(Error::TableFormat("empty table".into()));
        }
        let mut taus = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            r.read_exact(&mut b8)?;
            taus.push(f64::from_le_bytes(b8));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::TableFormat("trailing bytes after table data".into()));
        }
        Ok(LookupTable { alpha, taus })
    }

    /// CSV with header `p,tau` and 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["p", "tau"])?;
        for (i, tau) in self.taus.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), format!("{tau:.16e}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}
