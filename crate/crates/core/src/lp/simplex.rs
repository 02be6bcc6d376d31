//! Dense two-phase tableau simplex, generic over the scalar field.
//!
//! Rows are brought to equality form with one slack per inequality and an
//! artificial wherever the slack cannot start in the basis. Pricing is
//! Dantzig's rule, falling back to Bland's rule after a run of degenerate
//! pivots. Pivot updates touch only the non-zero columns of the pivot row.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::{BigInt, BigRational, ToPrimitive, Zero};

use super::{LpInstance, Sense};
use crate::error::LpError;

/// Field used by the tableau.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Whether arithmetic is exact, so only true zeros are negligible.
    const EXACT: bool;
    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    /// Numerically zero.
    fn is_negligible(&self) -> bool;
    fn is_positive(&self) -> bool {
        !self.is_negligible() && *self > Self::zero()
    }
    fn is_negative(&self) -> bool {
        !self.is_negligible() && *self < Self::zero()
    }
    /// Replaces round-off residue by an exact zero.
    fn flush(&mut self) {}
    fn abs(&self) -> Self {
        if *self < Self::zero() {
            -self.clone()
        } else {
            self.clone()
        }
    }
}

/// Pivot and optimality tolerance of the floating-point tableau.
pub const F64_TOLERANCE: f64 = 1e-9;
const F64_FLUSH: f64 = 1e-13;

impl Scalar for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_negligible(&self) -> bool {
        f64::abs(*self) <= F64_TOLERANCE
    }
    fn flush(&mut self) {
        if f64::abs(*self) < F64_FLUSH {
            *self = 0.0;
        }
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        BigRational::from_integer(BigInt::from(1))
    }
    fn from_f64(v: f64) -> Self {
        BigRational::from_float(v).expect("finite coefficient")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_negligible(&self) -> bool {
        Zero::is_zero(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SimplexResult<T> {
    pub outcome: Outcome,
    /// Values of the instance variables (zeros when infeasible).
    pub x: Vec<T>,
    pub objective: T,
    pub iterations: usize,
}

/// Degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_STREAK: usize = 50;

struct Tableau<T> {
    rows: usize,
    /// Structural, slack and artificial columns, without the rhs.
    cols: usize,
    width: usize,
    a: Vec<T>,
    basis: Vec<usize>,
    /// Reduced costs; the rhs slot holds −z.
    cost: Vec<T>,
    first_artificial: usize,
    iterations: usize,
    limit: usize,
}

impl<T: Scalar> Tableau<T> {
    #[inline]
    fn at(&self, r: usize, c: usize) -> &T {
        &self.a[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> &T {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.a[r * w + c].clone();
        let mut nz = Vec::new();
        for j in 0..w {
            let v = &mut self.a[r * w + j];
            if !v.is_negligible() || j == c {
                *v = v.clone() / p.clone();
                nz.push(j);
            } else {
                *v = T::zero();
            }
        }
        self.a[r * w + c] = T::one();
        let pivot_row: Vec<(usize, T)> =
            nz.iter().map(|&j| (j, self.a[r * w + j].clone())).collect();
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c].clone();
            if f.is_negligible() {
                self.a[i * w + c] = T::zero();
                continue;
            }
            let row = &mut self.a[i * w..(i + 1) * w];
            for (j, v) in &pivot_row {
                let mut nv = row[*j].clone() - f.clone() * v.clone();
                nv.flush();
                row[*j] = nv;
            }
            row[c] = T::zero();
        }
        let f = self.cost[c].clone();
        if !f.is_negligible() {
            for (j, v) in &pivot_row {
                let mut nv = self.cost[*j].clone() - f.clone() * v.clone();
                nv.flush();
                self.cost[*j] = nv;
            }
        }
        self.cost[c] = T::zero();
        self.basis[r] = c;
        self.iterations += 1;
    }

    /// Runs the simplex method with columns `>= allowed_end` barred.
    fn optimize(&mut self, allowed_end: usize) -> Result<(), LpError> {
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.limit {
                return Err(LpError::IterationLimit(self.limit));
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let mut enter = None;
            let mut best = T::zero();
            for j in 0..allowed_end {
                let r = &self.cost[j];
                if r.is_negative() {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if *r < best {
                        best = r.clone();
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, T)> = None;
            for i in 0..self.rows {
                let aic = self.at(i, c);
                if !aic.is_positive() {
                    continue;
                }
                let ratio = self.rhs(i).clone() / aic.clone();
                let better = match &leave {
                    None => true,
                    Some((li, lr)) => {
                        if ratio < *lr {
                            true
                        } else if ratio > *lr {
                            false
                        } else if bland {
                            self.basis[i] < self.basis[*li]
                        } else {
                            // Prefer the larger pivot for stability.
                            aic.abs() > self.at(*li, c).abs()
                        }
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(LpError::Unbounded);
            };
            if ratio.is_negligible() {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }

    fn set_costs(&mut self, costs: &[T]) {
        for j in 0..=self.cols {
            self.cost[j] = if j < self.cols {
                costs[j].clone()
            } else {
                T::zero()
            };
        }
        for i in 0..self.rows {
            let cb = costs[self.basis[i]].clone();
            if cb.is_negligible() {
                continue;
            }
            for j in 0..=self.cols {
                let v = self.at(i, j).clone();
                if !v.is_negligible() {
                    self.cost[j] = self.cost[j].clone() - cb.clone() * v;
                }
            }
        }
    }
}

/// Solves `min c·x` over the instance rows with `x ≥ 0`. When
/// `phase_one_only` is set the first feasible basis is returned as is.
pub fn run<T: Scalar>(
    inst: &LpInstance,
    phase_one_only: bool,
) -> Result<SimplexResult<T>, LpError> {
    inst.validate()?;
    let n = inst.var_count();
    let m = inst.constraints.len();
    let slacks: Vec<Option<usize>> = {
        let mut next = n;
        inst.constraints
            .iter()
            .map(|c| {
                if c.sense == Sense::Eq {
                    None
                } else {
                    next += 1;
                    Some(next - 1)
                }
            })
            .collect()
    };
    let slack_count = slacks.iter().flatten().count();
    let first_artificial = n + slack_count;
    // Flip rows so the rhs is non-negative; decide which need an artificial.
    let mut needs_art = Vec::with_capacity(m);
    let mut signs = Vec::with_capacity(m);
    for c in &inst.constraints {
        let flip = c.rhs < 0.0;
        signs.push(if flip { -1.0 } else { 1.0 });
        let slack_sign = match c.sense {
            Sense::Le => 1.0,
            Sense::Ge => -1.0,
            Sense::Eq => 0.0,
        } * if flip { -1.0 } else { 1.0 };
        needs_art.push(slack_sign <= 0.0);
    }
    let art_count = needs_art.iter().filter(|&&b| b).count();
    let cols = first_artificial + art_count;
    let width = cols + 1;
    let mut a = vec![T::zero(); m * width];
    let mut basis = vec![0usize; m];
    let mut next_art = first_artificial;
    for (i, c) in inst.constraints.iter().enumerate() {
        let s = signs[i];
        for &(j, v) in &c.coeffs {
            let cell = &mut a[i * width + j];
            *cell = cell.clone() + T::from_f64(s * v);
        }
        a[i * width + cols] = T::from_f64(s * c.rhs);
        if let Some(sc) = slacks[i] {
            let sv = if c.sense == Sense::Le { s } else { -s };
            a[i * width + sc] = T::from_f64(sv);
            if !needs_art[i] {
                basis[i] = sc;
            }
        }
        if needs_art[i] {
            a[i * width + next_art] = T::one();
            basis[i] = next_art;
            next_art += 1;
        }
    }
    let mut t = Tableau {
        rows: m,
        cols,
        width,
        a,
        basis,
        cost: vec![T::zero(); width],
        first_artificial,
        iterations: 0,
        limit: 50 * (m + cols).max(100),
    };

    if art_count > 0 {
        let phase1: Vec<T> = (0..cols)
            .map(|j| {
                if j >= first_artificial {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect();
        t.set_costs(&phase1);
        t.optimize(cols)?;
        let infeas = -t.cost[cols].clone();
        let scale = inst
            .constraints
            .iter()
            .map(|c| c.rhs.abs())
            .fold(1.0f64, f64::max);
        let infeasible = if T::EXACT {
            infeas > T::zero()
        } else {
            infeas.to_f64() > F64_TOLERANCE * scale
        };
        if infeasible {
            return Ok(SimplexResult {
                outcome: Outcome::Infeasible,
                x: vec![T::zero(); n],
                objective: T::zero(),
                iterations: t.iterations,
            });
        }
        // Pivot zero-level artificials out where a real column can replace them.
        for r in 0..m {
            if t.basis[r] < t.first_artificial {
                continue;
            }
            let mut best: Option<(usize, T)> = None;
            for j in 0..t.first_artificial {
                let v = t.at(r, j).abs();
                if !v.is_negligible() && best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((j, v));
                }
            }
            if let Some((j, _)) = best {
                t.pivot(r, j);
            }
        }
    }

    if !phase_one_only {
        let costs: Vec<T> = (0..cols)
            .map(|j| {
                if j < n {
                    T::from_f64(inst.objective[j])
                } else {
                    T::zero()
                }
            })
            .collect();
        t.set_costs(&costs);
        t.optimize(first_artificial)?;
    }

    let mut x = vec![T::zero(); n];
    for r in 0..m {
        let b = t.basis[r];
        if b < n {
            let v = t.rhs(r).clone();
            x[b] = if v < T::zero() { T::zero() } else { v };
        }
    }
    let mut objective = T::zero();
    for (j, xj) in x.iter().enumerate() {
        if inst.objective[j] != 0.0 {
            objective = objective + T::from_f64(inst.objective[j]) * xj.clone();
        }
    }
    Ok(SimplexResult {
        outcome: Outcome::Optimal,
        x,
        objective,
        iterations: t.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{LpInstance, Sense};

    fn small() -> LpInstance {
        // min -x - y  s.t.  x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2).
        let mut lp = LpInstance::new();
        let x = lp.add_var("x", -1.0);
        let y = lp.add_var("y", -1.0);
        lp.add_constraint("a", vec![(x, 1.0), (y, 2.0)], Sense::Le, 4.0);
        lp.add_constraint("b", vec![(x, 3.0), (y, 1.0)], Sense::Le, 6.0);
        lp
    }

    #[test]
    fn float_and_exact_agree() {
        let lp = small();
        let f = run::<f64>(&lp, false).unwrap();
        assert_eq!(f.outcome, Outcome::Optimal);
        assert!((f.x[0] - 1.6).abs() < 1e-12 && (f.x[1] - 1.2).abs() < 1e-12);
        let e = run::<BigRational>(&lp, false).unwrap();
        let expect = BigRational::new(BigInt::from(-14), BigInt::from(5));
        assert_eq!(e.objective, expect);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + y  s.t.  x + y = 3, x >= 1, y >= -2  -> 3.
        let mut lp = LpInstance::new();
        let x = lp.add_var("x", 1.0);
        let y = lp.add_var("y", 1.0);
        lp.add_constraint("e", vec![(x, 1.0), (y, 1.0)], Sense::Eq, 3.0);
        lp.add_constraint("g", vec![(x, 1.0)], Sense::Ge, 1.0);
        lp.add_constraint("h", vec![(y, -1.0)], Sense::Le, 2.0);
        let r = run::<f64>(&lp, false).unwrap();
        assert_eq!(r.outcome, Outcome::Optimal);
        assert!((r.objective - 3.0).abs() < 1e-12);
        assert!(r.x[0] >= 1.0 - 1e-12);
    }

    #[test]
    fn infeasible_detected_both_fields() {
        let mut lp = LpInstance::new();
        let x = lp.add_var("x", 1.0);
        lp.add_constraint("lo", vec![(x, 1.0)], Sense::Ge, 6.0);
        lp.add_constraint("hi", vec![(x, 1.0)], Sense::Le, 5.0);
        assert_eq!(run::<f64>(&lp, false).unwrap().outcome, Outcome::Infeasible);
        assert_eq!(
            run::<BigRational>(&lp, true).unwrap().outcome,
            Outcome::Infeasible
        );
    }

    #[test]
    fn unbounded_reported() {
        let mut lp = LpInstance::new();
        let x = lp.add_var("x", -1.0);
        lp.add_constraint("lo", vec![(x, 1.0)], Sense::Ge, 1.0);
        assert_eq!(run::<f64>(&lp, false).unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles under pure Dantzig pricing without safeguards.
        let mut lp = LpInstance::new();
        let v: Vec<_> = [-0.75, 150.0, -0.02, 6.0]
            .iter()
            .enumerate()
            .map(|(i, &c)| lp.add_var(&format!("x{i}"), c))
            .collect();
        lp.add_constraint(
            "r1",
            vec![(v[0], 0.25), (v[1], -60.0), (v[2], -0.04), (v[3], 9.0)],
            Sense::Le,
            0.0,
        );
        lp.add_constraint(
            "r2",
            vec![(v[0], 0.5), (v[1], -90.0), (v[2], -0.02), (v[3], 3.0)],
            Sense::Le,
            0.0,
        );
        lp.add_constraint("r3", vec![(v[2], 1.0)], Sense::Le, 1.0);
        let r = run::<BigRational>(&lp, false).unwrap();
        assert_eq!(r.outcome, Outcome::Optimal);
        // The decimal coefficients are binary approximations, hence the slack.
        assert!((Scalar::to_f64(&r.objective) + 0.05).abs() < 1e-12);
    }
}
