//! Linear objectives over the transportation polytope of a marginal pair.
//!
//! The solver is a dense two-phase tableau simplex with Bland's rule. The
//! polytope has `J^2` variables and `2J - 1` independent equality
//! constraints (the last column sum is implied by the rest), so even
//! `J = 20` is a few hundred columns. It runs in either arithmetic mode.

use crate::distributions::{JointDistribution, MarginalPair};
use crate::error::{Error, Result};
use crate::scalar::{max_of, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

impl std::str::FromStr for Sense {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(Sense::Min),
            "max" => Ok(Sense::Max),
            other => Err(Error::InvalidArgument(format!("sense must be min or max, got `{other}`"))),
        }
    }
}

/// Coefficients `c_kl` of `sum c_kl p_kl`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObjective<T> {
    categories: usize,
    coeffs: Vec<T>,
}

impl<T: Scalar> LinearObjective<T> {
    pub fn new(categories: usize, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != categories * categories {
            return Err(Error::DimensionMismatch { expected: categories * categories, found: coeffs.len() });
        }
        Ok(LinearObjective { categories, coeffs })
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let j = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != j) {
            return Err(Error::DimensionMismatch { expected: j, found: bad.len() });
        }
        Self::new(j, rows.into_iter().flatten().collect())
    }

    pub fn from_fn(categories: usize, f: impl Fn(usize, usize) -> T) -> Self {
        let coeffs = (0..categories * categories).map(|i| f(i / categories, i % categories)).collect();
        LinearObjective { categories, coeffs }
    }

    /// `1(k >= l)`, whose value is `τ`.
    pub fn tau(categories: usize) -> Self {
        Self::from_fn(categories, |k, l| if k >= l { T::one() } else { T::zero() })
    }

    /// `1(k > l)`, whose value is `η`.
    pub fn eta(categories: usize) -> Self {
        Self::from_fn(categories, |k, l| if k > l { T::one() } else { T::zero() })
    }

    /// `sign(k - l)`, whose value is `α`.
    pub fn sign(categories: usize) -> Self {
        Self::from_fn(categories, |k, l| match k.cmp(&l) {
            std::cmp::Ordering::Greater => T::one(),
            std::cmp::Ordering::Equal => T::zero(),
            std::cmp::Ordering::Less => -T::one(),
        })
    }

    pub fn ones(categories: usize) -> Self {
        Self::from_fn(categories, |_, _| T::one())
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn evaluate(&self, p: &JointDistribution<T>) -> Result<T> {
        if p.categories() != self.categories {
            return Err(Error::DimensionMismatch { expected: self.categories, found: p.categories() });
        }
        Ok(self.coeffs.iter().zip(p.cells()).fold(T::zero(), |acc, (c, v)| acc + c.clone() * v.clone()))
    }
}

/// An optimal vertex and its objective value.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub value: T,
    pub argmatrix: JointDistribution<T>,
}

struct Tableau<T> {
    /// `rows x (cols + 1)`; the last column is the right-hand side.
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    cols: usize,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, row: usize, col: usize, cost: &mut [T]) {
        let p = self.a[row][col].clone();
        for v in self.a[row].iter_mut() {
            *v = v.clone() / p.clone();
        }
        let pivot_row = self.a[row].clone();
        for (i, r) in self.a.iter_mut().enumerate() {
            if i == row || r[col].is_zero() {
                continue;
            }
            let f = r[col].clone();
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        if !cost[col].is_zero() {
            let f = cost[col].clone();
            for (v, pv) in cost.iter_mut().zip(&pivot_row) {
                *v = v.clone() - f.clone() * pv.clone();
            }
        }
        self.basis[row] = col;
    }

    /// Minimizes the reduced-cost row `cost` (length `cols + 1`, last entry
    /// minus the objective) over columns where `allowed` is true.
    fn run(&mut self, cost: &mut [T], allowed: impl Fn(usize) -> bool) {
        let tol = T::pivot_tolerance();
        let neg_tol = -tol.clone();
        loop {
            // Bland: lowest-index improving column.
            let Some(enter) = (0..self.cols).find(|&c| allowed(c) && cost[c] < neg_tol) else {
                return;
            };
            let mut leave: Option<(usize, T)> = None;
            for (i, r) in self.a.iter().enumerate() {
                if r[enter] > tol {
                    let ratio = r[self.cols].clone() / r[enter].clone();
                    let better = match &leave {
                        None => true,
                        Some((li, lr)) => ratio < *lr || (ratio == *lr && self.basis[i] < self.basis[*li]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            // The polytope is bounded, so an improving column always has a
            // positive entry; this guards against float noise only.
            let Some((row, _)) = leave else {
                return;
            };
            self.pivot(row, enter, cost);
        }
    }
}

/// Optimizes `obj` over joint distributions with margins `m`.
pub fn optimize<T: Scalar>(m: &MarginalPair<T>, obj: &LinearObjective<T>, sense: Sense) -> Result<LpSolution<T>> {
    let j = m.categories();
    if obj.categories() != j {
        return Err(Error::DimensionMismatch { expected: j, found: obj.categories() });
    }
    let nv = j * j;
    let nc = 2 * j - 1;
    let cols = nv + nc;
    let (p1, p0) = (m.treated.probs(), m.control.probs());

    let mut a = vec![vec![T::zero(); cols + 1]; nc];
    for k in 0..j {
        for l in 0..j {
            a[k][k * j + l] = T::one();
            if l + 1 < j {
                a[j + l][k * j + l] = T::one();
            }
        }
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[nv + i] = T::one();
        row[cols] = if i < j { p1[i].clone() } else { p0[i - j].clone() };
    }
    let mut tab = Tableau { a, basis: (nv..cols).collect(), cols };

    // Phase 1: minimize the sum of artificials. Reduced costs are minus the
    // column sums over the artificial rows.
    let mut cost = vec![T::zero(); cols + 1];
    for row in &tab.a {
        for (c, v) in cost.iter_mut().zip(row) {
            *c = c.clone() - v.clone();
        }
    }
    for c in cost.iter_mut().take(cols).skip(nv) {
        *c = T::zero();
    }
    tab.run(&mut cost, |c| c < nv);

    // Drive remaining (zero-valued) artificials out of the basis; a row
    // with no structural entry is redundant and is dropped.
    let tol = T::pivot_tolerance();
    let mut row = 0;
    while row < tab.a.len() {
        if tab.basis[row] >= nv {
            match (0..nv).find(|&c| tab.a[row][c].abs_val() > tol) {
                Some(c) => tab.pivot(row, c, &mut cost),
                None => {
                    tab.a.remove(row);
                    tab.basis.remove(row);
                    continue;
                }
            }
        }
        row += 1;
    }

    // Phase 2.
    let sign = match sense {
        Sense::Min => T::one(),
        Sense::Max => -T::one(),
    };
    let mut cost = vec![T::zero(); cols + 1];
    for (c, v) in cost.iter_mut().zip(obj.coeffs()) {
        *c = sign.clone() * v.clone();
    }
    for (i, r) in tab.a.iter().enumerate() {
        let cb = cost[tab.basis[i]].clone();
        if cb.is_zero() {
            continue;
        }
        for (c, v) in cost.iter_mut().zip(r) {
            *c = c.clone() - cb.clone() * v.clone();
        }
    }
    tab.run(&mut cost, |c| c < nv);

    let mut cells = vec![T::zero(); nv];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < nv {
            cells[b] = max_of(tab.a[i][cols].clone(), T::zero());
        }
    }
    let argmatrix = JointDistribution::from_cells_unchecked(j, cells);
    let value = obj.evaluate(&argmatrix)?;
    Ok(LpSolution { value, argmatrix })
}

/// Sharp bounds on `α = τ + η - 1`.
pub fn alpha_bounds<T: Scalar>(m: &MarginalPair<T>) -> (T, T) {
    let obj = LinearObjective::sign(m.categories());
    let lo = optimize(m, &obj, Sense::Min).expect("objective built for these margins");
    let hi = optimize(m, &obj, Sense::Max).expect("objective built for these margins");
    (lo.value, hi.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{eta_bounds, tau_bounds};
    use crate::scalar::{ratio, Rational};

    fn rv(v: &[(i64, i64)]) -> Vec<Rational> {
        v.iter().map(|&(n, d)| ratio(n, d)).collect()
    }

    fn example3() -> MarginalPair<Rational> {
        MarginalPair::from_vecs(rv(&[(1, 5), (3, 5), (1, 5)]), rv(&[(2, 5), (1, 5), (2, 5)])).unwrap()
    }

    fn example4() -> MarginalPair<Rational> {
        MarginalPair::from_vecs(rv(&[(1, 5), (1, 5), (3, 5)]), rv(&[(3, 5), (1, 5), (1, 5)])).unwrap()
    }

    fn check_feasible(m: &MarginalPair<Rational>, s: &LpSolution<Rational>) {
        assert_eq!(s.argmatrix.row_margins(), m.treated.probs());
        assert_eq!(s.argmatrix.col_margins(), m.control.probs());
        assert!(s.argmatrix.cells().iter().all(|v| *v >= ratio(0, 1)));
    }

    #[test]
    fn tau_max_example3() {
        let m = example3();
        let s = optimize(&m, &LinearObjective::tau(3), Sense::Max).unwrap();
        assert_eq!(s.value, ratio(4, 5));
        check_feasible(&m, &s);
    }

    #[test]
    fn total_mass_is_one_both_ways() {
        let m = example4();
        for sense in [Sense::Min, Sense::Max] {
            assert_eq!(optimize(&m, &LinearObjective::ones(3), sense).unwrap().value, ratio(1, 1));
        }
    }

    #[test]
    fn alpha_example3_within_naive_range() {
        let m = example3();
        let (lo, hi) = alpha_bounds(&m);
        let (tl, tu) = tau_bounds(&m);
        let (el, eu) = eta_bounds(&m);
        assert!(lo >= tl + el - ratio(1, 1));
        assert!(hi <= tu + eu - ratio(1, 1));
        assert!(lo <= hi);
    }

    #[test]
    fn alpha_point_mass_is_zero() {
        let m = MarginalPair::from_vecs(rv(&[(0, 1), (1, 1)]), rv(&[(0, 1), (1, 1)])).unwrap();
        assert_eq!(alpha_bounds(&m), (ratio(0, 1), ratio(0, 1)));
    }

    #[test]
    fn indicator_objectives_match_closed_forms() {
        for m in [example3(), example4()] {
            let (tl, tu) = tau_bounds(&m);
            let (el, eu) = eta_bounds(&m);
            assert_eq!(optimize(&m, &LinearObjective::tau(3), Sense::Min).unwrap().value, tl);
            assert_eq!(optimize(&m, &LinearObjective::tau(3), Sense::Max).unwrap().value, tu);
            assert_eq!(optimize(&m, &LinearObjective::eta(3), Sense::Min).unwrap().value, el);
            assert_eq!(optimize(&m, &LinearObjective::eta(3), Sense::Max).unwrap().value, eu);
        }
    }

    #[test]
    fn float_mode_agrees() {
        let m = example3().to_f64();
        let s = optimize(&m, &LinearObjective::tau(3), Sense::Min).unwrap();
        assert!((s.value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let err = optimize(&example3(), &LinearObjective::tau(4), Sense::Max).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
