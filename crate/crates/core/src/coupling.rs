//! Joint distributions with prescribed margins.
//!
//! [`lemma1_construct`] builds triangular nonnegative matrices whose row and
//! column sums meet a pair of vectors under a tail- or head-sum dominance
//! condition. [`extremal_coupling`] assembles these blocks into couplings
//! that attain each of the sharp bounds.

use crate::bounds::full_report;
use crate::distributions::{JointDistribution, MarginalPair};
use crate::error::{Error, Result};
use crate::scalar::{max_of, sum, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Lower,
    Upper,
}

/// The four triangular constructions.
///
/// * `A`: lower, column sums `y`, row sums `<= x`; needs tail sums of `x` to dominate those of `y`.
/// * `B`: upper, row sums `x`, column sums `<= y`; needs tail sums of `y` to dominate those of `x`.
/// * `C`: lower, row sums `x`, column sums `<= y`; needs head sums of `y` to dominate those of `x`.
/// * `D`: upper, column sums `y`, row sums `<= x`; needs head sums of `x` to dominate those of `y`.
///
/// When `sum(x) == sum(y)` every inequality holds with equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LemmaVariant {
    A,
    B,
    C,
    D,
}

/// Square matrix with zeros outside one triangle, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangularMatrix<T> {
    n: usize,
    cells: Vec<T>,
    orientation: Orientation,
}

impl<T: Scalar> TriangularMatrix<T> {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn get(&self, k: usize, l: usize) -> &T {
        &self.cells[k * self.n + l]
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.cells.chunks(self.n.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|k| sum(&self.cells[k * self.n..(k + 1) * self.n])).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        (0..self.n).map(|l| (0..self.n).fold(T::zero(), |acc, k| acc + self.get(k, l).clone())).collect()
    }

    /// Entries outside the declared triangle are zero and all entries are nonnegative.
    pub fn is_well_formed(&self) -> bool {
        (0..self.n).all(|k| {
            (0..self.n).all(|l| {
                let v = self.get(k, l);
                let outside = match self.orientation {
                    Orientation::Lower => l > k,
                    Orientation::Upper => l < k,
                };
                *v >= T::zero() && (!outside || v.is_zero())
            })
        })
    }

    fn transpose(self) -> Self {
        let n = self.n;
        let cells = (0..n * n).map(|i| self.cells[(i % n) * n + i / n].clone()).collect();
        let orientation = match self.orientation {
            Orientation::Lower => Orientation::Upper,
            Orientation::Upper => Orientation::Lower,
        };
        TriangularMatrix { n, cells, orientation }
    }

    /// `out[k][l] = self[n-1-l][n-1-k]`; keeps the orientation.
    fn anti_transpose(self) -> Self {
        let n = self.n;
        let cells = (0..n * n).map(|i| self.cells[(n - 1 - i % n) * n + (n - 1 - i / n)].clone()).collect();
        TriangularMatrix { n, cells, orientation: self.orientation }
    }
}

fn reversed<T: Clone>(v: &[T]) -> Vec<T> {
    v.iter().rev().cloned().collect()
}

/// Smallest `s` with `sum_{r>=s} big < sum_{r>=s} small` beyond tolerance.
fn tail_violation<T: Scalar>(big: &[T], small: &[T]) -> Option<usize> {
    let mut gap = vec![T::zero(); big.len()];
    let mut acc = T::zero();
    for s in (0..big.len()).rev() {
        acc = acc + big[s].clone() - small[s].clone();
        gap[s] = acc.clone();
    }
    let floor = -T::neg_tolerance();
    gap.iter().position(|g| *g < floor)
}

/// Smallest `s` with `sum_{r<=s} big < sum_{r<=s} small` beyond tolerance.
fn head_violation<T: Scalar>(big: &[T], small: &[T]) -> Option<usize> {
    let floor = -T::neg_tolerance();
    let mut acc = T::zero();
    for s in 0..big.len() {
        acc = acc + big[s].clone() - small[s].clone();
        if acc < floor {
            return Some(s);
        }
    }
    None
}

/// Variant `A` without the precondition check.
///
/// Column `s` is filled after the sub-problem on indices `s+1..n` has been
/// solved, which unrolls the induction from the last index back to the first.
fn construct_a<T: Scalar>(x: &[T], y: &[T]) -> TriangularMatrix<T> {
    let n = x.len();
    let mut cells = vec![T::zero(); n * n];
    // Row sums of the sub-problem solved so far.
    let mut row_used = vec![T::zero(); n];
    for s in (0..n).rev() {
        if y[s] < x[s] {
            cells[s * n + s] = y[s].clone();
            row_used[s] = row_used[s].clone() + y[s].clone();
            continue;
        }
        cells[s * n + s] = x[s].clone();
        let excess = y[s].clone() - x[s].clone();
        let residuals: Vec<T> =
            (s + 1..n).map(|k| max_of(x[k].clone() - row_used[k].clone(), T::zero())).collect();
        let total = sum(&residuals);
        row_used[s] = row_used[s].clone() + x[s].clone();
        if total.is_zero() || excess.is_zero() {
            continue;
        }
        for (i, r) in residuals.into_iter().enumerate() {
            let k = s + 1 + i;
            let v = (excess.clone() * r / total.clone()).snap();
            row_used[k] = row_used[k].clone() + v.clone();
            cells[k * n + s] = v;
        }
    }
    TriangularMatrix { n, cells, orientation: Orientation::Lower }
}

fn construct_unchecked<T: Scalar>(x: &[T], y: &[T], variant: LemmaVariant) -> TriangularMatrix<T> {
    match variant {
        LemmaVariant::A => construct_a(x, y),
        LemmaVariant::B => construct_a(y, x).transpose(),
        LemmaVariant::C => construct_a(&reversed(y), &reversed(x)).anti_transpose(),
        LemmaVariant::D => construct_unchecked(y, x, LemmaVariant::C).transpose(),
    }
}

/// Builds the triangular matrix of the chosen variant.
pub fn lemma1_construct<T: Scalar>(x: &[T], y: &[T], variant: LemmaVariant) -> Result<TriangularMatrix<T>> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch { left: x.len(), right: y.len() });
    }
    if let Some((index, v)) = x.iter().chain(y).enumerate().find(|(_, v)| **v < -T::neg_tolerance()) {
        return Err(Error::NegativeEntry { index: index % x.len(), value: v.to_f64() });
    }
    let violation = match variant {
        LemmaVariant::A => tail_violation(x, y),
        LemmaVariant::B => tail_violation(y, x),
        LemmaVariant::C => head_violation(y, x),
        LemmaVariant::D => head_violation(x, y),
    };
    if let Some(index) = violation {
        return Err(Error::DominanceViolated { index });
    }
    Ok(construct_unchecked(x, y, variant))
}

/// Which bound a coupling should attain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingTarget {
    TauMin,
    TauMax,
    EtaMin,
    EtaMax,
    Independent,
}

impl CouplingTarget {
    pub const ALL: [CouplingTarget; 5] = [
        CouplingTarget::TauMin,
        CouplingTarget::TauMax,
        CouplingTarget::EtaMin,
        CouplingTarget::EtaMax,
        CouplingTarget::Independent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CouplingTarget::TauMin => "tau_min",
            CouplingTarget::TauMax => "tau_max",
            CouplingTarget::EtaMin => "eta_min",
            CouplingTarget::EtaMax => "eta_max",
            CouplingTarget::Independent => "independent",
        }
    }
}

impl std::str::FromStr for CouplingTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CouplingTarget::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown coupling target `{s}`")))
    }
}

/// A coupling of `m` attaining the requested bound.
pub fn extremal_coupling<T: Scalar>(m: &MarginalPair<T>, target: CouplingTarget) -> JointDistribution<T> {
    match target {
        CouplingTarget::TauMax => tau_max(m),
        CouplingTarget::TauMin => tau_min(m),
        // η(P) = 1 - τ(Pᵀ) once the labels are exchanged.
        CouplingTarget::EtaMin => tau_max(&m.swapped()).transpose(),
        CouplingTarget::EtaMax => tau_min(&m.swapped()).transpose(),
        CouplingTarget::Independent => JointDistribution::independent(m),
    }
}

/// Writes `block` into `cells` with its `(0, 0)` entry at `(row, col)`.
fn place<T: Scalar>(cells: &mut [T], j: usize, block: &TriangularMatrix<T>, row: usize, col: usize) {
    for k in 0..block.size() {
        for l in 0..block.size() {
            cells[(row + k) * j + col + l] = block.get(k, l).clone();
        }
    }
}

/// Fills the rows in `rows` and columns in `cols` with the rank-one
/// product of the remaining row and column mass, scaled to the total.
fn product_fill<T: Scalar>(
    cells: &mut [T],
    j: usize,
    m: &MarginalPair<T>,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) {
    let row_res: Vec<T> = rows
        .clone()
        .map(|k| max_of(m.treated.probs()[k].clone() - sum(&cells[k * j..(k + 1) * j]), T::zero()))
        .collect();
    let col_res: Vec<T> = cols
        .clone()
        .map(|l| {
            let used = (0..j).fold(T::zero(), |acc, k| acc + cells[k * j + l].clone());
            max_of(m.control.probs()[l].clone() - used, T::zero())
        })
        .collect();
    let total = sum(&row_res);
    if total.is_zero() {
        return;
    }
    for (a, k) in rows.enumerate() {
        for (b, l) in cols.clone().enumerate() {
            cells[k * j + l] = (row_res[a].clone() * col_res[b].clone() / total.clone()).snap();
        }
    }
}

/// Attains `τ_U = 1 + min Δ`.
fn tau_max<T: Scalar>(m: &MarginalPair<T>) -> JointDistribution<T> {
    let j = m.categories();
    let (p1, p0) = (m.treated.probs(), m.control.probs());
    let j1 = full_report(m).argmin_delta_index;
    let mut cells = vec![T::zero(); j * j];
    if j1 == 0 {
        // Dominance: one lower-triangular block with exact margins.
        place(&mut cells, j, &construct_unchecked(p1, p0, LemmaVariant::A), 0, 0);
        return JointDistribution::from_cells_unchecked(j, cells);
    }
    let top_left = construct_unchecked(&p1[..j1], &p0[..j1], LemmaVariant::A);
    let bottom_right = construct_unchecked(&p1[j1..], &p0[j1..], LemmaVariant::C);
    place(&mut cells, j, &top_left, 0, 0);
    place(&mut cells, j, &bottom_right, j1, j1);
    product_fill(&mut cells, j, m, 0..j1, j1..j);
    JointDistribution::from_cells_unchecked(j, cells)
}

/// Attains `τ_L = max_j (p0_j + Δ_j)`.
fn tau_min<T: Scalar>(m: &MarginalPair<T>) -> JointDistribution<T> {
    let j = m.categories();
    let (p1, p0) = (m.treated.probs(), m.control.probs());
    let j2 = full_report(m).argmax_lower_index;
    let mut cells = vec![T::zero(); j * j];
    // Strictly upper blocks: rows 0..j2 against columns 1..=j2, and rows
    // j2..j-1 against columns j2+1..j.
    let top = construct_unchecked(&p1[..j2], &p0[1..=j2], LemmaVariant::B);
    let bottom = construct_unchecked(&p1[j2..j - 1], &p0[j2 + 1..], LemmaVariant::D);
    place(&mut cells, j, &top, 0, 1);
    place(&mut cells, j, &bottom, j2, j2 + 1);
    product_fill(&mut cells, j, m, j2..j, 0..j2 + 1);
    JointDistribution::from_cells_unchecked(j, cells)
}
