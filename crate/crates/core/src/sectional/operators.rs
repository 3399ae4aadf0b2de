//! Discrete collision and fragmentation operators.
//!
//! Fragments of a parent at pivot `x̄_j` are distributed onto pivots with the
//! fixed-pivot hat functions, which preserve both number and mass for every
//! fragment size between `x̄_0` and `x̄_j`. Fragments below the first pivot
//! cannot be represented with both invariants on a single pivot; they are
//! lumped onto `x̄_0` by number and the excess mass is removed by moving a
//! uniform fraction of the column onto `x̄_0`. When the parent is too small for
//! that (`x̄_j < β x̄_0`), the sub-pivot fragments are lumped by mass instead. A
//! final rescale makes `Σ_i x̄_i N[i][j] = x̄_j` hold to rounding.

use serde::Serialize;

use crate::daughter::{DaughterSpec, Profile};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

use super::grid::Grid;

/// Storage layout of the fragment allocation tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// `N[i][j]`, broadcast over the partner cell `k`.
    Broadcast,
    /// `N[i][j][k]`.
    Full,
}

#[derive(Debug, Clone)]
pub struct OperatorSet {
    cells: usize,
    pivots: Vec<f64>,
    layout: Layout,
    /// `[i*C + j]` or `[(i*C + j)*C + k]`.
    frag_alloc: Vec<f64>,
    /// `K[j][k] = a_n(x̄_j, x̄_k)`, row-major.
    rate_matrix: Vec<f64>,
    omega_pivots: Vec<f64>,
    a0: f64,
    product: bool,
}

impl OperatorSet {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn omega_pivots(&self) -> &[f64] {
        &self.omega_pivots
    }

    pub fn rate(&self, j: usize, k: usize) -> f64 {
        self.rate_matrix[j * self.cells + k]
    }

    /// Expected number of fragments landing in cell `i` when a particle from
    /// cell `j` breaks after colliding with one from cell `k`.
    pub fn alloc(&self, i: usize, j: usize, k: usize) -> f64 {
        match self.layout {
            Layout::Broadcast => self.frag_alloc[i * self.cells + j],
            Layout::Full => self.frag_alloc[(i * self.cells + j) * self.cells + k],
        }
    }

    /// `Σ_i N[i][j]` (partner cell `k`).
    pub fn column_count(&self, j: usize, k: usize) -> f64 {
        (0..self.cells).map(|i| self.alloc(i, j, k)).sum()
    }

    /// `Σ_i x̄_i N[i][j]` (partner cell `k`).
    pub fn column_mass(&self, j: usize, k: usize) -> f64 {
        (0..self.cells).map(|i| self.pivots[i] * self.alloc(i, j, k)).sum()
    }

    /// Loss rates `L_j = Σ_k K[j][k] u_k`; `O(C)` for product kernels.
    pub fn loss_rates_into(&self, u: &[f64], rates: &mut [f64]) {
        let c = self.cells;
        if self.product {
            let s: f64 = self.omega_pivots.iter().zip(u).map(|(w, v)| w * v).sum();
            for (r, w) in rates.iter_mut().zip(&self.omega_pivots) {
                *r = self.a0 * w * s;
            }
        } else {
            for (j, r) in rates.iter_mut().enumerate() {
                let row = &self.rate_matrix[j * c..(j + 1) * c];
                *r = row.iter().zip(u).map(|(k, v)| k * v).sum();
            }
        }
    }

    pub fn loss_rates(&self, u: &[f64]) -> Vec<f64> {
        let mut rates = vec![0.0; self.cells];
        self.loss_rates_into(u, &mut rates);
        rates
    }

    /// `du_i/dt = Σ_j N[i][j] u_j L_j − u_i L_i`, written into `out`.
    /// `scratch` must hold `C` entries.
    pub fn rhs_into(&self, u: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        let c = self.cells;
        self.loss_rates_into(u, scratch);
        match self.layout {
            Layout::Broadcast => {
                // scratch becomes the per-cell breakage rate u_j L_j
                for (r, v) in scratch.iter_mut().zip(u) {
                    *r *= v;
                }
                for i in 0..c {
                    let row = &self.frag_alloc[i * c..(i + 1) * c];
                    let gain: f64 = row[i..].iter().zip(&scratch[i..]).map(|(n, r)| n * r).sum();
                    out[i] = gain - scratch[i];
                }
            }
            Layout::Full => {
                for i in 0..c {
                    let mut gain = 0.0;
                    for j in i..c {
                        if u[j] == 0.0 {
                            continue;
                        }
                        let base = (i * c + j) * c;
                        let inner: f64 = (0..c)
                            .map(|k| self.frag_alloc[base + k] * self.rate_matrix[j * c + k] * u[k])
                            .sum();
                        gain += u[j] * inner;
                    }
                    out[i] = gain - u[i] * scratch[i];
                }
            }
        }
    }
}

/// Pure right-hand side of the discrete equation.
pub fn rhs(u: &[f64], ops: &OperatorSet) -> Vec<f64> {
    let mut out = vec![0.0; ops.cells];
    let mut scratch = vec![0.0; ops.cells];
    ops.rhs_into(u, &mut out, &mut scratch);
    out
}

pub fn assemble_operators(kernel: &KernelSpec, daughter: &DaughterSpec, grid: &Grid) -> Result<OperatorSet> {
    let layout = if daughter.depends_on_partner() {
        Layout::Full
    } else {
        Layout::Broadcast
    };
    assemble_operators_with(kernel, daughter, grid, layout)
}

pub fn assemble_operators_with(
    kernel: &KernelSpec,
    daughter: &DaughterSpec,
    grid: &Grid,
    layout: Layout,
) -> Result<OperatorSet> {
    match kernel.n {
        Some(n) if ((n - grid.n) / grid.n).abs() <= 1e-12 => {}
        other => {
            return Err(Error::Inconsistent(format!(
                "kernel truncation {other:?} must equal grid.n = {}",
                grid.n
            )))
        }
    }
    let c = grid.cells();
    let pivots = grid.pivots.clone();
    let omega_pivots: Vec<f64> = pivots.iter().map(|&x| kernel.omega_truncated(x)).collect();
    let mut rate_matrix = vec![0.0; c * c];
    for j in 0..c {
        for k in 0..c {
            rate_matrix[j * c + k] = kernel.kernel_unchecked(pivots[j], pivots[k]);
        }
    }
    let frag_alloc = match layout {
        Layout::Broadcast => {
            let mut n = vec![0.0; c * c];
            for j in 0..c {
                let col = allocate_column(&daughter.profile(pivots[j], pivots[0]), &pivots, j)?;
                for (i, v) in col.into_iter().enumerate() {
                    n[i * c + j] = v;
                }
            }
            n
        }
        Layout::Full => {
            let mut n = vec![0.0; c * c * c];
            for j in 0..c {
                for k in 0..c {
                    let col = allocate_column(&daughter.profile(pivots[j], pivots[k]), &pivots, j)?;
                    for (i, v) in col.into_iter().enumerate() {
                        n[(i * c + j) * c + k] = v;
                    }
                }
            }
            n
        }
    };
    Ok(OperatorSet {
        cells: c,
        pivots,
        layout,
        frag_alloc,
        rate_matrix,
        omega_pivots,
        a0: kernel.a0,
        product: kernel.is_product(),
    })
}

/// Allocation of the fragments of a parent at `pivots[j]` onto pivots `0..=j`.
fn allocate_column(profile: &Profile, pivots: &[f64], j: usize) -> Result<Vec<f64>> {
    let y = pivots[j];
    let p0 = pivots[0];
    let mut col = vec![0.0; pivots.len()];

    for i in 0..j {
        let (lo, hi) = (pivots[i], pivots[i + 1]);
        let h = hi - lo;
        col[i] += profile.linear_between(hi / h, -1.0 / h, lo, hi);
        col[i + 1] += profile.linear_between(-lo / h, 1.0 / h, lo, hi);
    }

    let below_count = profile.moment_between(0.0, 0.0, p0);
    let below_mass = profile.moment_between(1.0, 0.0, p0);
    let excess = p0 * below_count - below_mass;
    let spread: f64 = (1..=j).map(|i| col[i] * (pivots[i] - p0)).sum();

    if excess > 0.0 && spread > 0.0 && excess <= spread {
        // number-preserving lump plus a uniform shift onto x̄_0
        let s = excess / spread;
        let mut moved = 0.0;
        for v in col.iter_mut().take(j + 1).skip(1) {
            moved += s * *v;
            *v *= 1.0 - s;
        }
        col[0] += below_count + moved;
    } else if excess > 0.0 {
        col[0] += below_mass / p0;
    } else {
        col[0] += below_count;
    }

    let mass: f64 = col.iter().zip(pivots).map(|(v, x)| v * x).sum();
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Inconsistent(format!(
            "fragment allocation for cell {j} carries no mass ({mass})"
        )));
    }
    let scale = y / mass;
    for v in &mut col {
        *v *= scale;
    }
    Ok(col)
}
