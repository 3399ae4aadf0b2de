use serde::{Deserialize, Serialize};

use crate::density::InitialDensity;
use crate::error::{invalid, require_positive, Error, Result};

/// Geometric partition of `[x_min, n]` with midpoint pivots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub n: f64,
    pub ratio: f64,
    /// `cells + 1` strictly increasing edges, `edges[0] = x_min`, last `= n`.
    pub edges: Vec<f64>,
    pub pivots: Vec<f64>,
    pub widths: Vec<f64>,
}

impl Grid {
    pub fn build(x_min: f64, n: f64, cells: usize) -> Result<Self> {
        require_positive("x_min", x_min)?;
        require_positive("n", n)?;
        if x_min >= n {
            return Err(invalid("x_min", format!("must be below n, got x_min = {x_min}, n = {n}")));
        }
        if cells == 0 {
            return Err(invalid("cells", "must be at least 1"));
        }
        let ratio = (n / x_min).powf(1.0 / cells as f64);
        let mut edges: Vec<f64> = (0..=cells).map(|i| x_min * ratio.powi(i as i32)).collect();
        edges[0] = x_min;
        edges[cells] = n;
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Inconsistent(
                "grid edges are not strictly increasing at this resolution".into(),
            ));
        }
        let pivots = edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Grid {
            x_min,
            n,
            ratio,
            edges,
            pivots,
            widths,
        })
    }

    pub fn cells(&self) -> usize {
        self.pivots.len()
    }

    /// Index of the cell whose pivot is the largest one not exceeding `x`.
    pub fn pivot_floor(&self, x: f64) -> Option<usize> {
        match self.pivots.partition_point(|&p| p <= x) {
            0 => None,
            k => Some(k - 1),
        }
    }
}

/// Cell-integrated particle numbers `u_i ≈ ∫_{cell i} f(t, x) dx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub t: f64,
    pub counts: Vec<f64>,
}

impl StateVector {
    pub fn zeros(cells: usize) -> Self {
        StateVector {
            t: 0.0,
            counts: vec![0.0; cells],
        }
    }
}

/// What `project_initial` could not represent on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub dropped_number_below: f64,
    pub dropped_mass_below: f64,
}

/// `u_i = ∫_{cell i} f^in dx`. Mass below `x_min` is reported, not represented.
pub fn project_initial(f_in: &InitialDensity, grid: &Grid) -> Result<(StateVector, ProjectionReport)> {
    f_in.validate()?;
    let mut counts = Vec::with_capacity(grid.cells());
    for (i, w) in grid.edges.windows(2).enumerate() {
        let v = f_in
            .integral(w[0], w[1])
            .map_err(|e| Error::Inconsistent(format!("projection failed in cell {i}: {e}")))?;
        counts.push(v.max(0.0));
    }
    let report = ProjectionReport {
        dropped_number_below: f_in.integral(0.0, grid.x_min)?,
        dropped_mass_below: f_in.first_moment(0.0, grid.x_min)?,
    };
    Ok((StateVector { t: 0.0, counts }, report))
}
