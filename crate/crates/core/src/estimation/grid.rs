use std::f64::consts::PI;

use rayon::prelude::*;

use super::dataset::EchoDataset;
use super::echo_fit::{EchoCore, EchoFitParams, EchoModel};

/// Search box for the oracle. The grid includes both edges of each range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridBounds {
    pub b_perp: (f64, f64),
    pub phi0: (f64, f64),
}

impl GridBounds {
    /// `b_perp ∈ [0, b_max]`, `φ₀ ∈ [0, 2π]`.
    pub fn full_turn(b_max: f64) -> Self {
        Self {
            b_perp: (0.0, b_max),
            phi0: (0.0, 2.0 * PI),
        }
    }
}

/// Number of intervals along each axis; doubling both refines the grid
/// without dropping any node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridResolution {
    pub b_perp: usize,
    pub phi0: usize,
}

impl GridResolution {
    pub fn doubled(self) -> Self {
        Self {
            b_perp: self.b_perp * 2,
            phi0: self.phi0 * 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub params: EchoFitParams,
    pub sse: f64,
    /// Grid spacing along (b_perp, φ₀).
    pub cell: (f64, f64),
}

fn node(range: (f64, f64), n: usize, k: usize) -> f64 {
    if n == 0 {
        return range.0;
    }
    range.0 + (range.1 - range.0) * k as f64 / n as f64
}

/// Exhaustive weighted-SSE minimisation over a (b_perp, φ₀) grid, solving
/// contrast and baseline linearly at every node.
pub fn grid_oracle(data: &EchoDataset, model: &EchoModel, bounds: &GridBounds, res: GridResolution) -> GridOptimum {
    let core = EchoCore::new(data, model);
    let nb = res.b_perp;
    let np = res.phi0;
    let (sse, params) = (0..=nb)
        .into_par_iter()
        .map(|ib| {
            let b = node(bounds.b_perp, nb, ib);
            let mut best = (f64::INFINITY, [b, 0.0, 0.0, 0.0]);
            for ip in 0..=np {
                let phi0 = node(bounds.phi0, np, ip);
                let (c, base, sse) = core.solve_linear(b, phi0);
                if sse < best.0 {
                    best = (sse, [b, phi0, c, base]);
                }
            }
            best
        })
        .reduce(
            || (f64::INFINITY, [0.0; 4]),
            // Ties go to the lower node so the result does not depend on scheduling.
            |a, b| {
                if b.0 < a.0 || (b.0 == a.0 && (b.1[0], b.1[1]) < (a.1[0], a.1[1])) {
                    b
                } else {
                    a
                }
            },
        );
    let span = |r: (f64, f64), n: usize| if n == 0 { 0.0 } else { (r.1 - r.0) / n as f64 };
    GridOptimum {
        params: EchoFitParams::from_array(params),
        sse,
        cell: (span(bounds.b_perp, nb), span(bounds.phi0, np)),
    }
}
