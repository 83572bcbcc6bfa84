use crate::error::{Error, Result};
use crate::model::{AcquisitionGrid, SignalData};

/// Partition of `ne` echoes into contiguous windows whose widths grow
/// geometrically from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowingPlan {
    /// `W + 1` strictly increasing boundaries from 0 to `ne`; window `k`
    /// covers echoes `edges[k]..edges[k + 1]`.
    edges: Vec<usize>,
}

/// Ratio `q > 1` with `1 + q + ... + q^(w-1) = ne`.
fn geometric_ratio(ne: usize, w: usize) -> f64 {
    let target = ne as f64;
    let total = |q: f64| (q.powi(w as i32) - 1.0) / (q - 1.0);
    let (mut lo, mut hi) = (1.0 + 1e-12, 2.0);
    while total(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl WindowingPlan {
    pub fn geometric(ne: usize, w: usize) -> Result<Self> {
        if w < 2 || w > ne {
            return Err(Error::InvalidParameter {
                name: "window count",
                reason: format!("must lie in [2, {ne}], got {w}"),
            });
        }
        let edges = if w == ne {
            (0..=ne).collect()
        } else {
            let q = geometric_ratio(ne, w);
            let mut edges: Vec<usize> = (0..=w)
                .map(|k| ((q.powi(k as i32) - 1.0) / (q - 1.0)).round() as usize)
                .collect();
            edges[0] = 0;
            edges[w] = ne;
            for k in 1..=w {
                edges[k] = edges[k].max(edges[k - 1] + 1);
            }
            for k in (0..w).rev() {
                edges[k] = edges[k].min(ne - (w - k));
            }
            edges[w] = ne;
            edges
        };
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[usize] {
        &self.edges
    }

    /// Output count `W`.
    pub fn len(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Input count `NE`.
    pub fn input_len(&self) -> usize {
        *self.edges.last().expect("plan has edges")
    }

    pub fn widths(&self) -> Vec<usize> {
        self.edges.windows(2).map(|e| e[1] - e[0]).collect()
    }

    /// Arithmetic mean of each window. Computed as an offset from the first
    /// sample so that constant windows are reproduced exactly.
    ///
    /// Panics if `values.len()` differs from the plan's input length.
    pub fn average(&self, values: &[f64]) -> Vec<f64> {
        assert_eq!(values.len(), self.input_len(), "windowing input length");
        self.edges
            .windows(2)
            .map(|e| {
                let win = &values[e[0]..e[1]];
                let base = win[0];
                base + win.iter().map(|v| v - base).sum::<f64>() / win.len() as f64
            })
            .collect()
    }
}

/// Averages the echo axis of `sig` down to `w` points with the geometric
/// plan; the t1 axis is untouched.
pub fn window_cpmg(
    grid: &AcquisitionGrid,
    sig: &SignalData,
    w: usize,
) -> Result<(AcquisitionGrid, SignalData, WindowingPlan)> {
    let (m1, m2) = sig.shape();
    if (grid.m1(), grid.m2()) != (m1, m2) {
        return Err(Error::DimensionMismatch {
            what: "acquisition grid",
            expected: m1 * m2,
            found: grid.m1() * grid.m2(),
        });
    }
    let plan = WindowingPlan::geometric(m2, w)?;
    let t2 = plan.average(grid.t2());
    let mut out = nalgebra::DMatrix::zeros(m1, w);
    for (i, row) in sig.matrix().row_iter().enumerate() {
        let row: Vec<f64> = row.iter().copied().collect();
        for (k, v) in plan.average(&row).into_iter().enumerate() {
            out[(i, k)] = v;
        }
    }
    let mut windowed = SignalData::new(out)?;
    if let Some(delta) = sig.noise_level() {
        windowed = windowed.with_noise_level(delta);
    }
    Ok((AcquisitionGrid::new(grid.t1().to_vec(), t2)?, windowed, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::geometric_space;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn default_reduction() {
        let plan = WindowingPlan::geometric(1024, 146).unwrap();
        assert_eq!(plan.len(), 146);
        assert_eq!(plan.input_len(), 1024);
        let widths = plan.widths();
        assert_eq!(widths[0], 1);
        assert!(widths.iter().all(|w| *w >= 1));
        assert_eq!(widths.iter().sum::<usize>(), 1024);
        assert!(widths.windows(2).all(|w| w[1] + 1 >= w[0]));
        assert!(widths.last().unwrap() > &widths[0]);
    }

    #[test]
    fn identity_when_no_reduction() {
        let plan = WindowingPlan::geometric(10, 10).unwrap();
        let v: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
        assert_eq!(plan.average(&v), v);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(WindowingPlan::geometric(10, 1).is_err());
        assert!(WindowingPlan::geometric(10, 11).is_err());
    }

    #[test]
    fn constant_signal_and_untouched_t1() {
        let grid = AcquisitionGrid::new(
            geometric_space(1e-3, 1.0, 3),
            (1..=64).map(|n| n as f64 * 1e-3).collect(),
        )
        .unwrap();
        let sig = SignalData::new(DMatrix::from_element(3, 64, 0.1)).unwrap();
        let (g, s, plan) = window_cpmg(&grid, &sig, 12).unwrap();
        assert_eq!(plan.len(), 12);
        assert_eq!(g.t1(), grid.t1());
        assert!(s.as_slice().iter().all(|v| *v == 0.1));
        assert!(g.t2().windows(2).all(|w| w[1] > w[0]));
    }

    proptest! {
        #[test]
        fn plans_cover_in_order(ne in 2usize..600, frac in 0.0f64..1.0) {
            let w = 2 + ((ne - 2) as f64 * frac) as usize;
            let plan = WindowingPlan::geometric(ne, w).unwrap();
            prop_assert_eq!(plan.len(), w);
            prop_assert_eq!(plan.edges()[0], 0);
            prop_assert_eq!(plan.input_len(), ne);
            prop_assert!(plan.edges().windows(2).all(|e| e[1] > e[0]));
        }

        #[test]
        fn constant_blocks_are_exact(c in -1e3f64..1e3, ne in 2usize..200, frac in 0.0f64..1.0) {
            let w = 2 + ((ne - 2) as f64 * frac) as usize;
            let plan = WindowingPlan::geometric(ne, w).unwrap();
            prop_assert!(plan.average(&vec![c; ne]).iter().all(|v| *v == c));
        }
    }
}
