//! Fixed-step explicit midpoint (RK2) integration on a grid whose nodes are
//! aligned with declared discontinuities of the right-hand side.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid over `[start, end]`, split so every breakpoint is a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub steps: usize,
    pub start: f64,
    pub end: f64,
    pub breakpoints: Vec<f64>,
}

impl GridSpec {
    pub fn uniform(steps: usize, start: f64, end: f64) -> Self {
        Self {
            steps,
            start,
            end,
            breakpoints: Vec::new(),
        }
    }

    pub fn with_breakpoint(mut self, at: f64) -> Self {
        self.breakpoints.push(at);
        self
    }

    /// Node abscissae. Each segment between consecutive breakpoints gets a
    /// share of the steps proportional to its length (largest remainder,
    /// at least one step per segment), and is uniform inside.
    pub fn nodes(&self) -> Result<Vec<f64>> {
        if self.steps == 0 {
            return Err(Error::validation("grid.steps", "must be >= 1"));
        }
        if !(self.start.is_finite() && self.end.is_finite()) || self.end == self.start {
            return Err(Error::validation(
                "grid.span",
                format!("degenerate span ({}, {})", self.start, self.end),
            ));
        }
        let (lo, hi) = if self.start < self.end {
            (self.start, self.end)
        } else {
            (self.end, self.start)
        };
        let mut cuts: Vec<f64> = self
            .breakpoints
            .iter()
            .copied()
            .filter(|b| *b > lo && *b < hi)
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(self.start);
        if self.start < self.end {
            edges.extend(cuts.iter().copied());
        } else {
            edges.extend(cuts.iter().rev().copied());
        }
        edges.push(self.end);

        let segments = edges.len() - 1;
        let total = self.steps.max(segments);
        let span = self.end - self.start;
        let shares: Vec<f64> = edges
            .windows(2)
            .map(|w| (w[1] - w[0]) / span * total as f64)
            .collect();
        let mut counts: Vec<usize> = shares.iter().map(|s| (s.floor() as usize).max(1)).collect();
        let mut assigned: usize = counts.iter().sum();
        // hand leftover steps to the largest remainders, take surplus from
        // the largest segments
        let mut order: Vec<usize> = (0..segments).collect();
        order.sort_by(|&a, &b| {
            let ra = shares[a] - counts[a] as f64;
            let rb = shares[b] - counts[b] as f64;
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        let mut i = 0;
        while assigned < total {
            counts[order[i % segments]] += 1;
            assigned += 1;
            i += 1;
        }
        while assigned > total {
            let k = (0..segments).max_by_key(|&k| counts[k]).unwrap();
            counts[k] -= 1;
            assigned -= 1;
        }

        let mut nodes = Vec::with_capacity(total + 1);
        nodes.push(self.start);
        for (seg, &count) in counts.iter().enumerate() {
            let a = edges[seg];
            let b = edges[seg + 1];
            let h = (b - a) / count as f64;
            for j in 1..count {
                nodes.push(a + h * j as f64);
            }
            nodes.push(b);
        }
        Ok(nodes)
    }
}

/// Node values of an integration, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub grid: Vec<f64>,
    pub dim: usize,
    values: Vec<f64>,
}

impl OdeSolution {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last(&self) -> &[f64] {
        self.node(self.len() - 1)
    }

    /// Joins two solutions where `b` starts at the last node of `a`.
    pub fn concat(mut a: OdeSolution, b: OdeSolution) -> OdeSolution {
        debug_assert_eq!(a.dim, b.dim);
        a.grid.extend_from_slice(&b.grid[1..]);
        a.values.extend_from_slice(&b.values[b.dim..]);
        a
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.grid.iter().copied().zip(self.values.chunks(self.dim))
    }
}

/// A single midpoint step from `(x, y)` with step `h`.
pub fn midpoint_step<F>(mut f: F, x: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let dim = y.len();
    let mut k = vec![0.0; dim];
    f(x, y, &mut k)?;
    let mid: Vec<f64> = y.iter().zip(&k).map(|(a, b)| a + 0.5 * h * b).collect();
    f(x + 0.5 * h, &mid, &mut k)?;
    let out: Vec<f64> = y.iter().zip(&k).map(|(a, b)| a + h * b).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "integration step",
        });
    }
    Ok(out)
}

/// Midpoint rule `y+ = y + h f(x + h/2, y + h/2 f(x, y))` over the aligned
/// grid. Errors raised by `f` are wrapped with the index of the node the
/// failing step started from.
pub fn integrate<F>(f: F, y0: &[f64], grid: &GridSpec) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    integrate_nodes(f, y0, grid.nodes()?)
}

/// As [`integrate`], over an explicit monotone node list.
pub fn integrate_nodes<F>(mut f: F, y0: &[f64], nodes: Vec<f64>) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    if nodes.len() < 2 {
        return Err(Error::validation("grid.steps", "must be >= 1"));
    }
    let dim = y0.len();
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "initial value",
        });
    }
    let mut values = Vec::with_capacity(nodes.len() * dim);
    values.extend_from_slice(y0);

    let mut y = y0.to_vec();
    let mut k = vec![0.0; dim];
    let mut mid = vec![0.0; dim];
    for (i, w) in nodes.windows(2).enumerate() {
        let (x, h) = (w[0], w[1] - w[0]);
        let wrap = |e: Error| Error::IntegrationFailed {
            node: i,
            source: Box::new(e),
        };
        f(x, &y, &mut k).map_err(wrap)?;
        for j in 0..dim {
            mid[j] = y[j] + 0.5 * h * k[j];
        }
        f(x + 0.5 * h, &mid, &mut k).map_err(wrap)?;
        for j in 0..dim {
            y[j] += h * k[j];
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(wrap(Error::NonFinite {
                context: "integration step",
            }));
        }
        values.extend_from_slice(&y);
    }
    Ok(OdeSolution {
        grid: nodes,
        dim,
        values,
    })
}
