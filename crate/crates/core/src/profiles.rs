//! Performance profiles: the best performance seen over the free motor for
//! each pair of binned motor speeds.

use std::fmt;
use std::io::{self, Write};

use crate::bo::PriorSpec;
use crate::error::{Error, Result};
use crate::tasks::Policy;

/// Bins per axis.
pub const BINS: usize = 25;

/// The two motors a grid is indexed by; the third is maximized out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisPair {
    V1V2,
    V1V3,
    V2V3,
}

impl AxisPair {
    pub const ALL: [AxisPair; 3] = [AxisPair::V1V2, AxisPair::V1V3, AxisPair::V2V3];

    /// Indices of the row and column motors.
    pub fn axes(self) -> (usize, usize) {
        match self {
            AxisPair::V1V2 => (0, 1),
            AxisPair::V1V3 => (0, 2),
            AxisPair::V2V3 => (1, 2),
        }
    }

    pub fn free_axis(self) -> usize {
        3 - self.axes().0 - self.axes().1
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisPair::V1V2 => "v1v2",
            AxisPair::V1V3 => "v1v3",
            AxisPair::V2V3 => "v2v3",
        }
    }
}

impl fmt::Display for AxisPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lower edge of bin `k` (or the upper edge of the last bin for `k = BINS`).
pub fn bin_edge(k: usize) -> f64 {
    k as f64 / BINS as f64
}

/// Bin of `x ∈ [0,1]`: half-open `[lo, hi)`, the last bin closed.
pub fn bin_index(x: f64) -> usize {
    let mut k = ((x * BINS as f64).floor().max(0.0) as usize).min(BINS - 1);
    if k > 0 && x < bin_edge(k) {
        k -= 1;
    } else if k + 1 < BINS && x >= bin_edge(k + 1) {
        k += 1;
    }
    k
}

/// Centre of bin `k`.
pub fn bin_center(k: usize) -> f64 {
    (k as f64 + 0.5) / BINS as f64
}

/// `BINS × BINS` grid of best performances; `None` marks an empty cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGrid {
    pair: AxisPair,
    cells: Vec<Option<f64>>,
}

impl ProfileGrid {
    pub fn new(pair: AxisPair) -> Self {
        Self {
            pair,
            cells: vec![None; BINS * BINS],
        }
    }

    pub fn pair(&self) -> AxisPair {
        self.pair
    }

    /// Cell at row bin `i` (first axis) and column bin `j` (second axis).
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i * BINS + j]
    }

    /// Cell holding `chi`.
    pub fn cell_of(&self, chi: &[f64; 3]) -> (usize, usize) {
        let (a, b) = self.pair.axes();
        (bin_index(chi[a]), bin_index(chi[b]))
    }

    pub fn insert(&mut self, chi: &[f64; 3], performance: f64) {
        let (i, j) = self.cell_of(chi);
        let cell = &mut self.cells[i * BINS + j];
        *cell = Some(cell.map_or(performance, |c| c.max(performance)));
    }

    pub fn filled(&self) -> usize {
        self.cells.iter().flatten().count()
    }

    /// Largest value over all cells.
    pub fn max(&self) -> Option<f64> {
        self.cells.iter().flatten().copied().reduce(f64::max)
    }

    fn min(&self) -> Option<f64> {
        self.cells.iter().flatten().copied().reduce(f64::min)
    }

    /// One header line `# <pair> edges=<26 edges>`, then 25 rows of 25
    /// comma-separated cells, row `i` being the first axis. Empty cells are
    /// written as `NA`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (a, b) = self.pair.axes();
        let edges: Vec<String> = (0..=BINS).map(|k| bin_edge(k).to_string()).collect();
        writeln!(out, "# rows=v{} cols=v{} edges={}", a + 1, b + 1, edges.join(","))?;
        for i in 0..BINS {
            let row: Vec<String> = (0..BINS)
                .map(|j| self.get(i, j).map_or_else(|| "NA".to_string(), |v| v.to_string()))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Plain (ASCII) graymap, one pixel per cell, row 0 at the top. Values
    /// map linearly onto `0..=255` between the smallest and largest filled
    /// cell; empty cells are 0.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "P2\n{BINS} {BINS}\n255")?;
        let lo = self.min().unwrap_or(0.0);
        let hi = self.max().unwrap_or(0.0);
        for i in 0..BINS {
            let row: Vec<String> = (0..BINS)
                .map(|j| {
                    let level = match self.get(i, j) {
                        None => 0,
                        Some(_) if hi <= lo => 255,
                        Some(v) => (255.0 * (v - lo) / (hi - lo)).round() as u8,
                    };
                    level.to_string()
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Grids for v1v2, v1v3 and v2v3, in that order.
pub fn compute_profiles(observations: &[(Policy, f64)]) -> Result<[ProfileGrid; 3]> {
    if observations.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut grids = AxisPair::ALL.map(ProfileGrid::new);
    for (policy, performance) in observations {
        for grid in &mut grids {
            grid.insert(&policy.chi(), *performance);
        }
    }
    Ok(grids)
}

/// Profiles of the prior mean sampled at the `BINS³` bin centres.
pub fn compute_prior_profile(prior: &PriorSpec) -> Result<[ProfileGrid; 3]> {
    let mean = prior.mean_fn()?;
    let mut samples = Vec::with_capacity(BINS * BINS * BINS);
    for i in 0..BINS {
        for j in 0..BINS {
            for k in 0..BINS {
                let chi = [bin_center(i), bin_center(j), bin_center(k)];
                samples.push((Policy::new(chi)?, mean(&chi)));
            }
        }
    }
    compute_profiles(&samples)
}
