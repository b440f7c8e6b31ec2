//! Coarse-to-fine grid maximization over an axis-aligned box.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CartesianPosition;

/// Search box plus grid schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchVolume {
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Coarse grid spacing per axis, meters.
    pub step: [f64; 3],
    pub levels: usize,
    pub shrink: f64,
    /// Coarse local maxima refined independently; the best result wins.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
}

/// Coarse local maxima refined by default.
pub const DEFAULT_CANDIDATES: usize = 8;

fn default_candidates() -> usize {
    DEFAULT_CANDIDATES
}

impl SearchVolume {
    pub fn new(min: [f64; 3], max: [f64; 3], step: [f64; 3], levels: usize, shrink: f64) -> Result<Self> {
        let vol = Self {
            min,
            max,
            step,
            levels,
            shrink,
            candidates: DEFAULT_CANDIDATES,
        };
        vol.validate()?;
        Ok(vol)
    }

    /// `points` grid nodes per axis spanning the box edge to edge.
    pub fn with_points(min: [f64; 3], max: [f64; 3], points: usize, levels: usize, shrink: f64) -> Result<Self> {
        if points < 2 {
            return Err(Error::InvalidArgument("need at least 2 grid points per axis".into()));
        }
        let step = [0, 1, 2].map(|i| (max[i] - min[i]) / (points - 1) as f64);
        Self::new(min, max, step, levels, shrink)
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if !(self.min[i] < self.max[i]) {
                return Err(Error::InvalidArgument(format!("axis {i}: min must be < max")));
            }
            if !(self.step[i] > 0.0 && self.step[i].is_finite()) {
                return Err(Error::InvalidArgument(format!("axis {i}: step must be > 0")));
            }
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidArgument("shrink factor must lie in (0, 1)".into()));
        }
        if self.candidates == 0 {
            return Err(Error::InvalidArgument("need at least one refinement candidate".into()));
        }
        Ok(())
    }

    fn coarse_counts(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| ((self.max[i] - self.min[i]) / self.step[i] + 1e-9).floor() as usize + 1)
    }

    pub fn contains(&self, p: &CartesianPosition) -> bool {
        let a = p.to_array();
        (0..3).all(|i| a[i] >= self.min[i] && a[i] <= self.max[i])
    }

    pub fn with_candidates(self, candidates: usize) -> Result<Self> {
        let vol = Self { candidates, ..self };
        vol.validate()?;
        Ok(vol)
    }

    /// Grid spacing after all refinement levels.
    pub fn final_step(&self) -> [f64; 3] {
        self.step.map(|s| s * self.shrink.powi(self.levels as i32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptimum {
    pub position: CartesianPosition,
    pub value: f64,
    pub evaluations: usize,
}

/// Axis-aligned lattice of nodes `anchor + (first + j) * step`, `j` in
/// `0..count`. Refined lattices anchor on the incumbent so it is reproduced
/// bit for bit.
struct Lattice {
    anchor: [f64; 3],
    first: [isize; 3],
    step: [f64; 3],
    count: [usize; 3],
}

impl Lattice {
    fn len(&self) -> usize {
        self.count.iter().product()
    }

    fn indices(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.count[2];
        let j = (idx / self.count[2]) % self.count[1];
        let i = idx / (self.count[1] * self.count[2]);
        [i, j, k]
    }

    fn on_open_edge(&self, idx: usize, open: &[[bool; 2]; 3]) -> bool {
        let n = self.indices(idx);
        (0..3).any(|a| (open[a][0] && n[a] == 0) || (open[a][1] && n[a] + 1 == self.count[a]))
    }

    fn point(&self, idx: usize) -> CartesianPosition {
        let [i, j, k] = self.indices(idx);
        let at = |a: usize, n: usize| self.anchor[a] + (self.first[a] + n as isize) as f64 * self.step[a];
        CartesianPosition::new(at(0, i), at(1, j), at(2, k))
    }
}

/// Returns the best (index, value); NaN never wins and ties keep the
/// lowest index.
fn best_of(values: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best
}

fn evaluate<F>(objective: &F, lattice: &Lattice) -> Vec<f64>
where
    F: Fn(&CartesianPosition) -> f64 + Sync,
{
    (0..lattice.len())
        .into_par_iter()
        .map(|i| objective(&lattice.point(i)))
        .collect()
}

/// Extra passes allowed per level when the incumbent lands on the edge of
/// its window.
pub const MAX_RECENTER: usize = 8;

/// Window of `2 half + 1` nodes per axis centred on `centre`, clipped to
/// the volume. Also reports, per axis, whether the low and high edges are
/// window edges rather than volume walls.
fn window(centre: &CartesianPosition, step: [f64; 3], half: [usize; 3], vol: &SearchVolume) -> (Lattice, [[bool; 2]; 3]) {
    let centre = centre.to_array();
    let mut first = [0isize; 3];
    let mut count = [0usize; 3];
    let mut open = [[false; 2]; 3];
    for a in 0..3 {
        let below = (0..=half[a])
            .rev()
            .find(|&j| centre[a] - j as f64 * step[a] >= vol.min[a] - 1e-9 * step[a])
            .unwrap_or(0);
        let above = (0..=half[a])
            .rev()
            .find(|&j| centre[a] + j as f64 * step[a] <= vol.max[a] + 1e-9 * step[a])
            .unwrap_or(0);
        first[a] = -(below as isize);
        count[a] = below + above + 1;
        open[a] = [below == half[a] && half[a] > 0, above == half[a] && half[a] > 0];
    }
    (
        Lattice {
            anchor: centre,
            first,
            step,
            count,
        },
        open,
    )
}

/// Nodes not beaten by any of their up to 26 lattice neighbours, best
/// first, at most `limit` of them. NaN nodes are skipped and ties keep the
/// lower index.
fn local_maxima(values: &[f64], lattice: &Lattice, limit: usize) -> Vec<usize> {
    let c = lattice.count;
    let mut peaks: Vec<usize> = (0..values.len())
        .filter(|&i| {
            let v = values[i];
            if v.is_nan() {
                return false;
            }
            let n = lattice.indices(i);
            let range = |a: usize| n[a].saturating_sub(1)..=(n[a] + 1).min(c[a] - 1);
            range(0).all(|x| {
                range(1).all(|y| {
                    range(2).all(|z| {
                        let j = (x * c[1] + y) * c[2] + z;
                        j == i || !(values[j] > v || (values[j] == v && j < i))
                    })
                })
            })
        })
        .collect();
    peaks.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    peaks.truncate(limit);
    peaks
}

/// Nodes per side of a refined window: enough to span one previous cell
/// plus a margin, never more than the coarse grid.
fn window_half(vol: &SearchVolume, counts: [usize; 3]) -> [usize; 3] {
    let span = (1.0 / vol.shrink).ceil() as usize + 1;
    counts.map(|c| span.min((c - 1) / 2).max(1))
}

/// Coarse-to-fine refinement from one starting node.
fn refine<F>(
    objective: &F,
    vol: &SearchVolume,
    half: [usize; 3],
    mut incumbent: CartesianPosition,
    mut value: f64,
) -> (CartesianPosition, f64, usize)
where
    F: Fn(&CartesianPosition) -> f64 + Sync,
{
    let mut evaluations = 0;
    let mut step = vol.step;
    for _ in 0..vol.levels {
        step = step.map(|s| s * vol.shrink);
        for _ in 0..=MAX_RECENTER {
            let (lattice, open_edges) = window(&incumbent, step, half, vol);
            let values = evaluate(objective, &lattice);
            evaluations += values.len();
            let Some((i, v)) = best_of(&values) else { break };
            if v <= value {
                break;
            }
            value = v;
            incumbent = lattice.point(i);
            if !lattice.on_open_edge(i, &open_edges) {
                break;
            }
        }
    }
    (incumbent, value, evaluations)
}

/// Maximizes `objective` over the coarse grid, then refines the best
/// `candidates` coarse local maxima. Each refinement level re-grids a window
/// `shrink` times finer around the incumbent, repeating the level around
/// the new incumbent while it improves and sits on the edge of its window,
/// at most [`MAX_RECENTER`] extra times.
///
/// Points of a refined grid falling outside the volume are skipped. The
/// incumbent is always a node of the refined grid, so refinement never
/// loses ground. Ties between candidates go to the better coarse node.
pub fn grid_search<F>(objective: F, vol: &SearchVolume) -> Result<GridOptimum>
where
    F: Fn(&CartesianPosition) -> f64 + Sync,
{
    vol.validate()?;
    let counts = vol.coarse_counts();
    let coarse = Lattice {
        anchor: vol.min,
        first: [0; 3],
        step: vol.step,
        count: counts,
    };
    let values = evaluate(&objective, &coarse);
    let mut evaluations = values.len();
    let peaks = local_maxima(&values, &coarse, vol.candidates);
    if peaks.is_empty() {
        return Err(Error::Degenerate("objective is NaN on the whole grid".into()));
    }
    let half = window_half(vol, counts);
    let mut best: Option<(CartesianPosition, f64)> = None;
    for idx in peaks {
        let (p, v, n) = refine(&objective, vol, half, coarse.point(idx), values[idx]);
        evaluations += n;
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((p, v));
        }
    }
    let (position, value) = best.expect("at least one candidate");
    Ok(GridOptimum {
        position,
        value,
        evaluations,
    })
}
