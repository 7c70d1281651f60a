//! Occupancy-grid clustering and Doppler torso extraction.
//!
//! Points are binned into a 2-D grid over the floor plane (height is ignored
//! on purpose: people are vertical, so x-y density is what separates them).
//! Clusters grow from the most populated cell outward:
//!
//! 1. Pick the fullest remaining cell; stop when even that holds fewer than
//!    `thre_starter` points.
//! 2. Flood-fill its 8-connected neighborhood, absorbing every non-empty
//!    cell reachable from the seed.
//! 3. Keep the absorbed group as a cluster iff it holds at least
//!    `thre_final` points, otherwise drop those points as noise.
//!
//! Each kept cluster is then split along the Doppler axis: points are sorted
//! by radial speed and cut wherever neighboring values differ by more than
//! `beta_gap`. The sub-group with the largest mean absolute Doppler is taken
//! as the torso (bulk translation dominates; limbs and stray returns land in
//! other sub-groups), and its unweighted centroid is the per-person
//! measurement handed to the tracker.
//!
//! Ties are broken deterministically everywhere (lowest cell index for equal
//! populations; larger sub-group, then lower mean height for equal Doppler
//! magnitude), so identical input always yields identical clusters.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use nalgebra::Vector3;

use crate::frame::RadarPoint;

/// Tuning for grid clustering and torso extraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Grid cell edge length in meters.
    pub cell_size: f64,
    /// Minimum seed-cell population to start a cluster.
    pub thre_starter: usize,
    /// Minimum total points for a cluster to survive.
    pub thre_final: usize,
    /// Weight of the height term in point similarity. Kept at zero: height
    /// spreads a standing person over many values and would break x-y
    /// density clustering.
    pub alpha: f64,
    /// Doppler split threshold in m/s for torso extraction.
    pub beta_gap: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            cell_size: 0.25,
            thre_starter: 5,
            thre_final: 15,
            alpha: 0.0,
            beta_gap: 0.5,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return Err(crate::FadeError::Config("cell_size must be positive".into()));
        }
        if self.thre_starter == 0 || self.thre_final == 0 {
            return Err(crate::FadeError::Config(
                "cluster thresholds must be at least 1".into(),
            ));
        }
        if !(self.beta_gap.is_finite() && self.beta_gap > 0.0) {
            return Err(crate::FadeError::Config("beta_gap must be positive".into()));
        }
        Ok(())
    }
}

/// Sparse 2-D occupancy grid mapping cell index to the points inside it.
#[derive(Debug, Clone)]
pub struct GridMap {
    cell_size: f64,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl GridMap {
    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            (x / self.cell_size).floor() as i64,
            (y / self.cell_size).floor() as i64,
        )
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn points_in(&self, cell: (i64, i64)) -> &[usize] {
        self.cells.get(&cell).map_or(&[], Vec::as_slice)
    }
}

/// Bin `points` (world coordinates) into a floor-plane grid.
pub fn build_grid(points: &[RadarPoint], cell_size: f64) -> GridMap {
    let mut grid = GridMap { cell_size, cells: HashMap::new() };
    for (i, p) in points.iter().enumerate() {
        let cell = grid.cell_of(p.x, p.y);
        grid.cells.entry(cell).or_default().push(i);
    }
    grid
}

/// Grow clusters from dense seed cells; returns groups of point indices in
/// decreasing seed-population order, each sorted ascending.
pub fn grid_cluster(grid: &GridMap, cfg: &ClusterConfig) -> Vec<Vec<usize>> {
    let mut cells = grid.cells.clone();
    let mut clusters = Vec::new();
    loop {
        // Fullest remaining cell; lowest (i, j) on ties for determinism.
        let Some((&seed, _)) = cells
            .iter()
            .max_by(|(ka, va), (kb, vb)| {
                va.len().cmp(&vb.len()).then_with(|| kb.cmp(ka))
            })
        else {
            break;
        };
        if cells[&seed].len() < cfg.thre_starter {
            break;
        }
        // Absorb the whole 8-connected component of non-empty cells.
        let mut member_points = Vec::new();
        let mut stack = vec![seed];
        while let Some(cell) = stack.pop() {
            let Some(points) = cells.remove(&cell) else { continue };
            member_points.extend(points);
            for di in -1..=1i64 {
                for dj in -1..=1i64 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let n = (cell.0 + di, cell.1 + dj);
                    if cells.contains_key(&n) {
                        stack.push(n);
                    }
                }
            }
        }
        if member_points.len() >= cfg.thre_final {
            member_points.sort_unstable();
            clusters.push(member_points);
        }
    }
    clusters
}

/// A detected person candidate: its grid cluster, the torso subset and the
/// torso centroid used as the tracking measurement.
#[derive(Debug, Clone)]
pub struct Cluster {
    /// Indices into the frame's point array, sorted ascending.
    pub points: Vec<usize>,
    /// Subset of `points` selected as torso, sorted ascending.
    pub torso: Vec<usize>,
    /// Unweighted mean position of the torso points.
    pub centroid: Vector3<f64>,
    /// Mean radial speed of the torso points.
    pub mean_doppler: f64,
}

/// Split a cluster along the Doppler axis and pick the torso sub-group.
pub fn torso_extract(points: &[RadarPoint], member: &[usize], cfg: &ClusterConfig) -> Cluster {
    assert!(!member.is_empty(), "cannot extract a torso from an empty cluster");
    let mut order: Vec<usize> = member.to_vec();
    order.sort_unstable_by(|&a, &b| {
        points[a]
            .doppler
            .partial_cmp(&points[b].doppler)
            .unwrap()
            .then(a.cmp(&b))
    });

    // Cut the sorted sequence at Doppler gaps wider than beta_gap.
    let mut groups: Vec<Vec<usize>> = vec![vec![order[0]]];
    for win in order.windows(2) {
        let (prev, cur) = (win[0], win[1]);
        if points[cur].doppler - points[prev].doppler > cfg.beta_gap {
            groups.push(Vec::new());
        }
        groups.last_mut().unwrap().push(cur);
    }

    let score = |g: &[usize]| {
        let n = g.len() as f64;
        let mean_abs = g.iter().map(|&i| points[i].doppler).sum::<f64>().abs() / n;
        let mean_z = g.iter().map(|&i| points[i].z).sum::<f64>() / n;
        (mean_abs, g.len(), mean_z)
    };
    let torso_group = groups
        .iter()
        .max_by(|a, b| {
            let (da, na, za) = score(a);
            let (db, nb, zb) = score(b);
            da.partial_cmp(&db)
                .unwrap()
                .then(na.cmp(&nb))
                // Lower mean height wins the final tie.
                .then(zb.partial_cmp(&za).unwrap())
        })
        .unwrap();

    let mut torso = torso_group.clone();
    torso.sort_unstable();
    let n = torso.len() as f64;
    let centroid = torso
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i].position())
        / n;
    let mean_doppler = torso.iter().map(|&i| points[i].doppler).sum::<f64>() / n;
    let mut members = member.to_vec();
    members.sort_unstable();
    Cluster { points: members, torso, centroid, mean_doppler }
}

/// Full per-frame clustering: grid, flood fill, torso extraction.
pub fn cluster_frame(points: &[RadarPoint], cfg: &ClusterConfig) -> Vec<Cluster> {
    let grid = build_grid(points, cfg.cell_size);
    grid_cluster(&grid, cfg)
        .iter()
        .map(|member| torso_extract(points, member, cfg))
        .collect()
}
