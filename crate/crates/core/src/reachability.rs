//! Exploring the four-crystal channel family: grid sweeps over the wave-plate
//! angles, voxel coverage of the tetrahedron, the dephasing locus and the
//! angle search for a target channel.

use std::collections::HashSet;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{DVector, canonical_fidelity, is_complete_positive};
use crate::crystal::{WavePlateAngles, analytic_d, four_crystal_channel};
use crate::error::{Error, Result};
use crate::optim::{NelderMeadOptions, nelder_mead};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub grid_points_per_angle: usize,
    /// Half-open range `[lo, hi)` in degrees sampled for every plate.
    pub angle_range: [f64; 2],
    pub symmetry_extension: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid_points_per_angle: 50,
            angle_range: [0.0, 180.0],
            symmetry_extension: false,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points_per_angle < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid_points_per_angle must be at least 2, got {}",
                self.grid_points_per_angle
            )));
        }
        let [lo, hi] = self.angle_range;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidArgument(format!("invalid angle range [{lo}, {hi})")));
        }
        Ok(())
    }

    /// Grid values for one plate.
    pub fn grid(&self) -> Vec<f64> {
        let [lo, hi] = self.angle_range;
        let n = self.grid_points_per_angle;
        (0..n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudMetadata {
    pub config: SweepConfig,
    /// Seconds since the Unix epoch when the sweep ran.
    pub timestamp: u64,
    pub seed: u64,
    pub raw_points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReachabilityCloud {
    pub points: Vec<DVector>,
    pub metadata: CloudMetadata,
}

/// The 12 images of `d` under cyclic permutations and two-sign flips.
pub fn symmetry_orbit(d: &DVector) -> [DVector; 12] {
    let [a, b, c] = d.to_array();
    let cycles = [[a, b, c], [b, c, a], [c, a, b]];
    let flips = [[1.0, 1.0, 1.0], [-1.0, -1.0, 1.0], [-1.0, 1.0, -1.0], [1.0, -1.0, -1.0]];
    let mut out = [DVector::new(0.0, 0.0, 0.0); 12];
    for (i, v) in cycles.iter().enumerate() {
        for (j, s) in flips.iter().enumerate() {
            out[4 * i + j] = DVector::new(v[0] * s[0], v[1] * s[1], v[2] * s[2]);
        }
    }
    out
}

/// Evaluates the closed-form D vector on the full angle grid, in
/// `(θ1, θ2, θ3)` row-major order.
pub fn sweep(config: &SweepConfig, seed: u64) -> Result<ReachabilityCloud> {
    config.validate()?;
    let grid = config.grid();
    let n = grid.len();
    let raw: Vec<DVector> = (0..n * n * n)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (n * n), (idx / n) % n, idx % n);
            analytic_d(&WavePlateAngles::new(grid[i], grid[j], grid[k]))
        })
        .collect();
    let raw_points = raw.len();
    let points = if config.symmetry_extension {
        raw.iter().flat_map(symmetry_orbit).collect()
    } else {
        raw
    };
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(ReachabilityCloud {
        points,
        metadata: CloudMetadata { config: *config, timestamp, seed, raw_points },
    })
}

/// Default voxel resolution for [`coverage_fraction`].
pub const DEFAULT_COVERAGE_RESOLUTION: usize = 20;

fn voxel_index(v: f64, resolution: usize) -> usize {
    let x = ((v + 1.0) * 0.5 * resolution as f64).floor();
    (x.max(0.0) as usize).min(resolution - 1)
}

/// Fraction of the voxels of `[−1, 1]³` whose centers lie in the tetrahedron
/// that contain at least one cloud point.
pub fn coverage_fraction(cloud: &ReachabilityCloud, resolution: usize) -> Result<f64> {
    if cloud.points.is_empty() {
        return Err(Error::InvalidArgument("cloud is empty".into()));
    }
    if resolution == 0 {
        return Err(Error::InvalidArgument("resolution must be positive".into()));
    }
    let center = |i: usize| -1.0 + (2.0 * i as f64 + 1.0) / resolution as f64;
    let inside = |i: usize, j: usize, k: usize| DVector::new(center(i), center(j), center(k)).is_complete_positive();
    let occupied: HashSet<(usize, usize, usize)> = cloud
        .points
        .iter()
        .map(|p| (voxel_index(p.d1, resolution), voxel_index(p.d2, resolution), voxel_index(p.d3, resolution)))
        .filter(|&(i, j, k)| inside(i, j, k))
        .collect();
    let mut total = 0usize;
    for i in 0..resolution {
        for j in 0..resolution {
            for k in 0..resolution {
                if inside(i, j, k) {
                    total += 1;
                }
            }
        }
    }
    Ok(occupied.len() as f64 / total as f64)
}

/// `(θ1, 2θ1, θ1)`, defined for `0 ≤ θ1 ≤ 45°`.
pub fn dephasing_locus_angles(theta1_deg: f64) -> Result<WavePlateAngles> {
    if !(0.0..=45.0).contains(&theta1_deg) {
        return Err(Error::OutOfRange(format!("theta1 {theta1_deg}° outside [0°, 45°]")));
    }
    Ok(WavePlateAngles::new(theta1_deg, 2.0 * theta1_deg, theta1_deg))
}

/// Dephasing probability along the locus,
/// `P = (−3cos⁴(4θ1) + 2cos²(4θ1) + 1)/2`.
pub fn p_of_theta1(theta1_deg: f64) -> f64 {
    let c2 = (4.0 * theta1_deg.to_radians()).cos().powi(2);
    0.5 * (-3.0 * c2 * c2 + 2.0 * c2 + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocusPoint {
    pub theta1: f64,
    pub angles: WavePlateAngles,
    /// [`p_of_theta1`] at this angle.
    pub p: f64,
    /// χ eigenvalues, descending.
    pub chi_eigenvalues: [f64; 4],
}

/// Simulated locus channels at `steps` evenly spaced angles in
/// `[0, theta1_max]`.
pub fn locus_scan(theta1_max_deg: f64, steps: usize) -> Result<Vec<LocusPoint>> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("steps must be at least 2, got {steps}")));
    }
    dephasing_locus_angles(theta1_max_deg)?;
    (0..steps)
        .into_par_iter()
        .map(|k| {
            let theta1 = theta1_max_deg * k as f64 / (steps - 1) as f64;
            let angles = dephasing_locus_angles(theta1)?;
            let chi = four_crystal_channel(&angles);
            Ok(LocusPoint { theta1, angles, p: p_of_theta1(theta1), chi_eigenvalues: chi.eigenvalues() })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetSolution {
    pub angles: WavePlateAngles,
    /// Closed-form D vector at `angles`.
    pub achieved: DVector,
    pub fidelity: f64,
}

pub const DEFAULT_RESTARTS: usize = 32;
const SEED_GRID: usize = 16;
const GRID_BEST_STARTS: usize = 4;

/// Multi-start Nelder-Mead over the three plate angles maximizing the
/// rotation-stripped process fidelity to `target`.
///
/// Starts are the four best points of a 16³ grid followed by random cells,
/// each jittered within its cell; restart `r` draws from stream `r` of
/// `seed`. Equal fidelities (within 1e-12) resolve to the lexicographically
/// smallest angles.
pub fn find_angles_for_target(target: &DVector, restarts: usize, seed: u64) -> Result<TargetSolution> {
    if !is_complete_positive(target) {
        return Err(Error::TargetNotCP);
    }
    if restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be positive".into()));
    }
    let objective = |x: &[f64]| 1.0 - canonical_fidelity(target, &analytic_d(&WavePlateAngles::new(x[0], x[1], x[2])));

    let cell = 180.0 / SEED_GRID as f64;
    let n = SEED_GRID;
    let point = |idx: usize| [(idx / (n * n)) as f64 * cell, ((idx / n) % n) as f64 * cell, (idx % n) as f64 * cell];
    let mut ranked: Vec<(usize, f64)> = (0..n.pow(3)).into_par_iter().map(|idx| (idx, objective(&point(idx)))).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let opts = NelderMeadOptions { initial_step: cell / 2.0, x_tol: 1e-9, f_tol: 1e-16, max_iter: 4000 };
    let results: Vec<(WavePlateAngles, f64)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            // The best grid points often sit in wide suboptimal basins, so only
            // the first few restarts use them; the rest draw random cells.
            let idx = if r < GRID_BEST_STARTS { ranked[r].0 } else { rng.random_range(0..n.pow(3)) };
            let start: Vec<f64> = point(idx).iter().map(|b| b + rng.random_range(-0.5..0.5) * cell).collect();
            let m = nelder_mead(objective, &start, &opts);
            (WavePlateAngles::new(m.x[0], m.x[1], m.x[2]), 1.0 - m.value)
        })
        .collect();

    let best = results
        .iter()
        .copied()
        .reduce(|a, b| {
            if b.1 > a.1 + 1e-12 || ((b.1 - a.1).abs() <= 1e-12 && lex_less(&b.0, &a.0)) {
                b
            } else {
                a
            }
        })
        .expect("at least one restart");
    let achieved = analytic_d(&best.0);
    Ok(TargetSolution { angles: best.0, achieved, fidelity: canonical_fidelity(target, &achieved) })
}

fn lex_less(a: &WavePlateAngles, b: &WavePlateAngles) -> bool {
    a.degrees().partial_cmp(&b.degrees()) == Some(std::cmp::Ordering::Less)
}
