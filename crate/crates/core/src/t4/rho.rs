//! The reparametrization `rho(theta) = theta + sum_j t_j phi(theta - j pi/24)`
//! that breaks the residual rank-one candidates of the 3x3 curve.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_section_min;

pub const BUMPS: usize = 47;
pub const CANDIDATES: usize = 1001;
pub const STEP: f64 = PI / 24.0;
const LATTICE: f64 = PI / 12.0;
const MIN_MARGIN: f64 = 1e-6;

/// Distance from `x` to the lattice `p Z`.
pub fn dist_to_lattice(x: f64, p: f64) -> f64 {
    (x - p * (x / p).round()).abs()
}

/// `exp(1 - 1/(1 - (x/delta)^2))` on `|x| < delta`, zero outside.
pub fn bump(x: f64, delta: f64) -> f64 {
    let s = x / delta;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

pub fn bump_prime(x: f64, delta: f64) -> f64 {
    let s = x / delta;
    if s.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - s * s;
        bump(x, delta) * (-2.0 * s / (d * d)) / delta
    }
}

/// `max |phi'|` located by golden-section search on `(0, delta)`.
pub fn bump_slope_max(delta: f64) -> f64 {
    let (_, v) = golden_section_min(|x| -bump_prime(x, delta).abs(), 0.0, delta, 1e-12 * delta);
    -v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoFunction {
    pub delta: f64,
    pub eta: f64,
    pub eps: f64,
    pub seed: u64,
    /// `t[0] = 0`, then the 47 bump heights.
    pub t: Vec<f64>,
    pub slope_max: f64,
}

/// Results of checking the defining properties on a dense grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoAudit {
    pub grid_points: usize,
    pub periodicity_defect: f64,
    pub anchor_defect: f64,
    /// Smallest distance of `rho(theta) - rho(theta')` to `(pi/12) Z` over
    /// distinct `theta, theta'` in `(pi/24) Z` within one period.
    pub pair_margin: f64,
    pub sup_deviation: f64,
    pub min_slope: f64,
    pub periodic: bool,
    pub anchors_fixed: bool,
    pub pairs_excluded: bool,
    pub close_to_identity: bool,
    pub monotone: bool,
}

impl RhoAudit {
    pub fn passed(&self) -> bool {
        self.periodic && self.anchors_fixed && self.pairs_excluded && self.close_to_identity && self.monotone
    }
}

impl RhoFunction {
    /// Chooses the bump heights greedily, each maximizing its distance to
    /// the forbidden values among seed-jittered candidates in `(-eta, eta)`.
    pub fn build(theta_a: f64, eps: f64, seed: u64) -> Result<RhoFunction> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be positive, got {eps}")));
        }
        let delta = 0.5 * dist_to_lattice(theta_a, STEP);
        if delta <= 0.0 {
            return Err(Error::ParameterExcluded(format!("theta_a = {theta_a} lies on (pi/24) Z")));
        }
        let slope_max = bump_slope_max(delta);
        let eta = eps.min(0.5 * delta).min(0.5 / slope_max);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = vec![0.0];
        let width = 2.0 * eta / CANDIDATES as f64;
        for j in 1..=BUMPS {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for i in 0..CANDIDATES {
                let jitter: f64 = rng.gen_range(-0.45..0.45);
                let cand = -eta + (i as f64 + 0.5 + jitter) * width;
                let score = t
                    .iter()
                    .enumerate()
                    .map(|(l, tl)| dist_to_lattice(cand - tl + (j - l) as f64 * STEP, LATTICE))
                    .fold(f64::INFINITY, f64::min);
                if score > best.0 {
                    best = (score, cand);
                }
            }
            t.push(best.1);
        }
        let rho = RhoFunction { delta, eta, eps, seed, t, slope_max };
        let margin = rho.pair_margin();
        if margin < MIN_MARGIN {
            return Err(Error::RhoConstructionFailed { margin });
        }
        Ok(rho)
    }

    fn local(&self, theta: f64) -> (f64, f64, Option<(usize, f64)>) {
        let turns = (theta / TAU).floor();
        let x = theta - turns * TAU;
        let j = (x / STEP).round() as usize;
        let bump = (1..=BUMPS).contains(&j).then_some((j, x - j as f64 * STEP)).filter(|(_, off)| off.abs() < self.delta);
        (turns, x, bump)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let (turns, x, b) = self.local(theta);
        let bumped = b.map_or(0.0, |(j, off)| self.t[j] * bump(off, self.delta));
        x + bumped + turns * TAU
    }

    pub fn deriv(&self, theta: f64) -> f64 {
        let (_, _, b) = self.local(theta);
        1.0 + b.map_or(0.0, |(j, off)| self.t[j] * bump_prime(off, self.delta))
    }

    pub fn pair_margin(&self) -> f64 {
        let vals: Vec<f64> = (0..=BUMPS).map(|j| self.eval(j as f64 * STEP)).collect();
        let mut m = f64::INFINITY;
        for j in 0..vals.len() {
            for l in 0..j {
                m = m.min(dist_to_lattice(vals[j] - vals[l], LATTICE));
            }
        }
        m
    }

    pub fn audit(&self, theta_a: f64, grid_points: usize) -> RhoAudit {
        let mut periodicity_defect = 0.0f64;
        let mut sup_deviation = 0.0f64;
        let mut min_slope = f64::INFINITY;
        for i in 0..grid_points {
            let th = i as f64 * TAU / grid_points as f64;
            let r = self.eval(th);
            periodicity_defect = periodicity_defect.max((self.eval(th + TAU) - r - TAU).abs());
            sup_deviation = sup_deviation.max((r - th).abs());
            min_slope = min_slope.min(self.deriv(th));
        }
        // the steepest points of each bump, which a uniform grid can miss
        let x_star = golden_section_min(|x| -bump_prime(x, self.delta).abs(), 0.0, self.delta, 1e-12 * self.delta).0;
        for j in 1..=BUMPS {
            for s in [-1.0, 1.0] {
                min_slope = min_slope.min(self.deriv(j as f64 * STEP + s * x_star));
            }
        }
        let anchor_defect = (0..4)
            .map(|k| {
                let th = theta_a + k as f64 * 0.5 * PI;
                (self.eval(th) - th).abs()
            })
            .fold(0.0, f64::max);
        let pair_margin = self.pair_margin();
        RhoAudit {
            grid_points,
            periodicity_defect,
            anchor_defect,
            pair_margin,
            sup_deviation,
            min_slope,
            periodic: periodicity_defect <= 1e-12,
            anchors_fixed: anchor_defect == 0.0,
            pairs_excluded: pair_margin > 0.0,
            close_to_identity: sup_deviation < self.eps,
            monotone: min_slope >= 0.5,
        }
    }
}
