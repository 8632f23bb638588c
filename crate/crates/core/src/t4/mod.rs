//! A closed elliptic curve of 3x3 matrices without rank-one connections that
//! nevertheless contains a T4 configuration, with numerical verification of
//! every hypothesis and a laminate demonstration of non-compactness.

pub mod laminate;
pub mod rho;

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Mat3;
use crate::optim::golden_section_min;
pub use rho::{RhoAudit, RhoFunction};

/// Tolerance for the excluded-lattice check on `theta_a`.
const LATTICE_TOL: f64 = 1e-9;

/// The four matrices `T_k`, the auxiliary `C_k`, and the derived constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct T4Config {
    pub a: f64,
    pub mu: f64,
    pub theta_a: f64,
    pub r_a: f64,
    pub t: [Mat3; 4],
    pub c: [Mat3; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigAudit {
    /// Largest `sigma_2(T_k - C_k)`.
    pub rank_one_defect: f64,
    /// Largest entry of `T_k - mu (T_k - C_k) - C_{k+1}`.
    pub chain_defect: f64,
    /// Largest entry of `T_1 + T_3`, `T_2 + T_4`, `C_1 + C_3`, `C_2 + C_4`.
    pub symmetry_defect: f64,
    /// Rank-one directions `n_k` with `T_k - C_k = b_k (x) n_k`.
    pub normals: [[f64; 3]; 4],
}

fn column_pattern(x: f64, y: f64) -> [[f64; 3]; 3] {
    // rows (x, 0, 0), (0, y, 0), (x, 0, 0)
    [[x, 0.0, 0.0], [0.0, y, 0.0], [x, 0.0, 0.0]]
}

/// Index of the next matrix in the cyclic chain.
pub fn next(k: usize) -> usize {
    (k + 1) % 4
}

impl T4Config {
    pub fn new(a: f64) -> Result<T4Config> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidArgument(format!("a must be positive, got {a}")));
        }
        let theta_a = (1.0 / (1.0 + a)).atan();
        let d = rho::dist_to_lattice(theta_a, PI / 48.0);
        if d <= LATTICE_TOL {
            return Err(Error::ParameterExcluded(format!("theta_a = {theta_a} is within {d:.1e} of (pi/48) Z")));
        }
        let t1 = Mat3::new(column_pattern(1.0 + a, 1.0));
        let t2 = Mat3::new(column_pattern(-1.0, 1.0 + a));
        let c1 = Mat3::new(column_pattern(1.0, 1.0));
        let c2 = Mat3::new(column_pattern(-1.0, 1.0));
        Ok(T4Config {
            a,
            mu: (2.0 + a) / a,
            theta_a,
            r_a: (1.0 + (1.0 + a).powi(2)).sqrt(),
            t: [t1, t2, -t1, -t2],
            c: [c1, c2, -c1, -c2],
        })
    }

    /// Anchor parameters `theta_a + k pi/2` with `Gamma(anchor_k) = T_k`.
    pub fn anchor(&self, k: usize) -> f64 {
        self.theta_a + k as f64 * 0.5 * PI
    }

    pub fn audit(&self) -> ConfigAudit {
        let mut rank_one_defect = 0.0f64;
        let mut chain_defect = 0.0f64;
        let mut normals = [[0.0; 3]; 4];
        for k in 0..4 {
            let d = self.t[k] - self.c[k];
            rank_one_defect = rank_one_defect.max(d.sigma2());
            chain_defect = chain_defect.max((self.t[k] - d * self.mu - self.c[next(k)]).max_abs());
            // the nonzero column of the difference is its normal
            let col = (0..3).max_by(|&p, &q| {
                let np: f64 = (0..3).map(|i| d[(i, p)].abs()).sum();
                let nq: f64 = (0..3).map(|i| d[(i, q)].abs()).sum();
                np.total_cmp(&nq)
            });
            normals[k][col.unwrap_or(0)] = 1.0;
        }
        let symmetry_defect = [(self.t[0] + self.t[2]), (self.t[1] + self.t[3]), (self.c[0] + self.c[2]), (self.c[1] + self.c[3])]
            .iter()
            .map(Mat3::max_abs)
            .fold(0.0, f64::max);
        ConfigAudit { rank_one_defect, chain_defect, symmetry_defect, normals }
    }

    /// `min_{k != l} |T_k - T_l|^2`.
    pub fn min_pairwise_spread(&self) -> f64 {
        let mut m = f64::INFINITY;
        for k in 0..4 {
            for l in 0..k {
                m = m.min((self.t[k] - self.t[l]).frob_sq());
            }
        }
        m
    }
}

/// The curve `Gamma_a`, parametrized by `theta` with period `2 pi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pi3 {
    pub cfg: T4Config,
    pub rho: RhoFunction,
}

impl Pi3 {
    pub fn new(cfg: T4Config, eps: f64, seed: u64) -> Result<Pi3> {
        let rho = RhoFunction::build(cfg.theta_a, eps, seed)?;
        Ok(Pi3 { cfg, rho })
    }

    pub fn gamma(&self, th: f64) -> Mat3 {
        let (r, ta) = (self.cfg.r_a, self.cfg.theta_a);
        let p = self.rho.eval(th);
        let s8 = (8.0 * th - 8.0 * ta).sin();
        let s6 = (6.0 * th - 6.0 * ta).sin();
        let r6 = (6.0 * p - 6.0 * ta).sin();
        let r8 = (8.0 * p - 8.0 * ta).sin();
        Mat3::new([[r * th.cos(), -s8, r6], [s6, r * th.sin(), r8], [r * th.cos(), s8, r6]])
    }

    pub fn gamma_prime(&self, th: f64) -> Mat3 {
        let (r, ta) = (self.cfg.r_a, self.cfg.theta_a);
        let p = self.rho.eval(th);
        let dp = self.rho.deriv(th);
        let c8 = 8.0 * (8.0 * th - 8.0 * ta).cos();
        let c6 = 6.0 * (6.0 * th - 6.0 * ta).cos();
        let r6 = 6.0 * dp * (6.0 * p - 6.0 * ta).cos();
        let r8 = 8.0 * dp * (8.0 * p - 8.0 * ta).cos();
        Mat3::new([[-r * th.sin(), -c8, r6], [c6, r * th.cos(), r8], [-r * th.sin(), c8, r6]])
    }

    /// `M_{12,12}(Gamma') + M_{23,12}(Gamma') - 96 cos(8 theta - 8 theta_a) cos(6 theta - 6 theta_a)`.
    pub fn minor_identity_defect(&self, th: f64) -> f64 {
        let g = self.gamma_prime(th);
        let ta = self.cfg.theta_a;
        let lhs = g.minor((1, 2), (1, 2)).unwrap() + g.minor((2, 3), (1, 2)).unwrap();
        (lhs - 96.0 * (8.0 * th - 8.0 * ta).cos() * (6.0 * th - 6.0 * ta).cos()).abs()
    }

    fn grid(n: usize) -> impl IndexedParallelIterator<Item = f64> {
        (0..n).into_par_iter().map(move |i| i as f64 * TAU / n as f64)
    }

    /// Minimum of `sigma_2(Gamma')` over a uniform grid, refined around the
    /// grid minimizer.
    pub fn check_ellipticity(&self, n_grid: usize) -> Result<EllipticityReport> {
        if n_grid < 8 {
            return Err(Error::InvalidArgument("ellipticity scan needs at least 8 points".into()));
        }
        let vals: Vec<(f64, f64, f64)> =
            Self::grid(n_grid).map(|th| (self.gamma_prime(th).sigma2(), th, self.minor_identity_defect(th))).collect();
        let (mut min, mut theta) = (f64::INFINITY, 0.0);
        for &(s, th, _) in &vals {
            if s < min {
                min = s;
                theta = th;
            }
        }
        let identity_defect = vals.iter().map(|v| v.2).fold(0.0, f64::max);
        let h = TAU / n_grid as f64;
        let (t_ref, s_ref) = golden_section_min(|t| self.gamma_prime(t).sigma2(), theta - h, theta + h, 1e-12);
        if s_ref < min {
            min = s_ref;
            theta = t_ref.rem_euclid(TAU);
        }
        if min <= 1e-8 {
            return Err(Error::EllipticityFailed { theta, sigma2: min });
        }
        Ok(EllipticityReport { n_grid, min_sigma2: min, theta_min: theta, minor_identity_defect: identity_defect })
    }

    /// `sigma_2(Gamma(t1) - Gamma(t2)) / |Gamma(t1) - Gamma(t2)|`.
    pub fn pair_ratio(&self, t1: f64, t2: f64) -> f64 {
        let d = self.gamma(t1) - self.gamma(t2);
        let n = d.frob();
        if n == 0.0 {
            0.0
        } else {
            d.sigma2() / n
        }
    }

    pub fn tangent_ratio(&self, th: f64) -> f64 {
        let d = self.gamma_prime(th);
        d.sigma2() / d.frob()
    }

    /// Minimum of the normalized second singular value of `Gamma(t) - Gamma(t')`
    /// over grid pairs, with the near-diagonal band replaced by the tangent
    /// ratio, and coordinate-descent refinement around the ten smallest
    /// well-separated pairs.
    pub fn scan_rank_one(&self, n_grid: usize) -> Result<RankOneReport> {
        if n_grid < 16 {
            return Err(Error::InvalidArgument("rank-one scan needs at least 16 points".into()));
        }
        let h = TAU / n_grid as f64;
        let band = 4;
        let gam: Vec<Mat3> = Self::grid(n_grid).map(|t| self.gamma(t)).collect();
        let mut pairs: Vec<(f64, u32, u32)> = (0..n_grid)
            .into_par_iter()
            .flat_map_iter(|i| {
                let gam = &gam;
                (i + 1..n_grid).filter_map(move |j| {
                    let d = (j - i).min(n_grid - (j - i));
                    if d < band {
                        return None;
                    }
                    let m = gam[i] - gam[j];
                    Some((m.sigma2() / m.frob(), i as u32, j as u32))
                })
            })
            .collect();
        pairs.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));

        let diag: Vec<(f64, f64)> = Self::grid(n_grid).map(|t| (self.tangent_ratio(t), t)).collect();
        let (mut dmin, mut dth) = diag.iter().fold((f64::INFINITY, 0.0), |acc, &(r, t)| if r < acc.0 { (r, t) } else { acc });
        let (t_ref, r_ref) = golden_section_min(|t| self.tangent_ratio(t), dth - h, dth + h, 1e-12);
        if r_ref < dmin {
            dmin = r_ref;
            dth = t_ref.rem_euclid(TAU);
        }

        // ten smallest pairs that are not neighbours of one another
        let cyc = |a: u32, b: u32| {
            let d = a.abs_diff(b) as usize;
            d.min(n_grid - d)
        };
        let mut seeds: Vec<(f64, u32, u32)> = Vec::new();
        for p in &pairs {
            if seeds.iter().all(|s| cyc(s.1, p.1) > 3 || cyc(s.2, p.2) > 3) {
                seeds.push(*p);
                if seeds.len() == 10 {
                    break;
                }
            }
        }
        let refined: Vec<(f64, f64, f64)> = seeds
            .par_iter()
            .map(|&(r0, i, j)| {
                let (mut t1, mut t2) = (i as f64 * h, j as f64 * h);
                let mut r = r0;
                for _ in 0..12 {
                    let (a, ra) = golden_section_min(|t| self.pair_ratio(t, t2), t1 - h, t1 + h, 1e-13);
                    if ra < r {
                        t1 = a;
                        r = ra;
                    }
                    let (b, rb) = golden_section_min(|t| self.pair_ratio(t1, t), t2 - h, t2 + h, 1e-13);
                    if rb < r {
                        t2 = b;
                        r = rb;
                    }
                }
                (r, t1.rem_euclid(TAU), t2.rem_euclid(TAU))
            })
            .collect();
        let (mut min_ratio, mut w1, mut w2) = (f64::INFINITY, 0.0, 0.0);
        for &(r, a, b) in &refined {
            if r < min_ratio {
                min_ratio = r;
                w1 = a;
                w2 = b;
            }
        }
        let grid_min = pairs.first().map_or(f64::INFINITY, |p| p.0);
        let diagnostics = {
            let sample = &pairs[..pairs.len().min(100)];
            let sum_dist = |f: &dyn Fn(f64, f64) -> f64| sample.iter().map(|p| f(p.1 as f64 * h, p.2 as f64 * h)).fold(0.0, f64::max);
            PairDiagnostics {
                pairs: sample.len(),
                max_sum_to_pi_z: sum_dist(&|a, b| rho::dist_to_lattice(a + b, PI)),
                max_diff_to_thirds_or_quarters: sum_dist(&|a, b| {
                    rho::dist_to_lattice(a - b, PI / 3.0).min(rho::dist_to_lattice(a - b, PI / 4.0))
                }),
            }
        };
        let overall = min_ratio.min(dmin);
        if overall <= 1e-8 {
            let (t1, t2) = if dmin < min_ratio { (dth, dth) } else { (w1, w2) };
            return Err(Error::RankOneFound { t1, t2, ratio: overall });
        }
        Ok(RankOneReport {
            n_grid,
            grid_min,
            min_ratio,
            witness: [w1, w2],
            tangent_min_ratio: dmin,
            tangent_witness: dth,
            diagnostics,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub n_grid: usize,
    pub min_sigma2: f64,
    pub theta_min: f64,
    pub minor_identity_defect: f64,
}

/// Among the smallest-ratio grid pairs, how far `theta + theta'` is from
/// `pi Z` and `theta - theta'` from `(pi/3) Z` or `(pi/4) Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub pairs: usize,
    pub max_sum_to_pi_z: f64,
    pub max_diff_to_thirds_or_quarters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankOneReport {
    pub n_grid: usize,
    pub grid_min: f64,
    /// Refined minimum over separated pairs.
    pub min_ratio: f64,
    pub witness: [f64; 2],
    pub tangent_min_ratio: f64,
    pub tangent_witness: f64,
    pub diagnostics: PairDiagnostics,
}

impl RankOneReport {
    pub fn overall(&self) -> f64 {
        self.min_ratio.min(self.tangent_min_ratio)
    }
}

/// Everything checked about one instance of the construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub a: f64,
    pub eps: f64,
    pub seed: u64,
    pub mu: f64,
    pub theta_a: f64,
    pub r_a: f64,
    pub config: ConfigAudit,
    pub anchor_defect: f64,
    pub rho: RhoAudit,
    pub rho_eta: f64,
    pub rho_delta: f64,
    pub ellipticity: EllipticityReport,
    pub rank_one: RankOneReport,
}

/// Builds the curve and runs every scan.
pub fn verify(a: f64, eps: f64, seed: u64, n_ellipticity: usize, n_pairs: usize) -> Result<(Pi3, VerificationReport)> {
    let cfg = T4Config::new(a)?;
    let pi3 = Pi3::new(cfg.clone(), eps, seed)?;
    let anchor_defect = (0..4).map(|k| (pi3.gamma(cfg.anchor(k)) - cfg.t[k]).max_abs()).fold(0.0, f64::max);
    let ellipticity = pi3.check_ellipticity(n_ellipticity)?;
    let rank_one = pi3.scan_rank_one(n_pairs)?;
    let report = VerificationReport {
        a,
        eps,
        seed,
        mu: cfg.mu,
        theta_a: cfg.theta_a,
        r_a: cfg.r_a,
        config: cfg.audit(),
        anchor_defect,
        rho: pi3.rho.audit(cfg.theta_a, 100_000),
        rho_eta: pi3.rho.eta,
        rho_delta: pi3.rho.delta,
        ellipticity,
        rank_one,
    };
    Ok((pi3, report))
}
