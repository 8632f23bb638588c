//! Staircase laminates along the T4 chain and their realization by
//! piecewise-affine stripe maps.
//!
//! A map `u: [0,1]^2 -> R^3` is treated as a map of three variables that does
//! not depend on `x_3`, so its gradient is a 3x3 matrix with a zero third
//! column, matching the `T_k` and `C_k`.

use std::f64::consts::TAU;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{next, Pi3, T4Config};
use crate::error::{Error, Result};
use crate::matrix::Mat3;
use crate::optim::{golden_section_min, CompensatedSum};

/// Gradient distribution as weighted atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaminateMeasure {
    pub atoms: Vec<(Mat3, f64)>,
}

impl LaminateMeasure {
    pub fn total_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).collect::<CompensatedSum>().value()
    }

    pub fn barycenter(&self) -> Mat3 {
        let mut out = Mat3::ZERO;
        for i in 0..3 {
            for j in 0..3 {
                out[(i, j)] = self.atoms.iter().map(|(m, w)| w * m[(i, j)]).collect::<CompensatedSum>().value();
            }
        }
        out
    }
}

/// Staircase measure after `steps` splits. Atom 0..steps are `T_1, T_2, ...`
/// (indices mod 4) and the last atom is the residual `C`.
pub fn staircase_laminate(cfg: &T4Config, steps: usize) -> LaminateMeasure {
    let mut atoms = Vec::with_capacity(steps + 1);
    let (mut k, mut w) = (0, 1.0);
    for _ in 0..steps {
        atoms.push((cfg.t[k], w * (1.0 - 1.0 / cfg.mu)));
        w /= cfg.mu;
        k = next(k);
    }
    atoms.push((cfg.c[k], w));
    LaminateMeasure { atoms }
}

/// Writes a rank-one matrix with zero third column as `b (x) e_axis`.
fn rank_one_split(d: Mat3) -> Result<([f64; 3], usize)> {
    if d.sigma2() > 1e-10 * d.frob().max(1.0) {
        return Err(Error::InvalidArgument(format!("difference is not rank one (sigma_2 = {:.3e})", d.sigma2())));
    }
    let col_norm = |j: usize| (0..3).map(|i| d[(i, j)].powi(2)).sum::<f64>();
    let axis = if col_norm(0) >= col_norm(1) { 0 } else { 1 };
    let other = 1 - axis;
    if col_norm(2) > 1e-20 || col_norm(other) > 1e-20 * col_norm(axis).max(1.0) {
        return Err(Error::InvalidArgument("rank-one direction must be a coordinate axis of the plane".into()));
    }
    Ok(([d[(0, axis)], d[(1, axis)], d[(2, axis)]], axis))
}

/// One simple laminate between `a` and `b` on an axis-aligned rectangle,
/// cut off near the two sides parallel to the normal so that the map equals
/// the average affine map on the whole boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripeLaminate {
    pub a: Mat3,
    pub b: Mat3,
    /// Volume fraction of the `a` phase.
    pub weight: f64,
    pub periods: usize,
    pub axis: usize,
    pub jump: [f64; 3],
    pub origin: [f64; 2],
    pub size: [f64; 2],
    /// Width of each cutoff band.
    pub band: f64,
}

impl StripeLaminate {
    pub fn new(a: Mat3, b: Mat3, weight: f64, periods: usize, origin: [f64; 2], size: [f64; 2], band: f64) -> Result<Self> {
        if !(weight > 0.0 && weight < 1.0) {
            return Err(Error::InvalidArgument(format!("weight must lie in (0,1), got {weight}")));
        }
        if periods == 0 {
            return Err(Error::InvalidArgument("at least one period is required".into()));
        }
        let (jump, axis) = rank_one_split(b - a)?;
        if !(band > 0.0 && 2.0 * band <= size[1 - axis]) {
            return Err(Error::InvalidArgument(format!("band {band} does not fit the rectangle")));
        }
        Ok(StripeLaminate { a, b, weight, periods, axis, jump, origin, size, band })
    }

    pub fn mean_gradient(&self) -> Mat3 {
        self.a * self.weight + self.b * (1.0 - self.weight)
    }

    pub fn period(&self) -> f64 {
        self.size[self.axis] / self.periods as f64
    }

    /// Stripe profile and its slope at normal coordinate `s`.
    fn profile(&self, s: f64) -> (f64, f64) {
        let p = self.period();
        let (wa, wb) = (self.weight, 1.0 - self.weight);
        let x = s.rem_euclid(p);
        if x < wa * p {
            (-wb * x, -wb)
        } else {
            (-wa * wb * p + wa * (x - wa * p), wa)
        }
    }

    /// Cutoff and its slope at transverse coordinate `s`.
    fn cutoff(&self, s: f64) -> (f64, f64) {
        let len = self.size[1 - self.axis];
        if s < self.band {
            (s / self.band, 1.0 / self.band)
        } else if s > len - self.band {
            ((len - s) / self.band, -1.0 / self.band)
        } else {
            (1.0, 0.0)
        }
    }

    fn local(&self, x: [f64; 2]) -> (f64, f64) {
        (x[self.axis] - self.origin[self.axis], x[1 - self.axis] - self.origin[1 - self.axis])
    }

    fn grad_local(&self, sn: f64, st: f64) -> Mat3 {
        let (s, ds) = self.profile(sn);
        let (psi, dpsi) = self.cutoff(st);
        let mut dir = [0.0; 3];
        dir[self.axis] = psi * ds;
        dir[1 - self.axis] = s * dpsi;
        self.mean_gradient() + Mat3::outer(self.jump, dir)
    }

    pub fn value(&self, x: [f64; 2]) -> [f64; 3] {
        let (sn, st) = self.local(x);
        let f = self.mean_gradient().apply([x[0], x[1], 0.0]);
        let amp = self.profile(sn).0 * self.cutoff(st).0;
        [f[0] + amp * self.jump[0], f[1] + amp * self.jump[1], f[2] + amp * self.jump[2]]
    }

    pub fn gradient(&self, x: [f64; 2]) -> Mat3 {
        let (sn, st) = self.local(x);
        self.grad_local(sn, st)
    }

    /// Fractions of `m x m` cell centres where the gradient equals `a` and `b`.
    pub fn phase_fractions(&self, m: usize) -> (f64, f64) {
        let (mut na, mut nb) = (0usize, 0usize);
        for j in 0..m {
            for i in 0..m {
                let x = [
                    self.origin[0] + (i as f64 + 0.5) / m as f64 * self.size[0],
                    self.origin[1] + (j as f64 + 0.5) / m as f64 * self.size[1],
                ];
                let g = self.gradient(x);
                if (g - self.a).max_abs() <= 1e-12 {
                    na += 1;
                } else if (g - self.b).max_abs() <= 1e-12 {
                    nb += 1;
                }
            }
        }
        let total = (m * m) as f64;
        (na as f64 / total, nb as f64 / total)
    }
}

/// Simple laminate of `a` (fraction `weight`) and `b` on the unit square with
/// `stripes` periods and cutoff bands of width `1/stripes`.
pub fn laminate_map(a: Mat3, b: Mat3, weight: f64, stripes: usize) -> Result<StripeLaminate> {
    if stripes < 3 {
        return Err(Error::InvalidArgument("at least three stripes are required".into()));
    }
    StripeLaminate::new(a, b, weight, stripes, [0.0, 0.0], [1.0, 1.0], 1.0 / stripes as f64)
}

/// Squared distance to the curve, by dense sampling plus golden refinement.
pub struct CurveDistance<'a> {
    pi3: &'a Pi3,
    samples: Vec<Mat3>,
}

impl<'a> CurveDistance<'a> {
    pub fn new(pi3: &'a Pi3, n: usize) -> Self {
        let samples = (0..n).map(|i| pi3.gamma(i as f64 * TAU / n as f64)).collect();
        CurveDistance { pi3, samples }
    }

    fn h(&self) -> f64 {
        TAU / self.samples.len() as f64
    }

    /// Minimizes `f(Gamma(theta))` over the samples, then refines.
    pub fn minimize(&self, f: impl Fn(&Mat3) -> f64) -> (f64, f64) {
        let (mut best, mut idx) = (f64::INFINITY, 0);
        for (i, m) in self.samples.iter().enumerate() {
            let v = f(m);
            if v < best {
                best = v;
                idx = i;
            }
        }
        let t0 = idx as f64 * self.h();
        let (t, v) = golden_section_min(|t| f(&self.pi3.gamma(t)), t0 - self.h(), t0 + self.h(), 1e-13);
        if v < best {
            (t.rem_euclid(TAU), v)
        } else {
            (t0, best)
        }
    }

    pub fn dist_sq(&self, m: &Mat3) -> f64 {
        self.minimize(|g| (*g - *m).frob_sq()).1
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    area: f64,
    dist2: f64,
    sum: Mat3,
    sq: f64,
}

impl Moments {
    fn constant(g: Mat3, area: f64, dist2: f64) -> Moments {
        Moments { area, dist2: dist2 * area, sum: g * area, sq: g.frob_sq() * area }
    }

    fn add(&mut self, o: &Moments, times: f64) {
        self.area += o.area * times;
        self.dist2 += o.dist2 * times;
        self.sum += o.sum * times;
        self.sq += o.sq * times;
    }
}

/// Tuning of the recursive construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemoOptions {
    /// Periods per unit of aspect ratio, `P = round(sigma * l_n / l_t)`.
    pub sigma: f64,
    /// Cutoff band width as a fraction of the transverse length.
    pub band_fraction: f64,
    pub gauss_points: usize,
    pub curve_samples: usize,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions { sigma: 1500.0, band_fraction: 0.02, gauss_points: 8, curve_samples: 4096 }
    }
}

/// One CSV row of the depth sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub depth: usize,
    pub eps_d: f64,
    pub m_d: f64,
    pub c_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthDetail {
    pub depth: usize,
    /// Area of the unsplit `C` core regions.
    pub c_area: f64,
    pub grad_sq_integral: f64,
    pub mean_gradient: Mat3,
    pub best_theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub rows: Vec<DemoRow>,
    pub details: Vec<DepthDetail>,
    pub m_floor: f64,
    pub options: DemoOptions,
}

impl DemoReport {
    /// `eps_d` never grows by more than `slack` (relative) from one depth to the next.
    pub fn eps_decreasing(&self, slack: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].eps_d <= w[0].eps_d * (1.0 + slack))
    }

    pub fn m_bounded_below(&self) -> bool {
        self.m_floor > 0.0 && self.rows.iter().all(|r| r.m_d >= self.m_floor)
    }
}

struct Builder<'a> {
    cfg: &'a T4Config,
    dist: CurveDistance<'a>,
    quad: Vec<(f64, f64)>,
    opts: DemoOptions,
    c_dist2: Vec<f64>,
    t_dist2: Vec<f64>,
}

impl Builder<'_> {
    /// Tensor Gauss rule over `[x0,x1] x [y0,y1]`.
    fn integrate(&self, x: [f64; 2], y: [f64; 2], f: impl Fn(f64, f64) -> Moments + Sync) -> Moments {
        let (hx, hy) = (0.5 * (x[1] - x[0]), 0.5 * (y[1] - y[0]));
        let parts: Vec<Moments> = self
            .quad
            .par_iter()
            .flat_map_iter(|&(u, wu)| {
                let f = &f;
                self.quad.iter().map(move |&(v, wv)| {
                    let mut m = f(x[0] + hx * (u + 1.0), y[0] + hy * (v + 1.0));
                    let w = wu * wv * hx * hy;
                    m.area *= w;
                    m.dist2 *= w;
                    m.sum = m.sum * w;
                    m.sq *= w;
                    m
                })
            })
            .collect();
        let mut out = Moments::default();
        for p in &parts {
            out.add(p, 1.0);
        }
        out
    }

    /// Moments of level `k` (0-based) laminating `C_k` on a rectangle of the
    /// given size; the `C_{k+1}` core slabs are laminated again until `depth`.
    fn level(&self, k: usize, depth: usize, size: [f64; 2]) -> Result<(Moments, f64)> {
        let (ti, ci) = (k % 4, next(k % 4));
        let axis = rank_one_split(self.cfg.c[ci] - self.cfg.t[ti])?.1;
        let (ln, lt) = (size[axis], size[1 - axis]);
        let periods = (self.opts.sigma * ln / lt).round().max(1.0) as usize;
        let band = self.opts.band_fraction * lt;
        let w = 1.0 - 1.0 / self.cfg.mu;
        let lam = StripeLaminate::new(self.cfg.t[ti], self.cfg.c[ci], w, periods, [0.0; 2], size, band)?;
        let p = lam.period();
        let core = lt - 2.0 * band;

        let mut total = Moments::default();
        total.add(&Moments::constant(lam.a, w * p * core, self.t_dist2[ti]), periods as f64);
        let mut slab = [0.0; 2];
        slab[axis] = (1.0 - w) * p;
        slab[1 - axis] = core;
        let c_area = if k + 1 < depth {
            let (m, c) = self.level(k + 1, depth, slab)?;
            total.add(&m, periods as f64);
            c * periods as f64
        } else {
            total.add(&Moments::constant(lam.b, slab[0] * slab[1], self.c_dist2[ci]), periods as f64);
            slab[0] * slab[1] * periods as f64
        };
        // the two cutoff bands, one period each, split at the phase interface
        for st in [[0.0, band], [lt - band, lt]] {
            for sn in [[0.0, w * p], [w * p, p]] {
                let m = self.integrate(sn, st, |a, b| {
                    let g = lam.grad_local(a, b);
                    Moments { area: 1.0, dist2: self.dist.dist_sq(&g), sum: g, sq: g.frob_sq() }
                });
                total.add(&m, periods as f64);
            }
        }
        Ok((total, c_area))
    }
}

/// Recursive stripe laminates of depth `1..=max_depth` on the unit square,
/// starting from boundary data `C_1 x`. Reports the distance of the gradients
/// to the curve and how far they stay from any single curve matrix.
pub fn non_compactness_demo(pi3: &Pi3, max_depth: usize, opts: DemoOptions) -> Result<DemoReport> {
    if max_depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let gauss = NonZeroUsize::new(opts.gauss_points).ok_or_else(|| Error::InvalidArgument("gauss_points must be positive".into()))?;
    let cfg = &pi3.cfg;
    let dist = CurveDistance::new(pi3, opts.curve_samples);
    let c_dist2 = cfg.c.iter().map(|c| dist.dist_sq(c)).collect();
    let t_dist2 = cfg.t.iter().map(|t| dist.dist_sq(t)).collect();
    let quad = GaussLegendre::new(gauss).as_node_weight_pairs().to_vec();
    let b = Builder { cfg, dist, quad, opts, c_dist2, t_dist2 };
    let m_floor = 0.1 * cfg.min_pairwise_spread();

    let mut rows = Vec::with_capacity(max_depth);
    let mut details = Vec::with_capacity(max_depth);
    for depth in 1..=max_depth {
        let (m, c_area) = b.level(0, depth, [1.0, 1.0])?;
        let (theta, m_d) = b.dist.minimize(|g| m.sq - 2.0 * g.dot(&m.sum) + g.frob_sq() * m.area);
        rows.push(DemoRow { depth, eps_d: m.dist2, m_d, c_mass: cfg.mu.powi(-(depth as i32)) });
        details.push(DepthDetail {
            depth,
            c_area,
            grad_sq_integral: m.sq,
            mean_gradient: m.sum * (1.0 / m.area),
            best_theta: theta,
        });
    }
    Ok(DemoReport { rows, details, m_floor, options: opts })
}
