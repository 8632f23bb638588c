//! Lipschitz extension of `H` (with `z- = H(z+)` on the curve), inversion of
//! `F(z) = conj(z) + H(z)`, and the monotone fields `G1`, `G2` whose graphs
//! contain the rows of the curve.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::{ClosedFormH, CurveK};
use crate::error::{Error, Result};
use crate::matrix::Mat2;

pub const DEFAULT_FP_TOL: f64 = 1e-12;
const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtendMode {
    ClosedForm,
    McshaneGrid,
}

/// Values of `H` tabulated on the nodes of a square grid over
/// `[-extent, extent]^2`, evaluated by bilinear interpolation after clamping
/// the argument into the box.
#[derive(Debug, Clone, PartialEq)]
pub struct HGrid {
    pub extent: f64,
    pub n: usize,
    pub vals: Vec<Complex64>,
}

impl HGrid {
    fn h(&self) -> f64 {
        2.0 * self.extent / (self.n - 1) as f64
    }

    fn node(&self, i: usize, j: usize) -> Complex64 {
        Complex64::new(-self.extent + i as f64 * self.h(), -self.extent + j as f64 * self.h())
    }

    fn at(&self, i: usize, j: usize) -> Complex64 {
        self.vals[j * self.n + i]
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let h = self.h();
        let locate = |x: f64| {
            let u = ((x.clamp(-self.extent, self.extent) + self.extent) / h).min((self.n - 1) as f64);
            let i = (u.floor() as usize).min(self.n - 2);
            (i, u - i as f64)
        };
        let (i, s) = locate(z.re);
        let (j, r) = locate(z.im);
        self.at(i, j) * ((1.0 - s) * (1.0 - r))
            + self.at(i + 1, j) * (s * (1.0 - r))
            + self.at(i, j + 1) * ((1.0 - s) * r)
            + self.at(i + 1, j + 1) * (s * r)
    }

    /// Exact Lipschitz constant of the interpolant: on each cell the
    /// Jacobian is affine, so its operator norm peaks at a corner.
    pub fn lipschitz(&self) -> f64 {
        let n = self.n;
        let h = self.h();
        (0..n - 1)
            .into_par_iter()
            .map(|j| {
                let mut best = 0.0f64;
                for i in 0..n - 1 {
                    let (f00, f10, f01, f11) = (self.at(i, j), self.at(i + 1, j), self.at(i, j + 1), self.at(i + 1, j + 1));
                    for (dx, dy) in [(f10 - f00, f01 - f00), (f11 - f01, f11 - f10), (f10 - f00, f11 - f10), (f11 - f01, f01 - f00)] {
                        // columns are the partial derivatives of (Re H, Im H)
                        let jac = Mat2::new(dx.re / h, dy.re / h, dx.im / h, dy.im / h);
                        best = best.max(jac.sigma1());
                    }
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Averages node values over a discrete disk of radius `eps`, with
    /// indices clamped at the border.
    pub fn mollify(&self, eps: f64) -> HGrid {
        let n = self.n as isize;
        let r = (eps / self.h()).floor() as isize;
        if r <= 0 {
            return self.clone();
        }
        let offsets: Vec<(isize, isize)> =
            (-r..=r).flat_map(|a| (-r..=r).map(move |b| (a, b))).filter(|(a, b)| a * a + b * b <= r * r).collect();
        let w = 1.0 / offsets.len() as f64;
        let vals = (0..self.n * self.n)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = ((idx % self.n) as isize, (idx / self.n) as isize);
                let mut acc = Complex64::new(0.0, 0.0);
                for (a, b) in &offsets {
                    let ii = (i + a).clamp(0, n - 1) as usize;
                    let jj = (j + b).clamp(0, n - 1) as usize;
                    acc += self.at(ii, jj);
                }
                acc * w
            })
            .collect();
        HGrid { extent: self.extent, n: self.n, vals }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum HRule {
    Closed(ClosedFormH),
    Grid(HGrid),
}

/// Globally defined Lipschitz extension of `H` with a certified constant.
#[derive(Debug, Clone, PartialEq)]
pub struct HExtension {
    pub rule: HRule,
    pub k_ext: f64,
    pub eps_mol: f64,
    pub k_measured: f64,
    /// Max over curve samples of `|H(z+) - z-|`.
    pub agreement: f64,
}

impl HExtension {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match &self.rule {
            HRule::Closed(h) => h.eval(z),
            HRule::Grid(g) => g.eval(z),
        }
    }

    /// Builds the extension from curve data. `grid_extent` and `grid_n` are
    /// ignored in closed-form mode.
    pub fn extend(k: &CurveK, mode: ExtendMode, grid_extent: f64, grid_n: usize, eps_mol: f64) -> Result<HExtension> {
        let (k_measured, _) = k.conformal_data()?;
        let (rule, k_ext) = match mode {
            ExtendMode::ClosedForm => {
                let (family, _) = k
                    .family()
                    .ok_or_else(|| Error::InvalidArgument("closed-form extension needs a builtin curve".into()))?;
                let h = family
                    .closed_form_h()
                    .ok_or_else(|| Error::InvalidArgument(format!("no closed-form H for {}", k.spec())))?;
                (HRule::Closed(h), h.lipschitz())
            }
            ExtendMode::McshaneGrid => {
                if k_measured >= std::f64::consts::FRAC_1_SQRT_2 {
                    return Err(Error::ExtensionObstruction { k_measured });
                }
                if grid_n < 2 || !(grid_extent > 0.0) {
                    return Err(Error::InvalidArgument("grid needs n >= 2 and a positive extent".into()));
                }
                let mut grid = mcshane_grid(k, grid_extent, grid_n);
                if eps_mol > 0.0 {
                    grid = grid.mollify(eps_mol);
                }
                let lip = grid.lipschitz();
                (HRule::Grid(grid), lip)
            }
        };
        let mut ext = HExtension { rule, k_ext, eps_mol, k_measured, agreement: 0.0 };
        ext.agreement = k.zp.iter().zip(&k.zm).map(|(p, m)| (ext.eval(*p) - m).norm()).fold(0.0, f64::max);
        if ext.k_ext >= 1.0 {
            return Err(Error::ExtensionFailed(format!("certified Lipschitz constant {:.6} is not below 1", ext.k_ext)));
        }
        Ok(ext)
    }

    /// Solves `conj(z) + H(z) = w` by the fixed-point iteration
    /// `z <- conj(w) - conj(H(z))` seeded at `conj(w)`. Returns the solution and
    /// the number of iterations.
    pub fn invert_f(&self, w: Complex64, fp_tol: f64) -> Result<(Complex64, usize)> {
        invert_with(|z| self.eval(z), self.k_ext, w, fp_tol)
    }

    pub fn f(&self, z: Complex64) -> Complex64 {
        z.conj() + self.eval(z)
    }
}

fn invert_with(h: impl Fn(Complex64) -> Complex64, k: f64, w: Complex64, fp_tol: f64) -> Result<(Complex64, usize)> {
    let tol = fp_tol * w.norm().max(1.0);
    let predicted = if k <= 0.0 {
        1.0
    } else {
        ((tol / w.norm().max(tol)).ln() / k.ln()).max(1.0) + 5.0
    };
    let max_iter = (10.0 * predicted).ceil() as usize;
    let mut z = w.conj();
    for it in 0..=max_iter {
        let next = w.conj() - h(z).conj();
        // |F(z) - w| = |z - next|
        let res = (z - next).norm();
        if res <= tol {
            return Ok((z, it));
        }
        z = next;
    }
    Err(Error::ContractionViolation { iterations: max_iter, residual: (z.conj() + h(z) - w).norm() })
}

/// Componentwise McShane midpoint extension of the sampled `H` on a grid.
fn mcshane_grid(k: &CurveK, extent: f64, n: usize) -> HGrid {
    let (zp, zm) = (&k.zp, &k.zm);
    let comp_lip = |f: fn(&Complex64) -> f64| -> f64 {
        (0..zp.len())
            .into_par_iter()
            .map(|i| {
                let mut best = 0.0f64;
                for j in i + 1..zp.len() {
                    let dz = (zp[i] - zp[j]).norm();
                    if dz > 0.0 {
                        best = best.max((f(&zm[i]) - f(&zm[j])).abs() / dz);
                    }
                }
                let d = k.dzp[i].norm();
                if d > 0.0 {
                    best = best.max(f(&k.dzm[i]).abs() / d);
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    };
    let (k_re, k_im) = (comp_lip(|c| c.re), comp_lip(|c| c.im));
    let mut grid = HGrid { extent, n, vals: Vec::new() };
    grid.vals = (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let z = grid.node(idx % n, idx / n);
            let (mut up_re, mut lo_re) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut up_im, mut lo_im) = (f64::INFINITY, f64::NEG_INFINITY);
            for (p, m) in zp.iter().zip(zm) {
                let d = (z - p).norm();
                up_re = up_re.min(m.re + k_re * d);
                lo_re = lo_re.max(m.re - k_re * d);
                up_im = up_im.min(m.im + k_im * d);
                lo_im = lo_im.max(m.im - k_im * d);
            }
            Complex64::new(0.5 * (up_re + lo_re), 0.5 * (up_im + lo_im))
        })
        .collect();
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    G1,
    G2,
}

/// One of the two monotone fields together with its certified constants.
#[derive(Debug, Clone)]
pub struct FieldG {
    pub which: Which,
    pub h: Arc<HExtension>,
    pub lambda: f64,
    pub big_lambda: f64,
    pub fp_tol: f64,
}

/// Certification settings: number of random pairs, sampling box half-width
/// and RNG seed.
#[derive(Debug, Clone, Copy)]
pub struct CertifyOptions {
    pub n_pairs: usize,
    pub radius: f64,
    pub seed: u64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { n_pairs: 10_000, radius: 3.0, seed: 0 }
    }
}

impl FieldG {
    /// Builds and certifies the field.
    pub fn new(h: Arc<HExtension>, which: Which, opts: CertifyOptions) -> Result<FieldG> {
        let mut f = FieldG { which, h, lambda: 0.0, big_lambda: 0.0, fp_tol: DEFAULT_FP_TOL };
        let (l, bl) = f.certify_monotone(opts)?;
        f.lambda = l;
        f.big_lambda = bl;
        Ok(f)
    }

    /// The function playing the role of `H` for this field. `G2` uses the
    /// curve rotated by a quarter turn, `M -> [[0, 1], [-1, 0]] M`, whose
    /// conformal coordinates are `(-i z+, -i z-)`.
    fn h_eval(&self, z: Complex64) -> Complex64 {
        match self.which {
            Which::G1 => self.h.eval(z),
            Which::G2 => -I * self.h.eval(I * z),
        }
    }

    pub fn eval(&self, a: [f64; 2]) -> Result<[f64; 2]> {
        let w = Complex64::new(a[0], a[1]);
        let (z, _) = invert_with(|z| self.h_eval(z), self.h.k_ext, w, self.fp_tol)?;
        let g = z.conj() - self.h_eval(z);
        Ok([g.re, g.im])
    }

    /// Bounds `(1 - k)/(1 + k)` and `(1 + k)/(1 - k)` from the certified `k_ext`.
    pub fn theoretical_bounds(&self) -> (f64, f64) {
        let k = self.h.k_ext;
        ((1.0 - k) / (1.0 + k), (1.0 + k) / (1.0 - k))
    }

    /// Minimum monotonicity quotient and maximum difference quotient over
    /// random pairs: half drawn uniformly from the box, half as close pairs.
    pub fn certify_monotone(&self, opts: CertifyOptions) -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let r = opts.radius;
        let pairs: Vec<([f64; 2], [f64; 2])> = (0..opts.n_pairs)
            .map(|p| {
                let a = [rng.gen_range(-r..r), rng.gen_range(-r..r)];
                let b = if p % 2 == 0 {
                    [rng.gen_range(-r..r), rng.gen_range(-r..r)]
                } else {
                    let s = 10f64.powf(rng.gen_range(-4.0..-1.0)) * r;
                    let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    [a[0] + s * th.cos(), a[1] + s * th.sin()]
                };
                (a, b)
            })
            .collect();
        let quotients: Vec<(f64, f64, usize)> = pairs
            .par_iter()
            .enumerate()
            .map(|(idx, (a, b))| -> Result<(f64, f64, usize)> {
                let (ga, gb) = (self.eval(*a)?, self.eval(*b)?);
                let d = [a[0] - b[0], a[1] - b[1]];
                let dg = [ga[0] - gb[0], ga[1] - gb[1]];
                let d2 = d[0] * d[0] + d[1] * d[1];
                if d2 == 0.0 {
                    return Ok((f64::INFINITY, 0.0, idx));
                }
                let mono = (dg[0] * d[0] + dg[1] * d[1]) / d2;
                let lip = (dg[0] * dg[0] + dg[1] * dg[1]).sqrt() / d2.sqrt();
                Ok((mono, lip, idx))
            })
            .collect::<Result<_>>()?;
        let (mut lam, mut widx) = (f64::INFINITY, 0);
        let mut big = 0.0f64;
        for &(m, l, idx) in &quotients {
            if m < lam {
                lam = m;
                widx = idx;
            }
            big = big.max(l);
        }
        if lam <= 0.0 {
            let (a, b) = pairs[widx];
            return Err(Error::MonotonicityFailed { quotient: lam, a, b });
        }
        Ok((lam, big))
    }
}

/// Max over curve samples of `|G1(A) + iB|` and `|(-i) G2(B) - A|`, with
/// `A`, `B` the rows of `M(t_i)` read as complex numbers.
pub fn graph_residual(g1: &FieldG, g2: &FieldG, k: &CurveK) -> Result<f64> {
    k.m.par_iter()
        .map(|m| -> Result<f64> {
            let (a, b) = (m.row1(), m.row2());
            let r1 = g1.eval([a.re, a.im])?;
            let r2 = g2.eval([b.re, b.im])?;
            let e1 = (Complex64::new(r1[0], r1[1]) + I * b).norm();
            let e2 = (-I * Complex64::new(r2[0], r2[1]) - a).norm();
            Ok(e1.max(e2))
        })
        .try_reduce(|| 0.0, |x, y| Ok(x.max(y)))
}

/// Convenience: extension plus both certified fields.
pub fn build_fields(k: &CurveK, mode: ExtendMode, grid_extent: f64, grid_n: usize, eps_mol: f64, opts: CertifyOptions) -> Result<(FieldG, FieldG)> {
    let h = Arc::new(HExtension::extend(k, mode, grid_extent, grid_n, eps_mol)?);
    Ok((FieldG::new(h.clone(), Which::G1, opts)?, FieldG::new(h, Which::G2, opts)?))
}
