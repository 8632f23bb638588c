//! Quantitative rigidity experiments on `Q = [-L, L]^2` with inner square
//! `Q' = [-L/2, L/2]^2`: the defect `eps = int_Q dist^2(Du, K)`, the best
//! constant matrix on `Q'` via the tangent-shift iteration, and the
//! linearized estimate.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::curve::CurveK;
use crate::error::{Error, Result};
use crate::field::FieldG;
use crate::matrix::Mat2;
use crate::optim::golden_section_min;
use crate::pde::{solve_pair, GridMap, SolveOptions};

pub const MAX_ITERATIONS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    /// The whole grid square.
    Q,
    /// The concentric square of half the side.
    QPrime,
}

fn in_domain(u: &GridMap, c: usize, domain: Domain) -> bool {
    match domain {
        Domain::Q => true,
        Domain::QPrime => {
            let m = u.grid.n - 1;
            let [x, y] = u.grid.cell_center(c % m, c / m);
            let half = 0.5 * u.grid.extent;
            x.abs() < half && y.abs() < half
        }
    }
}

fn domain_gradients(u: &GridMap, domain: Domain) -> Vec<Mat2> {
    u.gradients().into_iter().enumerate().filter(|(c, _)| in_domain(u, *c, domain)).map(|(_, d)| d).collect()
}

fn cell_area(u: &GridMap) -> f64 {
    u.grid.h() * u.grid.h()
}

/// Midpoint-rule integral of `dist^2(Du, K)` over the cells of `domain`.
pub fn dist2_integral(u: &GridMap, k: &CurveK, domain: Domain) -> f64 {
    let d: Vec<f64> = domain_gradients(u, domain).par_iter().map(|m| k.project(m).dist.powi(2)).collect();
    d.iter().sum::<f64>() * cell_area(u)
}

/// Max over `Q'` cells of `dist(Du, K)`.
pub fn sup_distance(u: &GridMap, k: &CurveK) -> f64 {
    domain_gradients(u, Domain::QPrime).par_iter().map(|m| k.project(m).dist).reduce(|| 0.0, f64::max)
}

/// First and second moments of `Du` over `Q'`: `(area, int Du, int |Du|^2)`.
#[derive(Debug, Clone, Copy)]
struct Moments {
    area: f64,
    sum: Mat2,
    sq: f64,
}

impl Moments {
    fn new(u: &GridMap) -> Moments {
        let a = cell_area(u);
        let g = domain_gradients(u, Domain::QPrime);
        let sum = g.iter().fold(Mat2::ZERO, |acc, m| acc + *m) * a;
        let sq = g.iter().map(Mat2::frob_sq).sum::<f64>() * a;
        Moments { area: a * g.len() as f64, sum, sq }
    }

    fn mean(&self) -> Mat2 {
        self.sum * (1.0 / self.area)
    }

    /// `int_{Q'} |Du - M|^2`.
    fn q(&self, m: &Mat2) -> f64 {
        (self.sq - 2.0 * m.dot(&self.sum) + m.frob_sq() * self.area).max(0.0)
    }
}

/// Tangent part of `mean_{Q'}(Du) - M(t)`: the minimizer of
/// `int_{Q'} |Du - M(t) - X|^2` over `X` in the tangent line at `M(t)`.
pub fn best_tangent_shift(u: &GridMap, k: &CurveK, t: f64) -> Result<Mat2> {
    tangent_shift(&Moments::new(u), k, t)
}

fn tangent_shift(mo: &Moments, k: &CurveK, t: f64) -> Result<Mat2> {
    let tau = k.unit_tangent(t)?;
    Ok(tau * (mo.mean() - k.eval(t)).dot(&tau))
}

/// Outcome of one projection step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepY {
    pub y: Mat2,
    pub t: f64,
    pub accepted: bool,
    pub multiple: bool,
}

/// `Y = Pi_K(M(t) + X)` inside the tube of radius `delta0`, otherwise `M(t)`.
pub fn step_y(k: &CurveK, t: f64, x: &Mat2, delta0: f64) -> StepY {
    let m = k.eval(t);
    if x.frob() > delta0 {
        return StepY { y: m, t, accepted: false, multiple: false };
    }
    let p = k.project(&(m + *x));
    StepY { y: p.point, t: p.t, accepted: true, multiple: p.multiple }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RigidityResult {
    pub eps: f64,
    pub q_star: f64,
    pub m_star: [f64; 4],
    pub t_star: f64,
    pub ratio: f64,
    pub s0: f64,
    pub j0: usize,
    pub q_trace: Vec<f64>,
    pub s_trace: Vec<f64>,
    /// Smallest constant for which the recorded traces satisfy the
    /// recursion `q' <= C (eps + s^2 q)`, `s' <= s + C sqrt(q)`.
    pub c_hat: f64,
    /// Minimum of `q` over all curve samples.
    pub brute_q: f64,
    pub multiplicity_warning: bool,
}

impl RigidityResult {
    /// Whether the traces satisfy both recursion inequalities with `c`.
    pub fn recursion_holds(&self, c: f64) -> bool {
        let tol = 1e-12 * self.q_trace.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        self.q_trace.windows(2).zip(self.s_trace.windows(2)).all(|(q, s)| {
            q[1] <= c * (self.eps + s[0] * s[0] * q[0]) + tol && s[1] <= s[0] + c * q[0].sqrt() + 1e-12
        })
    }
}

fn fit_recursion_constant(eps: f64, q: &[f64], s: &[f64]) -> f64 {
    let mut c = 0.0f64;
    for j in 0..q.len().saturating_sub(1) {
        let den = eps + s[j] * s[j] * q[j];
        if q[j + 1] > 0.0 {
            c = c.max(if den > 0.0 { q[j + 1] / den } else { f64::INFINITY });
        }
        let ds = s[j + 1] - s[j];
        if ds > 0.0 {
            c = c.max(if q[j] > 0.0 { ds / q[j].sqrt() } else { f64::INFINITY });
        }
    }
    c
}

/// Best constant matrix on `Q'`: start at the projection of the mean
/// gradient and iterate `M_{j+1} = Y_{M_j}`.
/// Independent check of the iteration: `q` minimized over every curve sample,
/// then refined by golden section on the continuous curve.
fn brute_force_q(mo: &Moments, k: &CurveK) -> f64 {
    let (i, q) = k.m.iter().map(|mi| mo.q(mi)).enumerate().fold((0, f64::INFINITY), |b, (i, q)| if q < b.1 { (i, q) } else { b });
    let (t, h) = (k.t[i], k.step());
    let (_, qr) = golden_section_min(|s| mo.q(&k.eval(s)), t - h, t + h, 1e-14);
    q.min(qr)
}

pub fn find_best_m(u: &GridMap, k: &CurveK) -> Result<RigidityResult> {
    let delta0 = k.reach_estimate();
    find_best_m_with(u, k, delta0)
}

pub fn find_best_m_with(u: &GridMap, k: &CurveK, delta0: f64) -> Result<RigidityResult> {
    let mo = Moments::new(u);
    let g = domain_gradients(u, Domain::QPrime);
    let sup = |m: &Mat2| g.par_iter().map(|d| (*d - *m).frob()).reduce(|| 0.0, f64::max);
    let p0 = k.project(&mo.mean());
    let mut multiple = p0.multiple;
    let (mut t, mut m) = (p0.t, p0.point);
    let mut q_trace = vec![mo.q(&m)];
    let mut s_trace = vec![sup(&m)];
    let (mut best_q, mut best_m, mut best_t) = (q_trace[0], m, t);
    let stop = 1e-12 * q_trace[0];
    for _ in 0..MAX_ITERATIONS {
        let x = tangent_shift(&mo, k, t)?;
        let step = step_y(k, t, &x, delta0);
        multiple |= step.multiple;
        t = step.t;
        m = step.y;
        let q = mo.q(&m);
        let prev = *q_trace.last().unwrap();
        q_trace.push(q);
        s_trace.push(sup(&m));
        if q < best_q {
            best_q = q;
            best_m = m;
            best_t = t;
        }
        if (q - prev).abs() <= stop {
            break;
        }
    }
    let brute_q = brute_force_q(&mo, k);
    let eps = dist2_integral(u, k, Domain::Q);
    let c_hat = fit_recursion_constant(eps, &q_trace, &s_trace);
    Ok(RigidityResult {
        eps,
        q_star: best_q,
        m_star: best_m.to_vec4(),
        t_star: best_t,
        ratio: if eps > 0.0 { best_q / eps } else { 0.0 },
        s0: sup_distance(u, k),
        j0: q_trace.len() - 1,
        q_trace,
        s_trace,
        c_hat,
        brute_q,
        multiplicity_warning: multiple,
    })
}

/// `inf_X int_Q |Du - X|^2 / int_Q |P_M Du|^2` over `X` in the tangent line
/// at `M(t)`. A vanishing denominator yields 0 when the numerator vanishes
/// too and `+inf` otherwise.
pub fn linearized_test(k: &CurveK, t: f64, u: &GridMap) -> Result<f64> {
    let tau = k.unit_tangent(t)?;
    let g = u.gradients();
    let a = cell_area(u);
    let n = g.len() as f64;
    let c = g.iter().map(|d| d.dot(&tau)).sum::<f64>() / n;
    let num = g.iter().map(|d| (*d - tau * c).frob_sq()).sum::<f64>() * a;
    let den = g.iter().map(|d| (*d - tau * d.dot(&tau)).frob_sq()).sum::<f64>() * a;
    let scale = g.iter().map(Mat2::frob_sq).sum::<f64>() * a;
    let tiny = 1e-24 * scale.max(f64::MIN_POSITIVE);
    Ok(if den <= tiny {
        if num <= 1e-20 * scale.max(f64::MIN_POSITIVE) {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    })
}

/// Random trigonometric maps `u_i = sum_k a_k sin(pi (p x + q y) + phase)`
/// with integer frequencies up to `max_freq`.
pub fn random_trig_field(grid: crate::pde::Grid2D, max_freq: i32, seed: u64) -> GridMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[f64; 5]> = (0..6)
        .map(|_| {
            let p = rng.gen_range(-max_freq..=max_freq) as f64;
            let q = rng.gen_range(-max_freq..=max_freq) as f64;
            [p, q, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)]
        })
        .collect();
    GridMap::from_fn(grid, move |x, y| {
        modes.iter().fold([0.0, 0.0], |acc, md| {
            let s = (PI * 0.5 * (md[0] * x + md[1] * y) + md[4]).sin();
            [acc[0] + md[2] * s, acc[1] + md[3] * s]
        })
    })
}

/// Largest linearized ratio over a battery of random trigonometric fields.
pub fn linearized_battery(k: &CurveK, t: f64, grid: crate::pde::Grid2D, count: usize, seed: u64) -> Result<f64> {
    (0..count)
        .into_par_iter()
        .map(|i| linearized_test(k, t, &random_trig_field(grid, 3, seed.wrapping_add(i as u64))))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Truncation surrogate: enforces `|Du| <= 2R` on every cell. In-range maps
/// are returned unchanged. Offending cells are shrunk about their nodal mean,
/// sweeping until no cell exceeds the bound; if that does not settle, the
/// whole map is scaled about its mean.
pub fn clamp_gradients(u: &GridMap, r: f64) -> GridMap {
    let bound = 2.0 * r;
    let grid = u.grid;
    let m = grid.n - 1;
    let too_big = |v: &GridMap| v.gradients().iter().any(|d| d.frob() > bound * (1.0 + 1e-12));
    if !too_big(u) {
        return u.clone();
    }
    let mut v = u.clone();
    for _ in 0..50 {
        let mut changed = false;
        for c in 0..m * m {
            let (ci, cj) = (c % m, c / m);
            let d = Mat2::new(
                grid.cell_grad(&v.u1, ci, cj)[0],
                grid.cell_grad(&v.u1, ci, cj)[1],
                grid.cell_grad(&v.u2, ci, cj)[0],
                grid.cell_grad(&v.u2, ci, cj)[1],
            );
            let norm = d.frob();
            if norm <= bound {
                continue;
            }
            let s = bound / norm;
            let ids = [grid.idx(ci, cj), grid.idx(ci + 1, cj), grid.idx(ci, cj + 1), grid.idx(ci + 1, cj + 1)];
            for comp in [&mut v.u1, &mut v.u2] {
                let mean = ids.iter().map(|&i| comp[i]).sum::<f64>() / 4.0;
                for &i in &ids {
                    comp[i] = mean + s * (comp[i] - mean);
                }
            }
            changed = true;
        }
        if !changed {
            return v;
        }
    }
    if !too_big(&v) {
        return v;
    }
    let max = u.gradients().iter().map(Mat2::frob).fold(0.0, f64::max);
    let s = bound / max;
    let scale = |w: &[f64]| {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter().map(|x| mean + s * (x - mean)).collect()
    };
    GridMap { grid, u1: scale(&u.u1), u2: scale(&u.u2) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Affine,
    AffinePlusBump,
    TangentWiggle,
    PdeProjected,
    UserFile,
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "affine" => Generator::Affine,
            "affine_plus_bump" => Generator::AffinePlusBump,
            "tangent_wiggle" => Generator::TangentWiggle,
            "pde_projected" => Generator::PdeProjected,
            "user_file" => Generator::UserFile,
            other => return Err(Error::Parse(format!("unknown generator `{other}`"))),
        })
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Generator::Affine => "affine",
            Generator::AffinePlusBump => "affine_plus_bump",
            Generator::TangentWiggle => "tangent_wiggle",
            Generator::PdeProjected => "pde_projected",
            Generator::UserFile => "user_file",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestMapSpec {
    pub generator: Generator,
    pub t0: f64,
    pub amp: f64,
    pub freq: f64,
    pub seed: u64,
    pub file: Option<PathBuf>,
}

impl TestMapSpec {
    pub fn new(generator: Generator, amp: f64) -> Self {
        TestMapSpec { generator, t0: 0.3, amp, freq: 1.0, seed: 0, file: None }
    }
}

/// Smooth bump supported in the disk of radius `radius`.
pub fn bump(x: f64, y: f64, radius: f64) -> f64 {
    let r2 = (x * x + y * y) / (radius * radius);
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

/// Samples a test map on `grid`. `pde_projected` needs the two fields and
/// replaces the bump map by the solution of `div G(Dw) = 0` with the same
/// boundary values.
pub fn generate(spec: &TestMapSpec, k: &CurveK, grid: crate::pde::Grid2D, fields: Option<(&FieldG, &FieldG)>) -> Result<GridMap> {
    if !(spec.amp >= 0.0) {
        return Err(Error::InvalidArgument(format!("amplitude must be nonnegative, got {}", spec.amp)));
    }
    let m = k.eval(spec.t0);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (a, f) = (spec.amp, spec.freq);
    let radius = 0.9 * grid.extent;
    Ok(match spec.generator {
        Generator::Affine => {
            let e = Mat2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let e = e * (1.0 / e.frob());
            GridMap::affine(grid, m + e * a, [0.0, 0.0])
        }
        Generator::AffinePlusBump | Generator::PdeProjected => {
            let th: f64 = rng.gen_range(0.0..2.0 * PI);
            let v = [th.cos(), th.sin()];
            let al: f64 = rng.gen_range(0.0..2.0 * PI);
            let xi = [al.cos(), al.sin()];
            let u = GridMap::from_fn(grid, |x, y| {
                let p = m.apply([x, y]);
                let phi = bump(x, y, radius) * (1.0 + 0.5 * (PI * f * (xi[0] * x + xi[1] * y) / grid.extent).sin());
                [p[0] + a * phi * v[0], p[1] + a * phi * v[1]]
            });
            if spec.generator == Generator::PdeProjected {
                let (g1, g2) = fields.ok_or_else(|| Error::InvalidArgument("pde_projected needs the monotone fields".into()))?;
                solve_pair(g1, g2, &u, SolveOptions { tol: 1e-9, ..Default::default() })?.0
            } else {
                u
            }
        }
        Generator::TangentWiggle => {
            let tau = k.unit_tangent(spec.t0)?;
            let b = tau.apply([1.0, 0.0]);
            GridMap::from_fn(grid, |x, y| {
                let p = m.apply([x, y]);
                let s = a * bump(x, y, radius) * (PI * f * x / grid.extent).sin() * grid.extent / (PI * f);
                [p[0] + s * b[0], p[1] + s * b[1]]
            })
        }
        Generator::UserFile => {
            let path = spec.file.as_ref().ok_or_else(|| Error::InvalidArgument("user_file needs a path".into()))?;
            let u = crate::io::read_gridmap(path)?;
            if u.grid != grid {
                return Err(Error::InvalidArgument("user map grid does not match the requested grid".into()));
            }
            u
        }
    })
}

/// One row of a rigidity sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub curve: String,
    pub generator: String,
    pub eps_amp: f64,
    pub eps: f64,
    pub q_star: f64,
    pub ratio: f64,
    pub s0: f64,
    pub j0: usize,
}

/// Runs `find_best_m` over an amplitude sweep.
pub fn amplitude_sweep(
    k: &CurveK,
    base: &TestMapSpec,
    amps: &[f64],
    grid: crate::pde::Grid2D,
    fields: Option<(&FieldG, &FieldG)>,
) -> Result<Vec<(ExperimentRow, RigidityResult)>> {
    let delta0 = k.reach_estimate();
    amps.iter()
        .map(|&amp| {
            let spec = TestMapSpec { amp, ..base.clone() };
            let u = generate(&spec, k, grid, fields)?;
            let r = find_best_m_with(&u, k, delta0)?;
            let row = ExperimentRow {
                curve: k.spec().to_string(),
                generator: base.generator.to_string(),
                eps_amp: amp,
                eps: r.eps,
                q_star: r.q_star,
                ratio: r.ratio,
                s0: r.s0,
                j0: r.j0,
            };
            Ok((row, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::CurveSpec;
    use crate::pde::Grid2D;
    use approx::assert_abs_diff_eq;

    fn so2() -> CurveK {
        CurveK::build(&CurveSpec::so2(), 1024).unwrap()
    }

    fn grid() -> Grid2D {
        Grid2D::new(1.0, 33).unwrap()
    }

    #[test]
    fn dist2_of_affine_maps() {
        let k = so2();
        let m = k.eval(0.4);
        assert!(dist2_integral(&GridMap::affine(grid(), m, [1.0, 2.0]), &k, Domain::Q) <= 1e-12);
        let off = Mat2::new(2.0, 0.0, 0.0, 2.0);
        let v = dist2_integral(&GridMap::affine(grid(), off, [0.0, 0.0]), &k, Domain::Q);
        assert_abs_diff_eq!(v / 4.0, 2.0, epsilon = 1e-9);
        let v = dist2_integral(&GridMap::affine(grid(), off, [0.0, 0.0]), &k, Domain::QPrime);
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-9);
    }

    #[test]
    fn tangent_shift_examples() {
        let k = so2();
        let t = 1.1;
        let m = k.eval(t);
        let tau = k.unit_tangent(t).unwrap();
        let x = best_tangent_shift(&GridMap::affine(grid(), m, [0.0, 0.0]), &k, t).unwrap();
        assert!(x.frob() < 1e-13);
        let x = best_tangent_shift(&GridMap::affine(grid(), m + tau * 0.1, [0.0, 0.0]), &k, t).unwrap();
        assert!((x - tau * 0.1).frob() < 1e-12);
        let normal = m * 0.3; // radial direction is normal to SO(2)
        let x = best_tangent_shift(&GridMap::affine(grid(), m + normal, [0.0, 0.0]), &k, t).unwrap();
        assert!(x.frob() < 1e-13);
        let u = GridMap::affine(grid(), m + tau * 0.1 + normal, [0.0, 0.0]);
        let x = best_tangent_shift(&u, &k, t).unwrap();
        let rest = Moments::new(&u).mean() - m - x;
        assert!(rest.dot(&x).abs() < 1e-12);
    }

    #[test]
    fn step_y_examples() {
        let k = so2();
        let delta0 = k.reach_estimate();
        let t = 0.5;
        let s = step_y(&k, t, &Mat2::ZERO, delta0);
        assert!((s.y - k.eval(t)).frob() < 1e-12);
        let tau = k.unit_tangent(t).unwrap();
        let s = step_y(&k, t, &(tau * (2.0 * delta0)), delta0);
        assert!(!s.accepted && s.y == k.eval(t));
        // SO(2) is a circle of radius sqrt 2 in the Frobenius norm
        for d in [1e-1, 3e-2, 1e-2] {
            let x = tau * d;
            let s = step_y(&k, t, &x, delta0);
            let gap = (k.eval(t) + x - s.y).frob();
            let exact = (2.0 + d * d).sqrt() - 2f64.sqrt();
            assert_abs_diff_eq!(gap, exact, epsilon = 1e-10);
            assert!(gap <= 2.0 / delta0 * d * d);
        }
    }

    #[test]
    fn exact_inclusion_is_recovered() {
        let k = so2();
        let m = k.eval(2.0);
        let r = find_best_m(&GridMap::affine(grid(), m, [0.3, -0.1]), &k).unwrap();
        assert!(r.q_star <= 1e-10 && r.eps <= 1e-12);
        assert!(r.j0 <= 2);
        assert!((Mat2::from_vec4(r.m_star) - m).frob() < 1e-6);
    }

    #[test]
    fn constant_gradient_near_curve() {
        let k = CurveK::build(&CurveSpec::kc(0.5), 2048).unwrap();
        let mp = k.eval(0.7) * 1.1 + Mat2::new(0.0, 0.02, 0.01, 0.0);
        let r = find_best_m(&GridMap::affine(grid(), mp, [0.0, 0.0]), &k).unwrap();
        let p = k.project(&mp);
        assert!((Mat2::from_vec4(r.m_star) - p.point).frob() < 1e-6);
        assert!(r.q_star <= r.brute_q * (1.0 + 1e-6));
        assert!(r.recursion_holds(r.c_hat));
    }

    #[test]
    fn linearized_examples() {
        let k = so2();
        let t = 0.0;
        let tau = k.unit_tangent(t).unwrap();
        assert_eq!(linearized_test(&k, t, &GridMap::affine(grid(), tau * 0.7, [0.0, 0.0])).unwrap(), 0.0);
        let n = Mat2::new(1.0, 0.0, 0.0, 1.0);
        assert_abs_diff_eq!(linearized_test(&k, t, &GridMap::affine(grid(), n, [0.0, 0.0])).unwrap(), 1.0, epsilon = 1e-12);
        let c1 = linearized_battery(&k, t, grid(), 40, 3).unwrap();
        let c2 = linearized_battery(&k, t, Grid2D::new(1.0, 65).unwrap(), 40, 3).unwrap();
        assert!(c1.is_finite() && (c1 - c2).abs() / c2 < 0.1, "{c1} {c2}");
    }

    #[test]
    fn clamp_examples() {
        let u = GridMap::from_fn(grid(), |x, y| [x.sin(), x * y]);
        assert_eq!(clamp_gradients(&u, 1.0), u);
        let r = 1.0;
        let u = GridMap::affine(grid(), Mat2::new(10.0 * r, 0.0, 0.0, 0.0), [0.0, 0.0]);
        let c = clamp_gradients(&u, r);
        assert!(c.gradients().iter().all(|d| d.frob() <= 2.0 * r * (1.0 + 1e-12)));
        // a single spike
        let spiky = GridMap::from_fn(grid(), |x, y| [x + if x.abs() < 0.01 && y.abs() < 0.01 { 5.0 } else { 0.0 }, y]);
        let c = clamp_gradients(&spiky, r);
        assert!(c.gradients().iter().all(|d| d.frob() <= 2.0 * r * (1.0 + 1e-12)));
    }

    #[test]
    fn generators_and_shift_invariance() {
        let k = so2();
        for g in [Generator::Affine, Generator::AffinePlusBump, Generator::TangentWiggle] {
            let spec = TestMapSpec::new(g, 0.05);
            let u = generate(&spec, &k, grid(), None).unwrap();
            let r = find_best_m(&u, &k).unwrap();
            let shifted = GridMap { grid: u.grid, u1: u.u1.iter().map(|v| v + 3.0).collect(), u2: u.u2.iter().map(|v| v - 1.0).collect() };
            let r2 = find_best_m(&shifted, &k).unwrap();
            assert_abs_diff_eq!(r.eps, r2.eps, epsilon = 1e-12);
            assert_abs_diff_eq!(r.q_star, r2.q_star, epsilon = 1e-12);
            assert!(r.eps > 0.0);
            assert!(r.q_star <= r.brute_q * (1.0 + 1e-6));
        }
        assert!(generate(&TestMapSpec::new(Generator::PdeProjected, 0.1), &k, grid(), None).is_err());
        assert!("nope".parse::<Generator>().is_err());
        assert_eq!("tangent_wiggle".parse::<Generator>().unwrap().to_string(), "tangent_wiggle");
    }
}
