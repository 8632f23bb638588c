//! Closed curves `K` in the space of 2x2 matrices: construction, hypothesis
//! checks (ellipticity, absence of rank-one connections, invertible
//! tangents), conformal projection data, nearest-point projection and
//! tangent projectors.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::io::Read;
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ConformalPair, Mat2};
use crate::optim::golden_section_min;

pub const MIN_SAMPLES: usize = 64;

/// Relative threshold below which a determinant or a conformal difference is
/// treated as zero in the pairwise scans.
const DEGENERACY_TOL: f64 = 1e-12;

/// Built-in analytic curve families, all of the form `r [e^{it}, w(t)]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    /// `SO(2)`: `w = 0`.
    So2,
    /// `w = c e^{-it}`; elliptic for `c < 1`.
    Kc { c: f64 },
    /// `w = c e^{-2it}`; elliptic for `c < 1/2`.
    Winding2 { c: f64 },
}

impl Family {
    fn w(&self, t: f64, order: u32) -> Complex64 {
        let (c, freq) = match *self {
            Family::So2 => return Complex64::new(0.0, 0.0),
            Family::Kc { c } => (c, -1.0),
            Family::Winding2 { c } => (c, -2.0),
        };
        let i_freq = Complex64::new(0.0, freq);
        c * i_freq.powu(order) * Complex64::from_polar(1.0, freq * t)
    }

    /// Whether `H` with `z- = H(z+)` has a globally defined closed form.
    pub fn closed_form_h(&self) -> Option<ClosedFormH> {
        match *self {
            Family::So2 => Some(ClosedFormH::Zero),
            Family::Kc { c } => Some(ClosedFormH::ConjLinear { c }),
            Family::Winding2 { .. } => None,
        }
    }
}

/// Globally defined Lipschitz functions `H: C -> C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ClosedFormH {
    Zero,
    /// `H(z) = c conj(z)`.
    ConjLinear { c: f64 },
}

impl ClosedFormH {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        match *self {
            ClosedFormH::Zero => Complex64::new(0.0, 0.0),
            ClosedFormH::ConjLinear { c } => c * z.conj(),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match *self {
            ClosedFormH::Zero => 0.0,
            ClosedFormH::ConjLinear { c } => c.abs(),
        }
    }
}

/// Description of a curve before resampling.
#[derive(Debug, Clone, PartialEq)]
pub enum CurveSpec {
    Builtin { family: Family, scale: f64 },
    /// One period of samples `(t_i, M_i)` with `t` strictly increasing in `[0, 2pi)`.
    Table { t: Vec<f64>, m: Vec<Mat2> },
}

impl CurveSpec {
    pub fn so2() -> Self {
        CurveSpec::Builtin { family: Family::So2, scale: 1.0 }
    }

    pub fn kc(c: f64) -> Self {
        CurveSpec::Builtin { family: Family::Kc { c }, scale: 1.0 }
    }

    pub fn winding2(c: f64) -> Self {
        CurveSpec::Builtin { family: Family::Winding2 { c }, scale: 1.0 }
    }

    pub fn scaled(self, s: f64) -> Self {
        match self {
            CurveSpec::Builtin { family, scale } => CurveSpec::Builtin { family, scale: scale * s },
            CurveSpec::Table { t, m } => CurveSpec::Table { t, m: m.into_iter().map(|x| x * s).collect() },
        }
    }

    /// Parses `builtin:<name>[:key=val,...]`; anything else is read as a
    /// path to a curve CSV file.
    pub fn parse(s: &str) -> Result<Self> {
        let Some(rest) = s.strip_prefix("builtin:") else {
            return CurveSpec::from_csv_path(s);
        };
        let mut parts = rest.splitn(2, ':');
        let name = parts.next().unwrap_or_default();
        let mut c = None;
        let mut scale = 1.0;
        if let Some(kv) = parts.next() {
            for pair in kv.split(',').filter(|p| !p.is_empty()) {
                let (k, v) = pair
                    .split_once('=')
                    .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
                let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number `{v}` for `{k}`")))?;
                match k.trim() {
                    "c" => c = Some(v),
                    "r" | "scale" => scale = v,
                    other => return Err(Error::Parse(format!("unknown curve parameter `{other}`"))),
                }
            }
        }
        let family = match name {
            "so2" => Family::So2,
            "kc" => Family::Kc { c: c.unwrap_or(0.5) },
            "winding2" => Family::Winding2 { c: c.unwrap_or(0.2) },
            other => return Err(Error::Parse(format!("unknown builtin curve `{other}`"))),
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!("curve scale must be positive, got {scale}")));
        }
        Ok(CurveSpec::Builtin { family, scale })
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        CurveSpec::from_csv_reader(file)
    }

    /// Reads a curve table with header `t,m11,m12,m21,m22`.
    pub fn from_csv_reader(reader: impl Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let expected = ["t", "m11", "m12", "m21", "m22"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Parse(format!("curve CSV header must be `t,m11,m12,m21,m22`, got `{}`", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let mut t = Vec::new();
        let mut m = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("record {}: {e}", line + 1)))?;
            if vals.len() != 5 || vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Parse(format!("record {}: expected 5 finite values", line + 1)));
            }
            t.push(vals[0]);
            m.push(Mat2::new(vals[1], vals[2], vals[3], vals[4]));
        }
        let spec = CurveSpec::Table { t, m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_csv(&self, n: usize) -> Result<String> {
        let k = CurveK::build(self, n)?;
        let mut out = String::from("t,m11,m12,m21,m22\n");
        for (t, m) in k.t.iter().zip(&k.m) {
            out.push_str(&format!("{t},{},{},{},{}\n", m.a11, m.a12, m.a21, m.a22));
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let CurveSpec::Table { t, m } = self else { return Ok(()) };
        if t.len() < MIN_SAMPLES {
            return Err(Error::Parse(format!("curve table needs at least {MIN_SAMPLES} samples, got {}", t.len())));
        }
        if t.len() != m.len() {
            return Err(Error::Parse("curve table has mismatched columns".into()));
        }
        if t[0] < 0.0 || *t.last().unwrap() >= TAU || t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parse("curve parameter must be strictly increasing within [0, 2pi)".into()));
        }
        let max_step = m.windows(2).map(|w| (w[1] - w[0]).frob()).fold(0.0, f64::max);
        let gap = (m[0] - *m.last().unwrap()).frob();
        if gap > 5.0 * max_step.max(f64::MIN_POSITIVE) {
            return Err(Error::Parse(format!("curve table is not closed: wrap-around gap {gap:.3e} vs max step {max_step:.3e}")));
        }
        Ok(())
    }
}

impl fmt::Display for CurveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CurveSpec::Builtin { family, scale } => {
                let base = match family {
                    Family::So2 => "builtin:so2".to_string(),
                    Family::Kc { c } => format!("builtin:kc:c={c}"),
                    Family::Winding2 { c } => format!("builtin:winding2:c={c}"),
                };
                if *scale != 1.0 {
                    let sep = if matches!(family, Family::So2) { ':' } else { ',' };
                    write!(f, "{base}{sep}r={scale}")
                } else {
                    write!(f, "{base}")
                }
            }
            CurveSpec::Table { t, .. } => write!(f, "table[{}]", t.len()),
        }
    }
}

/// Periodic cubic Hermite interpolation on uniform knots over `[0, 2pi)`.
#[derive(Debug, Clone)]
struct PeriodicTable {
    vals: Vec<Mat2>,
    slopes: Vec<Mat2>,
}

impl PeriodicTable {
    fn step(&self) -> f64 {
        TAU / self.vals.len() as f64
    }

    fn locate(&self, t: f64) -> (usize, usize, f64) {
        let n = self.vals.len();
        let u = t.rem_euclid(TAU) / self.step();
        let i = (u.floor() as usize).min(n - 1);
        (i, (i + 1) % n, u - i as f64)
    }

    fn eval(&self, t: f64) -> Mat2 {
        let (i, j, s) = self.locate(t);
        let h = self.step();
        let s2 = s * s;
        let s3 = s2 * s;
        self.vals[i] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + self.slopes[i] * ((s3 - 2.0 * s2 + s) * h)
            + self.vals[j] * (-2.0 * s3 + 3.0 * s2)
            + self.slopes[j] * ((s3 - s2) * h)
    }
}

#[derive(Debug, Clone)]
enum Source {
    Builtin { family: Family, scale: f64 },
    Table { pos: PeriodicTable, vel: PeriodicTable, acc: PeriodicTable },
}

/// Densely and uniformly sampled closed curve with cached derivatives,
/// arc length and conformal coordinates.
#[derive(Debug, Clone)]
pub struct CurveK {
    spec: CurveSpec,
    source: Source,
    pub t: Vec<f64>,
    pub m: Vec<Mat2>,
    pub dm: Vec<Mat2>,
    pub ddm: Vec<Mat2>,
    /// Cumulative arc length at each sample; `arc[0] = 0`.
    pub arc: Vec<f64>,
    pub length: f64,
    pub zp: Vec<Complex64>,
    pub zm: Vec<Complex64>,
    pub dzp: Vec<Complex64>,
    pub dzm: Vec<Complex64>,
}

/// Result of a nearest-point projection onto the curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub t: f64,
    pub point: Mat2,
    pub dist: f64,
    /// Set when a second, non-adjacent local minimum lies within 1e-9 of the best distance.
    pub multiple: bool,
}

/// Summary of the curve hypotheses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub curve: String,
    pub samples: usize,
    pub c_star: Option<f64>,
    pub k_measured: Option<f64>,
    pub k_bound: Option<f64>,
    pub min_rankone_ratio: f64,
    pub reach_estimate: f64,
    pub length: f64,
    pub min_tangent_det: f64,
    pub elliptic: bool,
    pub rank_one_free: bool,
    pub tangent_invertible: bool,
    pub injective: bool,
    pub failure: Option<String>,
}

impl CurveReport {
    pub fn passed(&self) -> bool {
        self.elliptic && self.rank_one_free && self.tangent_invertible && self.injective
    }
}

fn hermite_table(vals: Vec<Mat2>, deriv: impl Fn(usize) -> Mat2) -> PeriodicTable {
    let slopes = (0..vals.len()).map(deriv).collect();
    PeriodicTable { vals, slopes }
}

/// Fourth-order periodic central difference of uniformly spaced samples.
fn periodic_derivative(v: &[Mat2], h: f64) -> Vec<Mat2> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let p1 = v[(i + 1) % n];
            let p2 = v[(i + 2) % n];
            let m1 = v[(i + n - 1) % n];
            let m2 = v[(i + n - 2) % n];
            ((p1 - m1) * 8.0 - (p2 - m2)) * (1.0 / (12.0 * h))
        })
        .collect()
}

impl CurveK {
    /// Resamples `spec` uniformly in the parameter with `n` samples.
    pub fn build(spec: &CurveSpec, n: usize) -> Result<CurveK> {
        if n < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {n}")));
        }
        spec.validate()?;
        let source = match spec {
            CurveSpec::Builtin { family, scale } => Source::Builtin { family: *family, scale: *scale },
            CurveSpec::Table { t, m } => {
                let len = t.len();
                // nonuniform Catmull-Rom slopes on the input knots
                let knot = |i: isize| -> f64 {
                    let q = i.div_euclid(len as isize);
                    t[i.rem_euclid(len as isize) as usize] + q as f64 * TAU
                };
                let val = |i: isize| m[i.rem_euclid(len as isize) as usize];
                let slope = |i: usize| {
                    let i = i as isize;
                    (val(i + 1) - val(i - 1)) * (1.0 / (knot(i + 1) - knot(i - 1)))
                };
                let eval = |x: f64| -> Mat2 {
                    // knot interval containing x (x in [0, 2pi))
                    let idx = t.partition_point(|&tk| tk <= x) as isize - 1;
                    let (a, b) = (knot(idx), knot(idx + 1));
                    let h = b - a;
                    let s = (x - a) / h;
                    let (s2, s3) = (s * s, s * s * s);
                    let ia = idx.rem_euclid(len as isize) as usize;
                    let ib = (idx + 1).rem_euclid(len as isize) as usize;
                    val(idx) * (2.0 * s3 - 3.0 * s2 + 1.0)
                        + slope(ia) * ((s3 - 2.0 * s2 + s) * h)
                        + val(idx + 1) * (-2.0 * s3 + 3.0 * s2)
                        + slope(ib) * ((s3 - s2) * h)
                };
                let h = TAU / n as f64;
                let pos: Vec<Mat2> = (0..n).map(|i| eval(i as f64 * h)).collect();
                let vel = periodic_derivative(&pos, h);
                let acc = periodic_derivative(&vel, h);
                let jerk = periodic_derivative(&acc, h);
                let pos_t = hermite_table(pos, |i| vel[i]);
                let vel_t = hermite_table(vel.clone(), |i| acc[i]);
                let acc_t = hermite_table(acc.clone(), |i| jerk[i]);
                Source::Table { pos: pos_t, vel: vel_t, acc: acc_t }
            }
        };
        let mut k = CurveK {
            spec: spec.clone(),
            source,
            t: Vec::with_capacity(n),
            m: Vec::with_capacity(n),
            dm: Vec::with_capacity(n),
            ddm: Vec::with_capacity(n),
            arc: Vec::with_capacity(n),
            length: 0.0,
            zp: Vec::with_capacity(n),
            zm: Vec::with_capacity(n),
            dzp: Vec::with_capacity(n),
            dzm: Vec::with_capacity(n),
        };
        let h = TAU / n as f64;
        for i in 0..n {
            let t = i as f64 * h;
            let (m, dm, ddm) = (k.eval(t), k.eval_deriv(t), k.eval_deriv2(t));
            let p = m.decompose();
            let dp = dm.decompose();
            k.t.push(t);
            k.m.push(m);
            k.dm.push(dm);
            k.ddm.push(ddm);
            k.zp.push(p.zp);
            k.zm.push(p.zm);
            k.dzp.push(dp.zp);
            k.dzm.push(dp.zm);
        }
        let mut s = 0.0;
        for i in 0..n {
            k.arc.push(s);
            s += 0.5 * h * (k.dm[i].frob() + k.dm[(i + 1) % n].frob());
        }
        k.length = s;
        if k.m.iter().chain(&k.dm).any(|m| !m.is_finite()) {
            return Err(Error::DegenerateCurve("non-finite samples".into()));
        }
        Ok(k)
    }

    pub fn spec(&self) -> &CurveSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn step(&self) -> f64 {
        TAU / self.n() as f64
    }

    pub fn family(&self) -> Option<(Family, f64)> {
        match self.source {
            Source::Builtin { family, scale } => Some((family, scale)),
            Source::Table { .. } => None,
        }
    }

    fn builtin_eval(family: &Family, scale: f64, t: f64, order: u32) -> Mat2 {
        let i = Complex64::new(0.0, 1.0);
        let zp = i.powu(order) * Complex64::from_polar(1.0, t);
        ConformalPair::new(zp * scale, family.w(t, order) * scale).recompose()
    }

    pub fn eval(&self, t: f64) -> Mat2 {
        match &self.source {
            Source::Builtin { family, scale } => Self::builtin_eval(family, *scale, t, 0),
            Source::Table { pos, .. } => pos.eval(t),
        }
    }

    pub fn eval_deriv(&self, t: f64) -> Mat2 {
        match &self.source {
            Source::Builtin { family, scale } => Self::builtin_eval(family, *scale, t, 1),
            Source::Table { vel, .. } => vel.eval(t),
        }
    }

    pub fn eval_deriv2(&self, t: f64) -> Mat2 {
        match &self.source {
            Source::Builtin { family, scale } => Self::builtin_eval(family, *scale, t, 2),
            Source::Table { acc, .. } => acc.eval(t),
        }
    }

    /// Radius of the smallest centred ball containing the samples.
    pub fn radius(&self) -> f64 {
        self.m.iter().map(Mat2::frob).fold(0.0, f64::max)
    }

    pub fn diameter(&self) -> f64 {
        let n = self.n();
        (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| (self.m[i] - self.m[j]).frob()).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    }

    /// Minimum of `|det M'(t_i)|` over the samples.
    pub fn min_tangent_det(&self) -> f64 {
        self.dm.iter().map(|d| d.det().abs()).fold(f64::INFINITY, f64::min)
    }

    /// Pairwise reduction over `i < j`, plus a diagonal term per sample.
    /// The reduction keeps the entry with the largest key, ties broken by
    /// the lowest `(i, j)`, so the result is independent of scheduling.
    fn pair_scan<F, D>(&self, pair: F, diag: D) -> (f64, usize, usize)
    where
        F: Fn(usize, usize) -> f64 + Sync,
        D: Fn(usize) -> f64 + Sync,
    {
        let n = self.n();
        let pick = |a: (f64, usize, usize), b: (f64, usize, usize)| {
            if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) || a.0.is_nan() {
                b
            } else {
                a
            }
        };
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = (diag(i), i, i);
                for j in i + 1..n {
                    best = pick(best, (pair(i, j), i, j));
                }
                best
            })
            .reduce(|| (f64::NEG_INFINITY, usize::MAX, usize::MAX), pick)
    }

    /// Smallest constant `C*` with `|M - M'|^2 <= C* det(M - M')` over all
    /// sample pairs, the diagonal limit taken through `M'`.
    pub fn ellipticity_constant(&self) -> Result<f64> {
        let ratio = |dz: Complex64, dw: Complex64| -> (f64, f64) {
            let (a, b) = (dz.norm_sqr(), dw.norm_sqr());
            (2.0 * (a + b), a - b)
        };
        // Negated det ratio first to detect failures, scanning for the worst pair.
        let (worst, i, j) = self.pair_scan(
            |i, j| {
                let (num, det) = ratio(self.zp[i] - self.zp[j], self.zm[i] - self.zm[j]);
                -det / num
            },
            |i| {
                let (num, det) = ratio(self.dzp[i], self.dzm[i]);
                -det / num
            },
        );
        if -worst <= DEGENERACY_TOL {
            let det = if i == j { self.dm[i].det() } else { (self.m[i] - self.m[j]).det() };
            return Err(Error::NotElliptic { i, j, det });
        }
        Ok(1.0 / -worst)
    }

    /// Minimum of `det(dM)/|dM|^2` over sample pairs (diagonal via `M'`).
    /// Positive for admissible curves; zero or negative values are reported,
    /// not raised.
    pub fn rank_one_scan(&self) -> f64 {
        let ratio = |dz: Complex64, dw: Complex64| {
            let (a, b) = (dz.norm_sqr(), dw.norm_sqr());
            (a - b) / (2.0 * (a + b))
        };
        let (neg, _, _) = self.pair_scan(
            |i, j| -ratio(self.zp[i] - self.zp[j], self.zm[i] - self.zm[j]),
            |i| -ratio(self.dzp[i], self.dzm[i]),
        );
        -neg
    }

    /// Measured Lipschitz constant of `H: z+ -> z-` on the samples and the
    /// bound `(C* - 1)/(C* + 1)`.
    pub fn conformal_data(&self) -> Result<(f64, f64)> {
        let c_star = self.ellipticity_constant()?;
        let scale = self.radius().max(f64::MIN_POSITIVE);
        let (k, i, j) = self.pair_scan(
            |i, j| {
                let dz = (self.zp[i] - self.zp[j]).norm();
                if dz <= DEGENERACY_TOL * scale {
                    f64::INFINITY
                } else {
                    (self.zm[i] - self.zm[j]).norm() / dz
                }
            },
            |i| self.dzm[i].norm() / self.dzp[i].norm(),
        );
        if k.is_infinite() {
            return Err(Error::InjectivityFailure { i, j });
        }
        Ok((k, (c_star - 1.0) / (c_star + 1.0)))
    }

    /// Nearest-point projection: coarse scan over the samples, then
    /// golden-section refinement in the parameter.
    pub fn project(&self, x: &Mat2) -> Projection {
        let n = self.n();
        let d2: Vec<f64> = self.m.iter().map(|m| (*x - *m).frob_sq()).collect();
        let best = (0..n).fold(0, |b, i| if d2[i] < d2[b] { i } else { b });
        let cyc = |a: usize, b: usize| {
            let d = a.abs_diff(b);
            d.min(n - d)
        };
        let second = (0..n)
            .filter(|&j| cyc(j, best) > 2)
            .filter(|&j| d2[j] <= d2[(j + 1) % n] && d2[j] <= d2[(j + n - 1) % n])
            .fold(None, |acc: Option<usize>, j| match acc {
                Some(b) if d2[b] <= d2[j] => Some(b),
                _ => Some(j),
            });
        let refine = |i: usize| -> (f64, f64) {
            let h = self.step();
            let t0 = self.t[i];
            let (mut t, mut f) = golden_section_min(|t| (*x - self.eval(t)).frob_sq(), t0 - h, t0 + h, 1e-10);
            // polish with Newton on the stationarity condition <M(t) - X, M'(t)> = 0
            for _ in 0..3 {
                let r = self.eval(t) - *x;
                let d = self.eval_deriv(t);
                let g2 = d.frob_sq() + r.dot(&self.eval_deriv2(t));
                if g2 <= 0.0 {
                    break;
                }
                let tn = t - r.dot(&d) / g2;
                let fnew = (*x - self.eval(tn)).frob_sq();
                if (tn - t).abs() > h || fnew > f {
                    break;
                }
                t = tn;
                f = fnew;
            }
            if f <= d2[i] {
                (t.rem_euclid(TAU), f)
            } else {
                (t0, d2[i])
            }
        };
        let (mut t, mut f) = refine(best);
        let mut multiple = false;
        if let Some(j) = second {
            let (t2, f2) = refine(j);
            let (d1, d2v) = (f.max(0.0).sqrt(), f2.max(0.0).sqrt());
            if (d2v - d1).abs() <= 1e-9 {
                multiple = true;
                if t2 < t {
                    t = t2;
                    f = f2;
                }
            } else if d2v < d1 {
                t = t2;
                f = f2;
            }
        }
        Projection { t, point: self.eval(t), dist: f.max(0.0).sqrt(), multiple }
    }

    /// Unit tangent `M'(t)/|M'(t)|`.
    pub fn unit_tangent(&self, t: f64) -> Result<Mat2> {
        let d = self.eval_deriv(t);
        let norm = d.frob();
        if norm <= f64::EPSILON * self.radius().max(1.0) {
            return Err(Error::DegenerateCurve(format!("zero tangent at t = {t}")));
        }
        Ok(d * (1.0 / norm))
    }

    /// Orthogonal projector onto the normal space `(T_M K)^perp`, acting on
    /// `vec(X) = (x11, x12, x21, x22)`.
    pub fn tangent_projector(&self, t: f64) -> Result<[[f64; 4]; 4]> {
        let tau = self.unit_tangent(t)?.to_vec4();
        let mut p = [[0.0; 4]; 4];
        for (i, row) in p.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if i == j { 1.0 } else { 0.0 } - tau[i] * tau[j];
            }
        }
        Ok(p)
    }

    /// Heuristic reach: the smaller of the minimal radius of curvature and
    /// half the smallest chord between points at least half a curvature
    /// circle apart along the curve.
    pub fn reach_estimate(&self) -> f64 {
        let n = self.n();
        let kappa_max = (0..n)
            .map(|i| {
                let v = self.dm[i];
                let speed2 = v.frob_sq();
                let a = self.ddm[i];
                let normal = a - v * (a.dot(&v) / speed2);
                normal.frob() / speed2
            })
            .fold(0.0, f64::max);
        let rho = if kappa_max > 0.0 { 1.0 / kappa_max } else { f64::INFINITY };
        let sep = (PI * rho).min(0.5 * self.length);
        let chord = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = f64::INFINITY;
                for j in i + 1..n {
                    let da = self.arc[j] - self.arc[i];
                    let cyc = da.min(self.length - da);
                    if cyc >= sep * (1.0 - 1e-9) {
                        best = best.min((self.m[i] - self.m[j]).frob());
                    }
                }
                best
            })
            .reduce(|| f64::INFINITY, f64::min);
        rho.min(0.5 * chord)
    }

    /// Runs every hypothesis check and gathers the results.
    pub fn analyze(&self) -> CurveReport {
        let min_tangent_det = self.min_tangent_det();
        let min_ratio = self.rank_one_scan();
        let mut report = CurveReport {
            curve: self.spec.to_string(),
            samples: self.n(),
            c_star: None,
            k_measured: None,
            k_bound: None,
            min_rankone_ratio: min_ratio,
            reach_estimate: self.reach_estimate(),
            length: self.length,
            min_tangent_det,
            elliptic: false,
            rank_one_free: min_ratio > 1e-8,
            tangent_invertible: min_tangent_det > DEGENERACY_TOL * self.radius().powi(2),
            injective: false,
            failure: None,
        };
        match self.ellipticity_constant() {
            Ok(c) => {
                report.c_star = Some(c);
                report.elliptic = true;
            }
            Err(e) => report.failure = Some(e.to_string()),
        }
        if report.elliptic {
            match self.conformal_data() {
                Ok((k, kb)) => {
                    report.k_measured = Some(k);
                    report.k_bound = Some(kb);
                    report.injective = true;
                }
                Err(e) => report.failure = Some(e.to_string()),
            }
        }
        report
    }

    /// Gate used before building fields: ellipticity, no rank-one
    /// connections and injective conformal projection.
    pub fn check_gates(&self) -> Result<CurveReport> {
        self.ellipticity_constant()?;
        let report = self.analyze();
        if !report.rank_one_free {
            let (t1, t2) = (0.0, 0.0);
            return Err(Error::RankOneFound { t1, t2, ratio: report.min_rankone_ratio });
        }
        self.conformal_data()?;
        if !report.tangent_invertible {
            return Err(Error::DegenerateCurve("tangent is not invertible".into()));
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn build(spec: CurveSpec, n: usize) -> CurveK {
        CurveK::build(&spec, n).unwrap()
    }

    #[test]
    fn so2_tangent_has_constant_norm_and_unit_determinant() {
        let k = build(CurveSpec::so2(), 256);
        for d in &k.dm {
            assert_abs_diff_eq!(d.frob_sq(), 2.0, epsilon = 1e-14);
            assert_abs_diff_eq!(d.det(), 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(k.length, TAU * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn family_conformal_samples() {
        let k = build(CurveSpec::kc(0.5), 128);
        for (p, m) in k.zp.iter().zip(&k.zm) {
            assert_abs_diff_eq!((*m - 0.5 * p.conj()).norm(), 0.0, epsilon = 1e-15);
        }
        let k = build(CurveSpec::winding2(0.2), 128);
        for m in &k.zm {
            assert_abs_diff_eq!(m.norm(), 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn parse_specs() {
        assert_eq!(CurveSpec::parse("builtin:so2").unwrap(), CurveSpec::so2());
        assert_eq!(CurveSpec::parse("builtin:kc:c=0.25").unwrap(), CurveSpec::kc(0.25));
        assert_eq!(CurveSpec::parse("builtin:winding2:c=0.1,r=2").unwrap(), CurveSpec::winding2(0.1).scaled(2.0));
        assert!(matches!(CurveSpec::parse("builtin:nope"), Err(Error::Parse(_))));
        assert!(matches!(CurveSpec::parse("builtin:kc:c=abc"), Err(Error::Parse(_))));
        for s in ["builtin:so2", "builtin:kc:c=0.25", "builtin:winding2:c=0.1,r=2", "builtin:so2:r=3"] {
            assert_eq!(CurveSpec::parse(s).unwrap().to_string(), s);
        }
    }

    #[test]
    fn ellipticity_examples() {
        let k = build(CurveSpec::so2(), 512);
        assert_abs_diff_eq!(k.ellipticity_constant().unwrap(), 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(k.rank_one_scan(), 0.5, epsilon = 1e-6);
        let k = build(CurveSpec::kc(0.5), 512);
        assert_abs_diff_eq!(k.ellipticity_constant().unwrap(), 10.0 / 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(k.rank_one_scan(), 0.3, epsilon = 1e-3);
        let k = build(CurveSpec::kc(1.0), 512);
        assert!(matches!(k.ellipticity_constant(), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn conformal_data_examples() {
        let (k, kb) = build(CurveSpec::so2(), 512).conformal_data().unwrap();
        assert_eq!(k, 0.0);
        assert_abs_diff_eq!(kb, 1.0 / 3.0, epsilon = 1e-9);
        let (k, _) = build(CurveSpec::kc(0.5), 512).conformal_data().unwrap();
        assert_abs_diff_eq!(k, 0.5, epsilon = 1e-12);
        let (k, kb) = build(CurveSpec::winding2(0.2), 512).conformal_data().unwrap();
        assert_abs_diff_eq!(k, 0.4, epsilon = 1e-3);
        assert!(k <= kb + 1e-6);
    }

    #[test]
    fn projection_examples() {
        let k = build(CurveSpec::so2(), 1024);
        let p = k.project(&k.m[37]);
        assert!(p.dist < 1e-12);
        assert!(!p.multiple);
        let p = k.project(&(Mat2::IDENTITY * 2.0));
        assert_abs_diff_eq!(p.dist, 2f64.sqrt(), epsilon = 1e-12);
        assert!((p.point - Mat2::IDENTITY).frob() < 1e-9);
        let p = k.project(&Mat2::diag(1.0, -1.0));
        assert!(p.multiple);
        assert_abs_diff_eq!(p.dist, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn projector_properties() {
        let k = build(CurveSpec::winding2(0.2), 256);
        let p = k.tangent_projector(0.7).unwrap();
        let tau = k.eval_deriv(0.7).to_vec4();
        let trace: f64 = (0..4).map(|i| p[i][i]).sum();
        assert_abs_diff_eq!(trace, 3.0, epsilon = 1e-14);
        for row in &p {
            let v: f64 = row.iter().zip(&tau).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-14);
        }
        // P^2 = P
        for i in 0..4 {
            for j in 0..4 {
                let s: f64 = (0..4).map(|l| p[i][l] * p[l][j]).sum();
                assert_abs_diff_eq!(s, p[i][j], epsilon = 1e-14);
            }
        }
        // identity on a vector orthogonal to the tangent
        let x = [tau[1], -tau[0], tau[3], -tau[2]];
        for i in 0..4 {
            let s: f64 = (0..4).map(|l| p[i][l] * x[l]).sum();
            assert_abs_diff_eq!(s, x[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn reach_so2_and_scaling() {
        let k = build(CurveSpec::so2(), 256);
        let r256 = k.reach_estimate();
        assert_abs_diff_eq!(r256, 2f64.sqrt(), epsilon = 1e-9);
        let r512 = build(CurveSpec::so2(), 512).reach_estimate();
        assert!((r512 - r256).abs() / r256 < 0.05);
        let k2 = build(CurveSpec::winding2(0.2).scaled(2.0), 256);
        let k1 = build(CurveSpec::winding2(0.2), 256);
        assert_abs_diff_eq!(k2.reach_estimate() / k1.reach_estimate(), 2.0, epsilon = 0.04);
    }

    #[test]
    fn table_curve_matches_builtin() {
        let spec = CurveSpec::winding2(0.2);
        let csv = spec.to_csv(200).unwrap();
        let table = CurveSpec::from_csv_reader(csv.as_bytes()).unwrap();
        let kt = build(table, 256);
        let kb = build(spec, 256);
        for i in 0..256 {
            assert!((kt.m[i] - kb.m[i]).frob() < 1e-5);
            assert!((kt.dm[i] - kb.dm[i]).frob() < 1e-3);
        }
        assert_abs_diff_eq!(kt.ellipticity_constant().unwrap(), kb.ellipticity_constant().unwrap(), epsilon = 1e-2);
    }

    #[test]
    fn malformed_tables_are_rejected() {
        assert!(CurveSpec::from_csv_reader("a,b\n1,2\n".as_bytes()).is_err());
        assert!(CurveSpec::from_csv_reader("t,m11,m12,m21,m22\n0,1,0,0,1\n".as_bytes()).is_err());
        // an open arc: half of SO(2)
        let mut s = String::from("t,m11,m12,m21,m22\n");
        for i in 0..100 {
            let t = i as f64 * PI / 100.0;
            s.push_str(&format!("{},{},{},{},{}\n", 2.0 * t, t.cos(), -t.sin(), t.sin(), t.cos()));
        }
        assert!(matches!(CurveSpec::from_csv_reader(s.as_bytes()), Err(Error::Parse(_))));
    }

    #[test]
    fn planted_rank_one_connection_is_detected() {
        // M(t) = diag(cos t, sin t) contains rank-one differences
        let t: Vec<f64> = (0..128).map(|i| i as f64 * TAU / 128.0).collect();
        let m = t.iter().map(|&t| Mat2::diag(t.cos(), t.sin())).collect();
        let k = build(CurveSpec::Table { t, m }, 256);
        assert!(k.rank_one_scan() <= 1e-8);
        assert!(k.ellipticity_constant().is_err());
        assert!(k.min_tangent_det() < 1e-6);
        let report = k.analyze();
        assert!(!report.passed());
    }

    #[test]
    fn self_intersecting_table_has_small_reach() {
        // figure-eight-like curve crossing itself at t = 0 and t = pi
        let t: Vec<f64> = (0..256).map(|i| i as f64 * TAU / 256.0).collect();
        let m = t.iter().map(|&t| Mat2::new((2.0 * t).sin(), t.sin(), 0.0, 1.0)).collect();
        let k = build(CurveSpec::Table { t, m }, 256);
        let spacing = k.m.windows(2).map(|w| (w[1] - w[0]).frob()).fold(0.0, f64::max);
        assert!(k.reach_estimate() <= spacing);
    }
}
