//! Charts, states, finite differences and the fixed-step RK4 integrator.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

type Predicate = Arc<dyn Fn(&Vector) -> bool + Send + Sync>;

/// A named coordinate chart.
///
/// `bounds` is the box used when sampling states for numerical checks; it is
/// not a domain restriction. Angular coordinates are compared modulo 2π.
#[derive(Clone)]
pub struct Chart {
    pub name: String,
    pub coord_names: Vec<String>,
    pub angular: Vec<bool>,
    pub bounds: Vec<(f64, f64)>,
    singular: Option<Predicate>,
}

impl fmt::Debug for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart")
            .field("name", &self.name)
            .field("coord_names", &self.coord_names)
            .finish()
    }
}

impl Chart {
    pub fn new(name: &str, coord_names: &[&str]) -> Self {
        let n = coord_names.len();
        Chart {
            name: name.to_string(),
            coord_names: coord_names.iter().map(|s| s.to_string()).collect(),
            angular: vec![false; n],
            bounds: vec![(-1.0, 1.0); n],
            singular: None,
        }
    }

    pub fn with_angular(mut self, angular: &[bool]) -> Self {
        assert_eq!(angular.len(), self.dim());
        self.angular = angular.to_vec();
        self
    }

    pub fn with_bounds(mut self, bounds: &[(f64, f64)]) -> Self {
        assert_eq!(bounds.len(), self.dim());
        self.bounds = bounds.to_vec();
        self
    }

    pub fn with_singular_region(
        mut self,
        pred: impl Fn(&Vector) -> bool + Send + Sync + 'static,
    ) -> Self {
        self.singular = Some(Arc::new(pred));
        self
    }

    pub fn dim(&self) -> usize {
        self.coord_names.len()
    }

    /// Chart on the first `n` coordinates, without the singular region.
    pub fn leading(&self, name: &str, n: usize) -> Chart {
        Chart {
            name: name.to_string(),
            coord_names: self.coord_names[..n].to_vec(),
            angular: self.angular[..n].to_vec(),
            bounds: self.bounds[..n].to_vec(),
            singular: None,
        }
    }

    pub fn is_singular(&self, q: &Vector) -> bool {
        self.singular.as_ref().is_some_and(|p| p(q))
    }

    /// Maps a point of the unit cube into the sampling box.
    pub fn sample_point(&self, u: &[f64]) -> Vector {
        Vector::from_iterator(
            self.dim(),
            self.bounds.iter().zip(u).map(|(&(lo, hi), &s)| lo + (hi - lo) * s),
        )
    }
}

/// Singular region of an Euler-angle chart: θ within `tol` of 0 or π.
pub fn euler_pole_region(theta_index: usize, tol: f64) -> impl Fn(&Vector) -> bool + Send + Sync {
    move |q: &Vector| {
        let th = q[theta_index].rem_euclid(2.0 * PI);
        th < tol || (th - PI).abs() < tol || (2.0 * PI - th) < tol
    }
}

/// Position and velocity in some chart. The chart itself is carried by the
/// owning system or trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartState {
    pub q: Vector,
    pub v: Vector,
}

impl ChartState {
    pub fn new(q: Vector, v: Vector) -> Self {
        assert_eq!(q.len(), v.len(), "position and velocity lengths differ");
        ChartState { q, v }
    }

    pub fn from_slices(q: &[f64], v: &[f64]) -> Self {
        Self::new(Vector::from_column_slice(q), Vector::from_column_slice(v))
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }
}

/// Second-order jet (q, v, a).
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub q: Vector,
    pub v: Vector,
    pub a: Vector,
}

impl Jet {
    pub fn new(q: Vector, v: Vector, a: Vector) -> Self {
        Jet { q, v, a }
    }

    pub fn state(&self) -> ChartState {
        ChartState::new(self.q.clone(), self.v.clone())
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub chart: Arc<Chart>,
    pub times: Vec<f64>,
    pub states: Vec<ChartState>,
    pub diagnostics: BTreeMap<String, Vec<Vector>>,
}

impl Trajectory {
    pub fn new(chart: Arc<Chart>) -> Self {
        Trajectory { chart, times: Vec::new(), states: Vec::new(), diagnostics: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn push(&mut self, t: f64, s: ChartState) {
        self.times.push(t);
        self.states.push(s);
    }

    pub fn push_diag(&mut self, name: &str, value: Vector) {
        self.diagnostics.entry(name.to_string()).or_default().push(value);
    }

    pub fn channel(&self, name: &str) -> Result<&[Vector]> {
        self.diagnostics
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::DiagnosticsMissing(name.to_string()))
    }

    pub fn last(&self) -> Option<&ChartState> {
        self.states.last()
    }

    /// Monotone times, matching lengths, consistent dimensions.
    pub fn check_invariants(&self) -> bool {
        let dim = self.chart.dim();
        self.times.len() == self.states.len()
            && self.times.windows(2).all(|w| w[1] > w[0])
            && self.states.iter().all(|s| s.q.len() == dim && s.v.len() == dim)
            && self.diagnostics.values().all(|c| c.len() == self.times.len())
    }
}

pub fn check_finite(v: &Vector, what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NumericalDomain(what.to_string()))
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NumericalDomain(what.to_string()))
    }
}

/// Per-component default step for central first differences.
pub fn default_step(x: f64) -> f64 {
    f64::EPSILON.cbrt() * x.abs().max(1.0)
}

/// Per-component default step for central second differences.
pub fn default_step2(x: f64) -> f64 {
    f64::EPSILON.powf(0.25) * x.abs().max(1.0)
}

fn step5(x: f64) -> f64 {
    f64::EPSILON.powf(0.2) * x.abs().max(1.0)
}

/// Central-difference gradient. `h = None` uses [`default_step`] per component.
pub fn fd_gradient(f: impl Fn(&Vector) -> f64, p: &Vector, h: Option<f64>) -> Result<Vector> {
    let mut g = Vector::zeros(p.len());
    let mut x = p.clone();
    for i in 0..p.len() {
        let hi = h.unwrap_or_else(|| default_step(p[i]));
        x[i] = p[i] + hi;
        let fp = finite(f(&x), "fd_gradient")?;
        x[i] = p[i] - hi;
        let fm = finite(f(&x), "fd_gradient")?;
        x[i] = p[i];
        g[i] = (fp - fm) / (2.0 * hi);
    }
    Ok(g)
}

/// Second derivatives of `l(q, v)` in the velocity slots.
/// `h = None` uses [`default_step2`] per component.
pub fn fd_hessian_vv(
    l: impl Fn(&Vector, &Vector) -> f64,
    s: &ChartState,
    h: Option<f64>,
) -> Result<Matrix> {
    let n = s.v.len();
    let steps: Vec<f64> = (0..n).map(|i| h.unwrap_or_else(|| default_step2(s.v[i]))).collect();
    let mut v = s.v.clone();
    let f0 = finite(l(&s.q, &v), "fd_hessian_vv")?;
    let eval = |v: &Vector| finite(l(&s.q, v), "fd_hessian_vv");
    let mut hess = Matrix::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        v[i] = s.v[i] + hi;
        let fp = eval(&v)?;
        v[i] = s.v[i] - hi;
        let fm = eval(&v)?;
        v[i] = s.v[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let mut corner = |si: f64, sj: f64| {
                v[i] = s.v[i] + si * hi;
                v[j] = s.v[j] + sj * hj;
                let r = eval(&v);
                v[i] = s.v[i];
                v[j] = s.v[j];
                r
            };
            let d = corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?;
            let hij = d / (4.0 * hi * hj);
            hess[(i, j)] = hij;
            hess[(j, i)] = hij;
        }
    }
    Ok(hess)
}

/// Five-point derivative of a scalar function of one variable.
pub fn d1(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let h = step5(x);
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Five-point gradient, used where the central rule is not accurate enough.
pub fn grad5(f: impl Fn(&Vector) -> f64, p: &Vector) -> Vector {
    let mut x = p.clone();
    Vector::from_iterator(
        p.len(),
        (0..p.len()).map(|i| {
            let r = d1(
                |t| {
                    x[i] = t;
                    f(&x)
                },
                p[i],
            );
            x[i] = p[i];
            r
        }),
    )
}

/// Five-point Jacobian of a vector function: column `j` is ∂f/∂p_j.
pub fn jacobian5(f: impl Fn(&Vector) -> Vector, p: &Vector) -> Matrix {
    let m = f(p).len();
    let mut jac = Matrix::zeros(m, p.len());
    let mut x = p.clone();
    for j in 0..p.len() {
        let h = step5(p[j]);
        let mut at = |s: f64| {
            x[j] = p[j] + s * h;
            let r = f(&x);
            x[j] = p[j];
            r
        };
        let col = (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Fixed-step grid from `t0` to `t1`; the last step is shortened to land on `t1`.
pub fn time_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    assert!(t1 > t0 && dt > 0.0, "time grid needs t1 > t0 and dt > 0");
    let n = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
    let mut ts: Vec<f64> = (0..n).map(|k| t0 + k as f64 * dt).collect();
    ts.push(t1);
    ts
}

/// Classical RK4 on the grid of [`time_grid`].
pub fn rk4(
    mut vf: impl FnMut(f64, &Vector) -> Result<Vector>,
    z0: &Vector,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<(Vec<f64>, Vec<Vector>)> {
    let times = time_grid(t0, t1, dt);
    let mut points = Vec::with_capacity(times.len());
    let mut z = z0.clone();
    if !z.iter().all(|x| x.is_finite()) {
        return Err(Error::NumericalDomain("rk4 initial point".into()));
    }
    points.push(z.clone());
    let mut eval = |t: f64, z: &Vector, last_good: f64| -> Result<Vector> {
        match vf(t, z) {
            Ok(k) if k.iter().all(|x| x.is_finite()) => Ok(k),
            Ok(_) | Err(Error::NumericalDomain(_)) => Err(Error::IntegrationBlowup { last_good_t: last_good }),
            Err(e) => Err(e),
        }
    };
    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = eval(t, &z, t)?;
        let k2 = eval(t + 0.5 * h, &(&z + &k1 * (0.5 * h)), t)?;
        let k3 = eval(t + 0.5 * h, &(&z + &k2 * (0.5 * h)), t)?;
        let k4 = eval(t + h, &(&z + &k3 * h), t)?;
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::IntegrationBlowup { last_good_t: t });
        }
        points.push(z.clone());
    }
    Ok((times, points))
}

/// Time derivative of sampled values from the local degree-4 interpolant
/// (fewer nodes on short grids). Works on non-uniform grids.
pub fn grid_derivative(times: &[f64], values: &[Vector]) -> Vec<Vector> {
    assert_eq!(times.len(), values.len());
    let n = times.len();
    if n < 2 {
        return values.iter().map(|v| Vector::zeros(v.len())).collect();
    }
    let w = n.min(5);
    (0..n)
        .map(|j| {
            let start = j.saturating_sub(w / 2).min(n - w);
            let nodes = &times[start..start + w];
            let x = times[j];
            let mut d = Vector::zeros(values[j].len());
            for k in 0..w {
                let mut lk = 0.0;
                for m in (0..w).filter(|&m| m != k) {
                    let mut prod = 1.0 / (nodes[k] - nodes[m]);
                    for l in (0..w).filter(|&l| l != k && l != m) {
                        prod *= (x - nodes[l]) / (nodes[k] - nodes[l]);
                    }
                    lk += prod;
                }
                d += &values[start + k] * lk;
            }
            d
        })
        .collect()
}

/// Angle difference folded into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// Smallest and largest singular values.
pub fn singular_extremes(m: &Matrix) -> (f64, f64) {
    if m.is_empty() {
        return (1.0, 1.0);
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, max)
}

pub fn condition_number(m: &Matrix) -> f64 {
    let (min, max) = singular_extremes(m);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// LU solve that refuses matrices above `max_cond`; returns the condition number on refusal.
pub fn solve_conditioned(m: &Matrix, b: &Vector, max_cond: f64) -> std::result::Result<Vector, f64> {
    if m.nrows() == 0 {
        return Ok(Vector::zeros(0));
    }
    let cond = condition_number(m);
    if !(cond < max_cond) {
        return Err(cond);
    }
    m.clone().lu().solve(b).ok_or(f64::INFINITY)
}

/// Least-squares solve via SVD with relative threshold `rel`.
pub fn lstsq(m: &Matrix, b: &Vector, rel: f64) -> Vector {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vector::zeros(m.ncols());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.solve(b, rel * smax.max(f64::MIN_POSITIVE)).unwrap_or_else(|_| Vector::zeros(m.ncols()))
}

/// Moore-Penrose pseudo-inverse with relative threshold `rel`.
pub fn pinv(m: &Matrix, rel: f64) -> Matrix {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Matrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    svd.pseudo_inverse(rel * smax.max(f64::MIN_POSITIVE)).unwrap_or_else(|_| Matrix::zeros(m.ncols(), m.nrows()))
}

const PRIMES: [u32; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut f, mut r) = (inv, 0.0);
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Halton sequence in the unit cube. The seed shifts the starting index.
#[derive(Clone, Debug)]
pub struct Halton {
    dim: usize,
    index: u64,
}

impl Halton {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
        Halton { dim, index: 1 + seed.wrapping_mul(7919) % 1_000_003 }
    }
}

impl Iterator for Halton {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let i = self.index;
        self.index += 1;
        Some(PRIMES[..self.dim].iter().map(|&b| radical_inverse(i, b as u64)).collect())
    }
}
