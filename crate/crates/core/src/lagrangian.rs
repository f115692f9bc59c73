//! Lagrangian systems, the Euler-Lagrange operator and intrinsically
//! constrained systems on fibred charts.

use std::fmt;
use std::sync::Arc;

use crate::calculus::{
    check_finite, default_step2, fd_hessian_vv, grad5, jacobian5, rk4, singular_extremes, solve_conditioned, Chart, ChartState,
    Halton, Jet, Matrix, Trajectory, Vector,
};
use crate::error::{Error, Result};
use crate::symmetry::{momentum_map, GroupAction};

pub type ScalarFn = Arc<dyn Fn(&Vector, &Vector) -> f64 + Send + Sync>;
pub type CovectorFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type GammaFn = Arc<dyn Fn(&Vector, &Vector) -> Matrix + Send + Sync>;
pub type TwoFormFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// Condition number above which a velocity Hessian counts as singular.
pub const HESSIAN_MAX_COND: f64 = 1e12;

/// Same threshold for Hessians obtained by finite differences, whose noise
/// floor sits near 1e-10 relative.
pub const FD_HESSIAN_MAX_COND: f64 = 1e8;

/// Analytic partial derivatives of a Lagrangian.
pub trait Partials: Send + Sync {
    fn dl_dq(&self, q: &Vector, v: &Vector) -> Vector;
    fn dl_dv(&self, q: &Vector, v: &Vector) -> Vector;
    fn hess_vv(&self, q: &Vector, v: &Vector) -> Matrix;
    /// Entry (i, j) is ∂²L/∂v_i∂q_j.
    fn hess_vq(&self, q: &Vector, v: &Vector) -> Matrix;
}

type MatrixFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;
type MatrixDerivFn = Arc<dyn Fn(&Vector, usize) -> Matrix + Send + Sync>;
type VectorFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type VectorDerivFn = Arc<dyn Fn(&Vector, usize) -> Vector + Send + Sync>;
type RealFn = Arc<dyn Fn(&Vector) -> f64 + Send + Sync>;

/// L = ½ vᵀM(q)v + α(q)·v − V(q), with coordinate derivatives of each piece.
#[derive(Clone)]
pub struct Mechanical {
    metric: MatrixFn,
    metric_deriv: MatrixDerivFn,
    one_form: Option<(VectorFn, VectorDerivFn)>,
    potential: Option<(RealFn, VectorFn)>,
}

impl Mechanical {
    pub fn new(
        metric: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        metric_deriv: impl Fn(&Vector, usize) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Mechanical {
            metric: Arc::new(metric),
            metric_deriv: Arc::new(metric_deriv),
            one_form: None,
            potential: None,
        }
    }

    pub fn with_one_form(
        mut self,
        alpha: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        alpha_deriv: impl Fn(&Vector, usize) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.one_form = Some((Arc::new(alpha), Arc::new(alpha_deriv)));
        self
    }

    pub fn with_potential(
        mut self,
        v: impl Fn(&Vector) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.potential = Some((Arc::new(v), Arc::new(grad)));
        self
    }

    pub fn metric(&self, q: &Vector) -> Matrix {
        (self.metric)(q)
    }

    pub fn lagrangian(&self, q: &Vector, v: &Vector) -> f64 {
        let mut l = 0.5 * v.dot(&((self.metric)(q) * v));
        if let Some((a, _)) = &self.one_form {
            l += a(q).dot(v);
        }
        if let Some((pot, _)) = &self.potential {
            l -= pot(q);
        }
        l
    }
}

impl Partials for Mechanical {
    fn dl_dq(&self, q: &Vector, v: &Vector) -> Vector {
        let mut g = Vector::from_fn(q.len(), |k, _| 0.5 * v.dot(&((self.metric_deriv)(q, k) * v)));
        if let Some((_, da)) = &self.one_form {
            for k in 0..q.len() {
                g[k] += da(q, k).dot(v);
            }
        }
        if let Some((_, grad)) = &self.potential {
            g -= grad(q);
        }
        g
    }

    fn dl_dv(&self, q: &Vector, v: &Vector) -> Vector {
        let mut p = (self.metric)(q) * v;
        if let Some((a, _)) = &self.one_form {
            p += a(q);
        }
        p
    }

    fn hess_vv(&self, q: &Vector, _v: &Vector) -> Matrix {
        (self.metric)(q)
    }

    fn hess_vq(&self, q: &Vector, v: &Vector) -> Matrix {
        let n = q.len();
        let mut m = Matrix::zeros(n, n);
        for k in 0..n {
            let mut col = (self.metric_deriv)(q, k) * v;
            if let Some((_, da)) = &self.one_form {
                col += da(q, k);
            }
            m.set_column(k, &col);
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForceKind {
    Zero,
    Gyroscopic,
    BaseCovector,
    General,
}

/// Force term F: TM → T*M.
#[derive(Clone)]
pub enum ForceTerm {
    Zero,
    /// F(v) = −i_v β, i.e. F_i = β_ij v^j.
    Gyroscopic(TwoFormFn),
    /// Covector on the first `base_dim` coordinates, zero on the fibre.
    BaseCovector { base_dim: usize, f: CovectorFn },
    General(CovectorFn),
}

impl fmt::Debug for ForceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ForceTerm::{:?}", self.kind())
    }
}

impl ForceTerm {
    pub fn gyroscopic(beta: impl Fn(&Vector) -> Matrix + Send + Sync + 'static) -> Self {
        ForceTerm::Gyroscopic(Arc::new(beta))
    }

    pub fn general(f: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static) -> Self {
        ForceTerm::General(Arc::new(f))
    }

    pub fn base_covector(
        base_dim: usize,
        f: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
    ) -> Self {
        ForceTerm::BaseCovector { base_dim, f: Arc::new(f) }
    }

    pub fn kind(&self) -> ForceKind {
        match self {
            ForceTerm::Zero => ForceKind::Zero,
            ForceTerm::Gyroscopic(_) => ForceKind::Gyroscopic,
            ForceTerm::BaseCovector { .. } => ForceKind::BaseCovector,
            ForceTerm::General(_) => ForceKind::General,
        }
    }

    pub fn eval(&self, q: &Vector, v: &Vector) -> Vector {
        match self {
            ForceTerm::Zero => Vector::zeros(v.len()),
            ForceTerm::Gyroscopic(beta) => beta(q) * v,
            ForceTerm::BaseCovector { base_dim, f } => {
                let fb = f(q, v);
                let mut out = Vector::zeros(v.len());
                out.rows_mut(0, *base_dim).copy_from(&fb);
                out
            }
            ForceTerm::General(f) => f(q, v),
        }
    }
}

/// The triple (Q, L, F) in one chart.
#[derive(Clone)]
pub struct LagrangianSystem {
    pub chart: Arc<Chart>,
    lagrangian: ScalarFn,
    pub force: ForceTerm,
    partials: Option<Arc<dyn Partials>>,
}

impl fmt::Debug for LagrangianSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LagrangianSystem")
            .field("chart", &self.chart.name)
            .field("force", &self.force)
            .field("analytic_partials", &self.partials.is_some())
            .finish()
    }
}

impl LagrangianSystem {
    pub fn new(
        chart: Arc<Chart>,
        lagrangian: impl Fn(&Vector, &Vector) -> f64 + Send + Sync + 'static,
        force: ForceTerm,
    ) -> Self {
        LagrangianSystem { chart, lagrangian: Arc::new(lagrangian), force, partials: None }
    }

    pub fn mechanical(chart: Arc<Chart>, mech: Mechanical, force: ForceTerm) -> Self {
        let m = mech.clone();
        LagrangianSystem {
            chart,
            lagrangian: Arc::new(move |q, v| m.lagrangian(q, v)),
            force,
            partials: Some(Arc::new(mech)),
        }
    }

    pub fn with_partials(mut self, partials: impl Partials + 'static) -> Self {
        self.partials = Some(Arc::new(partials));
        self
    }

    pub fn with_force(mut self, force: ForceTerm) -> Self {
        self.force = force;
        self
    }

    /// Copy of the system that ignores registered analytic partials.
    pub fn without_partials(&self) -> Self {
        LagrangianSystem { partials: None, ..self.clone() }
    }

    pub fn has_partials(&self) -> bool {
        self.partials.is_some()
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn lagrangian(&self, q: &Vector, v: &Vector) -> f64 {
        (self.lagrangian)(q, v)
    }

    pub fn lagrangian_fn(&self) -> ScalarFn {
        self.lagrangian.clone()
    }

    pub fn force(&self, q: &Vector, v: &Vector) -> Vector {
        self.force.eval(q, v)
    }

    pub fn dl_dq(&self, q: &Vector, v: &Vector) -> Vector {
        match &self.partials {
            Some(p) => p.dl_dq(q, v),
            None => grad5(|x| self.lagrangian(x, v), q),
        }
    }

    pub fn dl_dv(&self, q: &Vector, v: &Vector) -> Vector {
        match &self.partials {
            Some(p) => p.dl_dv(q, v),
            None => grad5(|w| self.lagrangian(q, w), v),
        }
    }

    pub fn hess_vv(&self, q: &Vector, v: &Vector) -> Matrix {
        match &self.partials {
            Some(p) => p.hess_vv(q, v),
            None => {
                let h = jacobian5(|w| grad5(|u| self.lagrangian(q, u), w), v);
                (&h + h.transpose()) * 0.5
            }
        }
    }

    pub fn hess_vq(&self, q: &Vector, v: &Vector) -> Matrix {
        match &self.partials {
            Some(p) => p.hess_vq(q, v),
            None => jacobian5(|x| grad5(|u| self.lagrangian(x, u), v), q),
        }
    }

    /// E_L = ⟨∂L/∂v, v⟩ − L.
    pub fn energy(&self, q: &Vector, v: &Vector) -> f64 {
        self.dl_dv(q, v).dot(v) - self.lagrangian(q, v)
    }

    fn guard(&self, q: &Vector, t: f64) -> Result<()> {
        if self.chart.is_singular(q) {
            Err(Error::ChartSingularity { chart: self.chart.name.clone(), t })
        } else {
            Ok(())
        }
    }

    /// ∂L/∂q − d/dt ∂L/∂v + F on a second-order jet.
    pub fn el_residual(&self, jet: &Jet) -> Result<Vector> {
        self.guard(&jet.q, f64::NAN)?;
        let (q, v, a) = (&jet.q, &jet.v, &jet.a);
        let ddt = self.hess_vv(q, v) * a + self.hess_vq(q, v) * v;
        Ok(self.dl_dq(q, v) - ddt + self.force(q, v))
    }

    /// Normal-form acceleration from M a = ∂L/∂q − (∂²L/∂v∂q) v + F.
    pub fn acceleration(&self, q: &Vector, v: &Vector) -> Result<Vector> {
        let rhs = self.dl_dq(q, v) - self.hess_vq(q, v) * v + self.force(q, v);
        check_finite(&rhs, "EL right-hand side")?;
        let limit = if self.has_partials() { HESSIAN_MAX_COND } else { FD_HESSIAN_MAX_COND };
        solve_conditioned(&self.hess_vv(q, v), &rhs, limit)
            .map_err(|condition| Error::SingularLagrangian { condition })
    }
}

/// Integrates EL(L) + F = 0 in normal form. Records `E_L` and, with an action, `J_L`.
pub fn integrate_full(
    sys: &LagrangianSystem,
    s0: &ChartState,
    t0: f64,
    t1: f64,
    dt: f64,
    action: Option<&GroupAction>,
) -> Result<Trajectory> {
    let n = sys.dim();
    assert_eq!(s0.dim(), n, "initial state has the wrong dimension");
    sys.guard(&s0.q, t0)?;
    let z0 = Vector::from_iterator(2 * n, s0.q.iter().chain(s0.v.iter()).cloned());
    let (times, points) = rk4(
        |t, z| {
            let q = z.rows(0, n).into_owned();
            let v = z.rows(n, n).into_owned();
            sys.guard(&q, t)?;
            let a = sys.acceleration(&q, &v)?;
            Ok(Vector::from_iterator(2 * n, v.iter().chain(a.iter()).cloned()))
        },
        &z0,
        t0,
        t1,
        dt,
    )?;
    let mut traj = Trajectory::new(sys.chart.clone());
    for (t, z) in times.into_iter().zip(points) {
        let s = ChartState::new(z.rows(0, n).into_owned(), z.rows(n, n).into_owned());
        traj.push_diag("E_L", Vector::from_element(1, sys.energy(&s.q, &s.v)));
        if let Some(act) = action {
            traj.push_diag("J_L", momentum_map(sys, act, &s));
        }
        traj.push(t, s);
    }
    Ok(traj)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConstraintClass {
    GyroscopicRegular,
    Configuration,
    Linear,
    General,
}

impl fmt::Display for ConstraintClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConstraintClass::GyroscopicRegular => "gyroscopic-regular",
            ConstraintClass::Configuration => "configuration",
            ConstraintClass::Linear => "linear",
            ConstraintClass::General => "general",
        })
    }
}

/// Connection on a fibred chart: horizontal fields ∂/∂x^i − Γ^a_i ∂/∂y^a.
#[derive(Clone)]
pub struct FibredConnection {
    gamma: GammaFn,
}

impl FibredConnection {
    pub fn new(gamma: impl Fn(&Vector, &Vector) -> Matrix + Send + Sync + 'static) -> Self {
        FibredConnection { gamma: Arc::new(gamma) }
    }

    pub fn zero(base_dim: usize, fibre_dim: usize) -> Self {
        Self::new(move |_, _| Matrix::zeros(fibre_dim, base_dim))
    }

    /// k×n coefficient matrix at (x, y).
    pub fn gamma(&self, x: &Vector, y: &Vector) -> Matrix {
        (self.gamma)(x, y)
    }
}

/// Intrinsically constrained system: a Lagrangian on a chart with
/// coordinates (x, y) that ignores ẏ.
#[derive(Clone, Debug)]
pub struct FibredSystem {
    pub sys: LagrangianSystem,
    pub base_dim: usize,
}

const N_CLASSIFY: usize = 20;

fn sample_states(chart: &Chart, seed: u64, count: usize) -> Vec<ChartState> {
    let n = chart.dim();
    Halton::new(2 * n, seed)
        .take(count)
        .map(|u| {
            let q = chart.sample_point(&u[..n]);
            let v = Vector::from_iterator(n, u[n..].iter().map(|s| 2.0 * s - 1.0));
            ChartState::new(q, v)
        })
        .collect()
}

impl FibredSystem {
    pub fn new(sys: LagrangianSystem, base_dim: usize, seed: u64) -> Result<Self> {
        assert!(base_dim <= sys.dim());
        let fs = FibredSystem { sys, base_dim };
        let k = fs.fibre_dim();
        for s in sample_states(&fs.sys.chart, seed, N_CLASSIFY) {
            let p = grad5(|w| fs.sys.lagrangian(&s.q, w), &s.v);
            let dep = p.rows(base_dim, k).amax();
            if dep > 1e-9 {
                return Err(Error::Config(format!(
                    "fibred Lagrangian depends on fibre velocities (|dL/dydot| = {dep:.3e})"
                )));
            }
        }
        Ok(fs)
    }

    pub fn fibre_dim(&self) -> usize {
        self.sys.dim() - self.base_dim
    }

    pub fn split(&self, q: &Vector) -> (Vector, Vector) {
        (q.rows(0, self.base_dim).into_owned(), q.rows(self.base_dim, self.fibre_dim()).into_owned())
    }

    /// ∂L/∂y^a + F_a.
    pub fn intrinsic_constraint_residual(&self, s: &ChartState) -> Vector {
        let r = self.sys.dl_dq(&s.q, &s.v) + self.sys.force(&s.q, &s.v);
        r.rows(self.base_dim, self.fibre_dim()).into_owned()
    }

    /// (horizontal, vertical) parts of the Euler-Lagrange residual.
    pub fn split_el_residual(&self, conn: &FibredConnection, jet: &Jet) -> Result<(Vector, Vector)> {
        let n = self.base_dim;
        let r = self.sys.el_residual(jet)?;
        let vert = self.intrinsic_constraint_residual(&jet.state());
        let (x, y) = self.split(&jet.q);
        let hor = r.rows(0, n).into_owned() - conn.gamma(&x, &y).transpose() * &vert;
        Ok((hor, vert))
    }

    /// Classification by force kind and numerical sampling of L in y.
    pub fn classify_constraint(&self, seed: u64) -> ConstraintClass {
        let (n, k) = (self.base_dim, self.fibre_dim());
        let samples = sample_states(&self.sys.chart, seed, N_CLASSIFY);
        match &self.sys.force {
            ForceTerm::Gyroscopic(beta) => {
                let regular = k > 0
                    && samples.iter().all(|s| {
                        let b = beta(&s.q).view((n, n), (k, k)).into_owned();
                        let (min, max) = singular_extremes(&b);
                        max > 0.0 && min > 1e-8 * max
                    });
                if regular {
                    ConstraintClass::GyroscopicRegular
                } else {
                    ConstraintClass::General
                }
            }
            ForceTerm::Zero | ForceTerm::BaseCovector { .. } => {
                let affine = samples.iter().all(|s| self.y_curvature(s) <= 1e-9);
                if affine {
                    ConstraintClass::Linear
                } else {
                    ConstraintClass::Configuration
                }
            }
            ForceTerm::General(_) => ConstraintClass::General,
        }
    }

    /// Largest second y-derivative of L at s, by wide central differences
    /// (exact for polynomials of degree two).
    fn y_curvature(&self, s: &ChartState) -> f64 {
        let (n, k) = (self.base_dim, self.fibre_dim());
        let f = |q: &Vector| self.sys.lagrangian(q, &s.v);
        let scale = self.sys.lagrangian(&s.q, &s.v).abs().max(1.0);
        let mut worst: f64 = 0.0;
        for a in 0..k {
            for b in 0..=a {
                let (ia, ib) = (n + a, n + b);
                let (ha, hb) = (1e-2 * s.q[ia].abs().max(1.0), 1e-2 * s.q[ib].abs().max(1.0));
                let at = |da: f64, db: f64| {
                    let mut q = s.q.clone();
                    q[ia] += da;
                    q[ib] += db;
                    f(&q)
                };
                let d = if a == b {
                    (at(ha, 0.0) - 2.0 * f(&s.q) + at(-ha, 0.0)) / (ha * ha)
                } else {
                    (at(ha, hb) - at(ha, -hb) - at(-ha, hb) + at(-ha, -hb)) / (4.0 * ha * hb)
                };
                worst = worst.max(d.abs() / scale);
            }
        }
        worst
    }

    /// Reads off L₀ and α when L is affine in the fibre coordinates.
    pub fn as_linear(&self) -> Option<LinearFibredSystem> {
        let n = self.base_dim;
        let k = self.fibre_dim();
        let lag = self.sys.lagrangian_fn();
        let embed = move |x: &Vector, xd: &Vector, y: &Vector| {
            let q = Vector::from_iterator(n + k, x.iter().chain(y.iter()).cloned());
            let v = Vector::from_iterator(n + k, xd.iter().cloned().chain(std::iter::repeat_n(0.0, k)));
            (q, v)
        };
        let lag0 = lag.clone();
        let l0 = move |x: &Vector, xd: &Vector| {
            let (q, v) = embed(x, xd, &Vector::zeros(k));
            lag0(&q, &v)
        };
        let alpha = move |x: &Vector, xd: &Vector| {
            let (q0, v) = embed(x, xd, &Vector::zeros(k));
            let base = lag(&q0, &v);
            Vector::from_fn(k, |a, _| {
                let mut e = Vector::zeros(k);
                e[a] = 1.0;
                let (q, v) = embed(x, xd, &e);
                lag(&q, &v) - base
            })
        };
        let fhat: Option<CovectorFn> = match &self.sys.force {
            ForceTerm::Zero => None,
            ForceTerm::BaseCovector { f, .. } => {
                let f = f.clone();
                Some(Arc::new(move |x: &Vector, xd: &Vector| {
                    let (q, v) = embed(x, xd, &Vector::zeros(k));
                    f(&q, &v)
                }))
            }
            _ => return None,
        };
        let chart = self.sys.chart.leading(&format!("{} base", self.sys.chart.name), n);
        Some(LinearFibredSystem { base: Arc::new(chart), l0: Arc::new(l0), alpha: Arc::new(alpha), fhat, fibre_dim: k })
    }
}

/// ∂²f/∂w_i∂y_j by central corner differences.
fn mixed_second(f: impl Fn(&Vector, &Vector) -> f64, y: &Vector, w: &Vector) -> Matrix {
    let mut out = Matrix::zeros(w.len(), y.len());
    let (mut yy, mut ww) = (y.clone(), w.clone());
    for i in 0..w.len() {
        let hi = default_step2(w[i]);
        for j in 0..y.len() {
            let hj = default_step2(y[j]);
            let mut corner = |si: f64, sj: f64| {
                ww[i] = w[i] + si * hi;
                yy[j] = y[j] + sj * hj;
                let r = f(&yy, &ww);
                ww[i] = w[i];
                yy[j] = y[j];
                r
            };
            let d = corner(1.0, 1.0) - corner(1.0, -1.0) - corner(-1.0, 1.0) + corner(-1.0, -1.0);
            out[(i, j)] = d / (4.0 * hi * hj);
        }
    }
    out
}

/// Linear intrinsically constrained system L(x, ẋ, y) = L₀(x, ẋ) + ⟨α(x, ẋ), y⟩.
#[derive(Clone)]
pub struct LinearFibredSystem {
    pub base: Arc<Chart>,
    pub l0: ScalarFn,
    pub alpha: CovectorFn,
    pub fhat: Option<CovectorFn>,
    pub fibre_dim: usize,
}

impl LinearFibredSystem {
    pub fn constraint(&self, s: &ChartState) -> Vector {
        (self.alpha)(&s.q, &s.v)
    }

    /// Critical curves of L₀ on C = {α = 0}, with the fibre coordinates as
    /// multipliers (recorded in the `multiplier` channel, starting at `m0`).
    pub fn solve_constrained(
        &self,
        s0: &ChartState,
        m0: Option<&Vector>,
        t0: f64,
        t1: f64,
        dt: f64,
    ) -> Result<Trajectory> {
        let n = self.base.dim();
        let k = self.fibre_dim;
        let viol = self.constraint(s0).amax();
        if viol > 1e-9 {
            return Err(Error::ConstraintViolation { residual: viol });
        }
        let ltot = |x: &Vector, xd: &Vector, m: &Vector| (self.l0)(x, xd) + (self.alpha)(x, xd).dot(m);
        let rhs = |_t: f64, z: &Vector| -> Result<Vector> {
            let x = z.rows(0, n).into_owned();
            let xd = z.rows(n, n).into_owned();
            let m = z.rows(2 * n, k).into_owned();
            let st = ChartState::new(x.clone(), xd.clone());
            let hess = fd_hessian_vv(|y, w| ltot(y, w, &m), &st, None)?;
            let cmix = mixed_second(|y, w| ltot(y, w, &m), &x, &xd);
            let a_v = jacobian5(|w| (self.alpha)(&x, w), &xd);
            let a_x = jacobian5(|y| (self.alpha)(y, &xd), &x);
            let mut force = grad5(|y| ltot(y, &xd, &m), &x) - cmix * &xd;
            if let Some(f) = &self.fhat {
                force += f(&x, &xd);
            }
            let mut sys = Matrix::zeros(n + k, n + k);
            sys.view_mut((0, 0), (n, n)).copy_from(&((&hess + hess.transpose()) * 0.5));
            sys.view_mut((0, n), (n, k)).copy_from(&a_v.transpose());
            sys.view_mut((n, 0), (k, n)).copy_from(&a_v);
            let mut b = Vector::zeros(n + k);
            b.rows_mut(0, n).copy_from(&force);
            b.rows_mut(n, k).copy_from(&(-(a_x * &xd)));
            let sol = solve_conditioned(&sys, &b, HESSIAN_MAX_COND)
                .map_err(|condition| Error::SingularLagrangian { condition })?;
            let mut out = Vector::zeros(2 * n + k);
            out.rows_mut(0, n).copy_from(&xd);
            out.rows_mut(n, n + k).copy_from(&sol);
            Ok(out)
        };
        let m0 = m0.cloned().unwrap_or_else(|| Vector::zeros(k));
        let z0 = Vector::from_iterator(2 * n + k, s0.q.iter().chain(s0.v.iter()).chain(m0.iter()).cloned());
        let (times, points) = rk4(rhs, &z0, t0, t1, dt)?;
        let mut traj = Trajectory::new(self.base.clone());
        for (t, z) in times.into_iter().zip(points) {
            let s = ChartState::new(z.rows(0, n).into_owned(), z.rows(n, n).into_owned());
            traj.push_diag("multiplier", z.rows(2 * n, k).into_owned());
            traj.push_diag("constraint", self.constraint(&s));
            traj.push(t, s);
        }
        Ok(traj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    fn toy(k: f64) -> LagrangianSystem {
        let chart = Arc::new(Chart::new("toy", &["q1", "q2"]));
        LagrangianSystem::new(
            chart,
            move |q, v| v[0] * v[0] + v[0] * v[1] - 0.5 * k * q[0] * q[0],
            ForceTerm::Zero,
        )
    }

    fn oscillator() -> LagrangianSystem {
        let chart = Arc::new(Chart::new("line", &["q"]));
        LagrangianSystem::new(chart, |q, v| 0.5 * v[0] * v[0] - 0.5 * q[0] * q[0], ForceTerm::Zero)
    }

    #[test]
    fn el_residual_examples() {
        let chart = Arc::new(Chart::new("r3", &["x", "y", "z"]));
        let free = LagrangianSystem::new(chart, |_, v| 0.5 * v.norm_squared(), ForceTerm::Zero);
        let jet = Jet::new(v(&[1.0, 2.0, 3.0]), v(&[0.1, -0.2, 0.3]), Vector::zeros(3));
        assert!(free.el_residual(&jet).unwrap().amax() < 1e-9);
        let osc = oscillator();
        assert!(osc.el_residual(&Jet::new(v(&[1.0]), v(&[0.0]), v(&[-1.0]))).unwrap().amax() < 1e-8);
        let jet = Jet::new(v(&[0.3, -1.0]), v(&[1.0, 2.0]), Vector::zeros(2));
        assert!(toy(0.0).el_residual(&jet).unwrap().amax() < 1e-8);
    }

    #[test]
    fn toy_full_integration_closed_form() {
        // q̇¹ is conserved, so q¹ = t and q̈² = −q¹ gives q² = −t³/6.
        let s0 = ChartState::from_slices(&[0.0, 0.0], &[1.0, 0.0]);
        let tr = integrate_full(&toy(1.0), &s0, 0.0, 5.0, 1e-3, None).unwrap();
        assert!(tr.check_invariants());
        let err = tr
            .times
            .iter()
            .zip(&tr.states)
            .map(|(t, s)| (s.q[0] - t).abs().max((s.q[1] + t.powi(3) / 6.0).abs()))
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn singular_hessian_is_reported() {
        let chart = Arc::new(Chart::new("deg", &["a", "b"]));
        let sys = LagrangianSystem::new(chart, |_, v| v[0] * v[0] + v[1], ForceTerm::Zero);
        let r = integrate_full(&sys, &ChartState::from_slices(&[0.0, 0.0], &[1.0, 1.0]), 0.0, 1.0, 0.1, None);
        assert!(matches!(r, Err(Error::SingularLagrangian { .. })));
    }

    #[test]
    fn chart_singularity_aborts() {
        let chart = Arc::new(Chart::new("line", &["q"]).with_singular_region(|q| q[0] > 0.5));
        let sys = LagrangianSystem::new(chart, |_, v| 0.5 * v[0] * v[0], ForceTerm::Zero);
        let r = integrate_full(&sys, &ChartState::from_slices(&[0.0], &[1.0]), 0.0, 1.0, 0.01, None);
        match r {
            Err(Error::ChartSingularity { t, .. }) => assert!(t > 0.49 && t < 0.52),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gyroscopic_force_does_no_work() {
        let chart = Arc::new(Chart::new("plane", &["x", "y"]));
        let beta = |q: &Vector| Matrix::from_row_slice(2, 2, &[0.0, 1.0 + q[0] * q[0], -1.0 - q[0] * q[0], 0.0]);
        let sys = LagrangianSystem::new(chart, |_, v| 0.5 * v.norm_squared(), ForceTerm::gyroscopic(beta));
        let tr = integrate_full(&sys, &ChartState::from_slices(&[0.2, 0.0], &[0.0, 1.0]), 0.0, 3.0, 1e-3, None).unwrap();
        for s in &tr.states {
            assert!(sys.force(&s.q, &s.v).dot(&s.v).abs() < 1e-12);
        }
        let e = tr.channel("E_L").unwrap();
        assert!(e.iter().map(|x| (x[0] - e[0][0]).abs()).fold(0.0, f64::max) < 1e-9);
    }

    #[test]
    fn mechanical_partials_match_fd() {
        let chart = Arc::new(Chart::new("polar", &["r", "th"]).with_bounds(&[(0.5, 2.0), (-3.0, 3.0)]));
        let mech = Mechanical::new(
            |q| Matrix::from_diagonal(&v(&[1.0, q[0] * q[0]])),
            |q, k| if k == 0 { Matrix::from_diagonal(&v(&[0.0, 2.0 * q[0]])) } else { Matrix::zeros(2, 2) },
        )
        .with_one_form(|q| v(&[0.0, q[0].sin()]), |q, k| if k == 0 { v(&[0.0, q[0].cos()]) } else { v(&[0.0, 0.0]) })
        .with_potential(|q| q[0].powi(3) * q[1].cos(), |q| v(&[3.0 * q[0] * q[0] * q[1].cos(), -q[0].powi(3) * q[1].sin()]));
        let sys = LagrangianSystem::mechanical(chart, mech, ForceTerm::Zero);
        let fd = sys.without_partials();
        for s in sample_states(&sys.chart, 3, 10) {
            assert!((sys.dl_dq(&s.q, &s.v) - fd.dl_dq(&s.q, &s.v)).amax() < 1e-8);
            assert!((sys.dl_dv(&s.q, &s.v) - fd.dl_dv(&s.q, &s.v)).amax() < 1e-8);
            assert!((sys.hess_vv(&s.q, &s.v) - fd.hess_vv(&s.q, &s.v)).amax() < 1e-6);
            assert!((sys.hess_vq(&s.q, &s.v) - fd.hess_vq(&s.q, &s.v)).amax() < 1e-6);
        }
    }

    fn fibred_sample() -> FibredSystem {
        let chart = Arc::new(Chart::new("xy", &["x", "y"]));
        let sys = LagrangianSystem::new(chart, |q, v| 0.5 * v[0] * v[0] - q[0] * q[1] - 0.5 * q[1] * q[1], ForceTerm::Zero);
        FibredSystem::new(sys, 1, 0).unwrap()
    }

    #[test]
    fn fibred_rejects_fibre_velocity() {
        let chart = Arc::new(Chart::new("xy", &["x", "y"]));
        let sys = LagrangianSystem::new(chart, |_, v| 0.5 * v[0] * v[0] + v[1] * v[1], ForceTerm::Zero);
        assert!(matches!(FibredSystem::new(sys, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn split_residual_is_gamma_independent_on_constraint() {
        let fs = fibred_sample();
        // ∂L/∂y = -x - y vanishes on this jet
        let jet = Jet::new(v(&[0.7, -0.7]), v(&[0.3, 1.1]), v(&[0.4, -2.0]));
        let g1 = FibredConnection::zero(1, 1);
        let g2 = FibredConnection::new(|x, y| Matrix::from_element(1, 1, x[0] * 3.0 - y[0]));
        let (h1, v1) = fs.split_el_residual(&g1, &jet).unwrap();
        let (h2, v2) = fs.split_el_residual(&g2, &jet).unwrap();
        assert!(v1.amax() < 1e-9 && v2.amax() < 1e-9);
        assert!((h1 - h2).amax() < 1e-9);
    }

    #[test]
    fn zero_gamma_gives_plain_x_block() {
        let fs = fibred_sample();
        let jet = Jet::new(v(&[0.2, 0.5]), v(&[-0.3, 0.8]), v(&[1.0, 0.0]));
        let (h, _) = fs.split_el_residual(&FibredConnection::zero(1, 1), &jet).unwrap();
        let full = fs.sys.el_residual(&jet).unwrap();
        assert!((h[0] - full[0]).abs() < 1e-12);
    }

    #[test]
    fn classification() {
        assert_eq!(fibred_sample().classify_constraint(0), ConstraintClass::Configuration);
        let chart = Arc::new(Chart::new("xy", &["x", "y"]));
        let lin = LagrangianSystem::new(chart.clone(), |_, v| 0.5 * v[0] * v[0], ForceTerm::Zero);
        let lin = LagrangianSystem::new(chart.clone(), move |q, w| lin.lagrangian(q, w) + q[1] * (w[0] - 1.0), ForceTerm::Zero);
        assert_eq!(FibredSystem::new(lin, 1, 0).unwrap().classify_constraint(0), ConstraintClass::Linear);
        let chart3 = Arc::new(Chart::new("xyz", &["x", "y1", "y2"]));
        let gyro = LagrangianSystem::new(chart3, |q, _| -q[1] * q[1], ForceTerm::gyroscopic(|_| {
            Matrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, -2.0, 0.0])
        }));
        assert_eq!(FibredSystem::new(gyro, 1, 0).unwrap().classify_constraint(0), ConstraintClass::GyroscopicRegular);
        let gen = LagrangianSystem::new(chart, |_, v| 0.5 * v[0] * v[0], ForceTerm::general(|_, v| -v));
        assert_eq!(FibredSystem::new(gen, 1, 0).unwrap().classify_constraint(0), ConstraintClass::General);
    }

    #[test]
    fn linear_constrained_free_motion() {
        // L = ½(ẋ₁² + ẋ₂²) + y(ẋ₀ − 2): ẋ₀ pinned to 2, the rest free.
        let chart = Arc::new(Chart::new("lin", &["u", "a", "b", "m"]));
        let sys = LagrangianSystem::new(chart, |_, v| 0.5 * (v[1] * v[1] + v[2] * v[2]), ForceTerm::Zero);
        let sys = LagrangianSystem::new(sys.chart.clone(), move |q, w| sys.lagrangian(q, w) + q[3] * (w[0] - 2.0), ForceTerm::Zero);
        let fs = FibredSystem::new(sys, 3, 0).unwrap();
        let lin = fs.as_linear().unwrap();
        let s0 = ChartState::from_slices(&[0.0, 1.0, -1.0], &[2.0, 0.5, 0.25]);
        let tr = lin.solve_constrained(&s0, None, 0.0, 2.0, 1e-2).unwrap();
        let last = tr.last().unwrap();
        assert!((last.q[0] - 4.0).abs() < 1e-9);
        assert!((last.q[1] - 2.0).abs() < 1e-9);
        assert!((last.q[2] + 0.5).abs() < 1e-9);
        let bad = ChartState::from_slices(&[0.0, 1.0, -1.0], &[1.0, 0.5, 0.25]);
        assert!(matches!(lin.solve_constrained(&bad, None, 0.0, 1.0, 0.1), Err(Error::ConstraintViolation { .. })));
    }
}
