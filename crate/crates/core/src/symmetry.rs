//! Lie groups, actions, momentum maps, locked inertia and isotropy.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};

use crate::calculus::{pinv, wrap_angle, Chart, ChartState, Halton, Matrix, Trajectory, Vector};
use crate::error::Result;
use crate::lagrangian::LagrangianSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LieGroup {
    /// ℝᵏ under addition.
    Abelian(usize),
    /// Tᵏ; elements are stored as unreduced angles.
    Torus(usize),
    SO3,
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroupElement {
    Vec(Vector),
    Rot(Matrix3<f64>),
}

impl GroupElement {
    pub fn as_vec(&self) -> &Vector {
        match self {
            GroupElement::Vec(v) => v,
            GroupElement::Rot(_) => panic!("expected an abelian group element"),
        }
    }

    pub fn as_rot(&self) -> &Matrix3<f64> {
        match self {
            GroupElement::Rot(r) => r,
            GroupElement::Vec(_) => panic!("expected a rotation"),
        }
    }
}

impl LieGroup {
    pub fn dim(&self) -> usize {
        match *self {
            LieGroup::Abelian(k) | LieGroup::Torus(k) => k,
            LieGroup::SO3 => 3,
        }
    }

    pub fn is_abelian(&self) -> bool {
        !matches!(self, LieGroup::SO3)
    }

    pub fn identity(&self) -> GroupElement {
        match self {
            LieGroup::SO3 => GroupElement::Rot(Matrix3::identity()),
            _ => GroupElement::Vec(Vector::zeros(self.dim())),
        }
    }

    /// [ξ, η]; the cross product for SO(3).
    pub fn bracket(&self, xi: &Vector, eta: &Vector) -> Vector {
        match self {
            LieGroup::SO3 => Vector::from_column_slice(to3(xi).cross(&to3(eta)).as_slice()),
            _ => Vector::zeros(self.dim()),
        }
    }

    /// ad*_ξ μ, defined by ⟨ad*_ξ μ, η⟩ = ⟨μ, [ξ, η]⟩; equals μ × ξ for SO(3).
    pub fn ad_star(&self, xi: &Vector, mu: &Vector) -> Vector {
        match self {
            LieGroup::SO3 => Vector::from_column_slice(to3(mu).cross(&to3(xi)).as_slice()),
            _ => Vector::zeros(self.dim()),
        }
    }

    pub fn adjoint(&self, g: &GroupElement, xi: &Vector) -> Vector {
        match g {
            GroupElement::Rot(r) => Vector::from_column_slice((r * to3(xi)).as_slice()),
            GroupElement::Vec(_) => xi.clone(),
        }
    }

    /// Ad*_g μ = (Ad_g)ᵀ μ.
    pub fn coadjoint(&self, g: &GroupElement, mu: &Vector) -> Vector {
        match g {
            GroupElement::Rot(r) => Vector::from_column_slice((r.transpose() * to3(mu)).as_slice()),
            GroupElement::Vec(_) => mu.clone(),
        }
    }

    pub fn exp(&self, xi: &Vector) -> GroupElement {
        match self {
            LieGroup::SO3 => GroupElement::Rot(so3::exp(&to3(xi))),
            _ => GroupElement::Vec(xi.clone()),
        }
    }

    pub fn compose(&self, g: &GroupElement, h: &GroupElement) -> GroupElement {
        match (g, h) {
            (GroupElement::Rot(a), GroupElement::Rot(b)) => GroupElement::Rot(a * b),
            (GroupElement::Vec(a), GroupElement::Vec(b)) => GroupElement::Vec(a + b),
            _ => panic!("mixed group element kinds"),
        }
    }

    pub fn inverse(&self, g: &GroupElement) -> GroupElement {
        match g {
            GroupElement::Rot(a) => GroupElement::Rot(a.transpose()),
            GroupElement::Vec(a) => GroupElement::Vec(-a),
        }
    }

    /// Element built from a point of the unit cube.
    pub fn sample(&self, u: &[f64]) -> GroupElement {
        let xi = Vector::from_iterator(self.dim(), u.iter().map(|s| PI * (2.0 * s - 1.0)));
        self.exp(&xi)
    }

    /// Basis vector e_a of the Lie algebra.
    pub fn basis(&self, a: usize) -> Vector {
        let mut e = Vector::zeros(self.dim());
        e[a] = 1.0;
        e
    }
}

fn to3(v: &Vector) -> Vector3<f64> {
    assert_eq!(v.len(), 3, "so(3) vectors have three components");
    Vector3::new(v[0], v[1], v[2])
}

pub mod so3 {
    //! Rotation-matrix helpers and the ZXZ Euler-angle chart.

    use nalgebra::{Matrix3, Vector3};

    use crate::calculus::Matrix;

    pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
        Matrix3::new(0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0)
    }

    /// Rodrigues formula.
    pub fn exp(w: &Vector3<f64>) -> Matrix3<f64> {
        let th = w.norm();
        let k = hat(w);
        if th < 1e-8 {
            return Matrix3::identity() + k + k * k * 0.5;
        }
        Matrix3::identity() + k * (th.sin() / th) + k * k * ((1.0 - th.cos()) / (th * th))
    }

    fn rz(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
    }

    fn rx(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
    }

    /// A = Rz(φ) Rx(θ) Rz(ψ).
    pub fn euler_to_matrix(phi: f64, theta: f64, psi: f64) -> Matrix3<f64> {
        rz(phi) * rx(theta) * rz(psi)
    }

    /// Inverse of [`euler_to_matrix`] with θ ∈ [0, π]; ill-defined at the poles.
    pub fn matrix_to_euler(a: &Matrix3<f64>) -> (f64, f64, f64) {
        let theta = a[(2, 2)].clamp(-1.0, 1.0).acos();
        let phi = a[(0, 2)].atan2(-a[(1, 2)]);
        let psi = a[(2, 0)].atan2(a[(2, 1)]);
        (phi, theta, psi)
    }

    /// Body angular velocity = B(θ, ψ) (φ̇, θ̇, ψ̇).
    pub fn body_rate_matrix(theta: f64, psi: f64) -> Matrix {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = psi.sin_cos();
        Matrix::from_row_slice(3, 3, &[st * sp, cp, 0.0, st * cp, -sp, 0.0, ct, 0.0, 1.0])
    }

    /// ∂B/∂θ and ∂B/∂ψ.
    pub fn body_rate_matrix_deriv(theta: f64, psi: f64, wrt_theta: bool) -> Matrix {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = psi.sin_cos();
        if wrt_theta {
            Matrix::from_row_slice(3, 3, &[ct * sp, 0.0, 0.0, ct * cp, 0.0, 0.0, -st, 0.0, 0.0])
        } else {
            Matrix::from_row_slice(3, 3, &[st * cp, -sp, 0.0, -st * sp, -cp, 0.0, 0.0, 0.0, 0.0])
        }
    }

    /// Spatial angular velocity = S(φ, θ) (φ̇, θ̇, ψ̇).
    pub fn spatial_rate_matrix(phi: f64, theta: f64) -> Matrix {
        let (st, ct) = theta.sin_cos();
        let (sf, cf) = phi.sin_cos();
        Matrix::from_row_slice(3, 3, &[0.0, cf, sf * st, 0.0, sf, -cf * st, 1.0, 0.0, ct])
    }

    pub fn polar(a: &Matrix3<f64>) -> Matrix3<f64> {
        let svd = a.svd(true, true);
        svd.u.unwrap() * svd.v_t.unwrap()
    }

    pub fn orthogonality_defect(a: &Matrix3<f64>) -> f64 {
        (a.transpose() * a - Matrix3::identity()).amax()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// +1 for right actions, −1 for left actions.
    pub fn sign(self) -> f64 {
        match self {
            Side::Right => 1.0,
            Side::Left => -1.0,
        }
    }
}

type ActFn = Arc<dyn Fn(&GroupElement, &Vector) -> Vector + Send + Sync>;
type GenFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// A group action on a chart, with its infinitesimal generators.
#[derive(Clone)]
pub struct GroupAction {
    pub group: LieGroup,
    pub side: Side,
    pub chart: Arc<Chart>,
    act: ActFn,
    generators: GenFn,
}

impl fmt::Debug for GroupAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupAction")
            .field("group", &self.group)
            .field("side", &self.side)
            .field("chart", &self.chart.name)
            .finish()
    }
}

impl GroupAction {
    /// `generators(q)` is the dim×k matrix whose columns are σ_q(e_a).
    pub fn new(
        group: LieGroup,
        side: Side,
        chart: Arc<Chart>,
        act: impl Fn(&GroupElement, &Vector) -> Vector + Send + Sync + 'static,
        generators: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        GroupAction { group, side, chart, act: Arc::new(act), generators: Arc::new(generators) }
    }

    pub fn act(&self, g: &GroupElement, q: &Vector) -> Vector {
        (self.act)(g, q)
    }

    pub fn generator_matrix(&self, q: &Vector) -> Matrix {
        (self.generators)(q)
    }

    /// σ_q(ξ).
    pub fn generator(&self, q: &Vector, xi: &Vector) -> Vector {
        (self.generators)(q) * xi
    }

    /// Coordinate difference b − a, with angular coordinates folded.
    pub fn chart_diff(&self, b: &Vector, a: &Vector) -> Vector {
        Vector::from_fn(a.len(), |i, _| {
            let d = b[i] - a[i];
            if self.chart.angular[i] {
                wrap_angle(d)
            } else {
                d
            }
        })
    }

    /// Tangent map of q ↦ act(g, q) applied to v (five-point differences).
    pub fn push_forward(&self, g: &GroupElement, q: &Vector, v: &Vector) -> Vector {
        let q1 = self.act(g, q);
        let h = f64::EPSILON.powf(0.2) * q.amax().max(1.0) / v.amax().max(1e-300);
        let at = |s: f64| self.chart_diff(&self.act(g, &(q + v * (s * h))), &q1);
        (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h)
    }

    pub fn lift(&self, g: &GroupElement, s: &ChartState) -> ChartState {
        let v = if s.v.amax() == 0.0 { s.v.clone() } else { self.push_forward(g, &s.q, &s.v) };
        ChartState::new(self.act(g, &s.q), v)
    }

    /// d/dε act(exp(εξ), q) at ε = 0 by five-point differences.
    pub fn generator_fd(&self, q: &Vector, xi: &Vector) -> Vector {
        let h = f64::EPSILON.powf(0.2);
        let at = |s: f64| self.chart_diff(&self.act(&self.group.exp(&(xi * (s * h))), q), q);
        (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h)
    }

    /// Sample of (g, state) pairs away from chart singularities.
    pub fn samples(&self, n: usize, seed: u64) -> Vec<(GroupElement, ChartState)> {
        let d = self.chart.dim();
        let k = self.group.dim();
        let mut out = Vec::with_capacity(n);
        for u in Halton::new(2 * d + k, seed) {
            if out.len() == n {
                break;
            }
            let q = self.chart.sample_point(&u[..d]);
            let v = Vector::from_iterator(d, u[d..2 * d].iter().map(|s| 2.0 * s - 1.0));
            let g = self.group.sample(&u[2 * d..]);
            if self.chart.is_singular(&q) || self.chart.is_singular(&self.act(&g, &q)) {
                continue;
            }
            out.push((g, ChartState::new(q, v)));
        }
        out
    }
}

/// J_L(v_q)(ξ) = d/dε L(v_q + ε ξ_Q(q)), one component per basis element.
pub fn momentum_map(sys: &LagrangianSystem, action: &GroupAction, s: &ChartState) -> Vector {
    action.generator_matrix(&s.q).transpose() * sys.dl_dv(&s.q, &s.v)
}

/// I(ξ)(η) = d/dτ J_L(v_q + τ η_Q)(ξ), as a k×k matrix.
pub fn locked_inertia(sys: &LagrangianSystem, action: &GroupAction, s: &ChartState) -> Matrix {
    let sigma = action.generator_matrix(&s.q);
    let i = sigma.transpose() * sys.hess_vv(&s.q, &s.v) * &sigma;
    (&i + i.transpose()) * 0.5
}

/// Smallest velocity change moving `s` onto J_L = μ, using that J_L is affine
/// in v. Returns the new state and the leftover |J_L − μ|.
pub fn project_to_level(
    sys: &LagrangianSystem,
    action: &GroupAction,
    s: &ChartState,
    mu: &Vector,
) -> (ChartState, f64) {
    let n = s.dim();
    let j = |v: &Vector| momentum_map(sys, action, &ChartState::new(s.q.clone(), v.clone()));
    let j0 = j(&Vector::zeros(n));
    let cols: Vec<Vector> = (0..n)
        .map(|i| {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            j(&e) - &j0
        })
        .collect();
    let m = Matrix::from_columns(&cols);
    let mut v = s.v.clone();
    // two passes absorb any rounding left by the first
    for _ in 0..2 {
        v += pinv(&m, 1e-12) * (mu - j(&v));
    }
    let out = ChartState::new(s.q.clone(), v);
    let miss = (momentum_map(sys, action, &out) - mu).amax();
    (out, miss)
}

/// Supremum of |J_L(t) − J_L(0)| per component.
pub fn momentum_drift(traj: &Trajectory) -> Result<Vector> {
    let j = traj.channel("J_L")?;
    let j0 = &j[0];
    Ok(j.iter().fold(Vector::zeros(j0.len()), |acc, x| acc.zip_map(&(x - j0), |a, d| a.max(d.abs()))))
}

#[derive(Clone, Debug, PartialEq)]
pub struct InvarianceReport {
    pub l_invariant: bool,
    pub f_cond1: bool,
    pub f_cond2: bool,
    pub max_l_violation: f64,
    pub max_f1_violation: f64,
    pub max_f2_violation: f64,
}

impl InvarianceReport {
    pub fn all(&self) -> bool {
        self.l_invariant && self.f_cond1 && self.f_cond2
    }
}

const INVARIANCE_TOL: f64 = 1e-8;

/// Samples group elements and states; checks L(g·v) = L(v),
/// ⟨F(g·v), g·w⟩ = ⟨F(v), w⟩ and ⟨F(v), ξ_Q⟩ = 0.
pub fn check_invariance(
    sys: &LagrangianSystem,
    action: &GroupAction,
    n_samples: usize,
    seed: u64,
) -> InvarianceReport {
    let d = sys.dim();
    let (mut ml, mut mf1, mut mf2) = (0.0f64, 0.0f64, 0.0f64);
    for (g, s) in action.samples(n_samples, seed) {
        let gs = action.lift(&g, &s);
        let scale = sys.lagrangian(&s.q, &s.v).abs().max(1.0);
        ml = ml.max((sys.lagrangian(&gs.q, &gs.v) - sys.lagrangian(&s.q, &s.v)).abs() / scale);
        let f = sys.force(&s.q, &s.v);
        let fg = sys.force(&gs.q, &gs.v);
        for i in 0..d {
            let mut e = Vector::zeros(d);
            e[i] = 1.0;
            let ge = action.push_forward(&g, &s.q, &e);
            mf1 = mf1.max((fg.dot(&ge) - f[i]).abs());
        }
        let sigma = action.generator_matrix(&s.q);
        mf2 = mf2.max((sigma.transpose() * &f).amax());
    }
    InvarianceReport {
        l_invariant: ml <= INVARIANCE_TOL,
        f_cond1: mf1 <= INVARIANCE_TOL,
        f_cond2: mf2 <= INVARIANCE_TOL,
        max_l_violation: ml,
        max_f1_violation: mf1,
        max_f2_violation: mf2,
    }
}

/// Orthonormal basis of 𝔤_μ = ker(ξ ↦ ad*_ξ μ).
pub fn isotropy_subalgebra(group: &LieGroup, mu: &Vector) -> Vec<Vector> {
    let k = group.dim();
    let mut m = Matrix::zeros(k, k);
    for a in 0..k {
        m.set_column(a, &group.ad_star(&group.basis(a), mu));
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    (0..k)
        .filter(|&i| svd.singular_values[i] < 1e-10)
        .map(|i| vt.row(i).transpose())
        .collect()
}
