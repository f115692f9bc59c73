//! Principal connections, local trivializations, curvature and the two-form β^μ.

use std::fmt;
use std::sync::Arc;

use crate::calculus::{jacobian5, pinv, singular_extremes, Chart, ChartState, Matrix, Vector};
use crate::error::{Error, Result};
use crate::lagrangian::LagrangianSystem;
use crate::symmetry::{locked_inertia, GroupAction, GroupElement, LieGroup, Side};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Mechanical,
    Coefficients,
    Flat,
}

type FormFn = Arc<dyn Fn(&Vector) -> Matrix + Send + Sync>;

/// A principal connection ω, stored as the k×dim matrix W(q) with ω(q)(v) = W(q) v.
#[derive(Clone)]
pub struct PrincipalConnection {
    pub action: GroupAction,
    form: FormFn,
    pub provenance: Provenance,
}

impl fmt::Debug for PrincipalConnection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PrincipalConnection")
            .field("action", &self.action)
            .field("provenance", &self.provenance)
            .finish()
    }
}

const AXIOM_TOL: f64 = 1e-8;
const AXIOM_SAMPLES: usize = 20;

impl PrincipalConnection {
    /// Builds the connection and checks ω(σ_q(ξ)) = ξ and equivariance at sampled points.
    pub fn new(
        action: GroupAction,
        form: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
        provenance: Provenance,
        seed: u64,
    ) -> Result<Self> {
        let conn = PrincipalConnection { action, form: Arc::new(form), provenance };
        let (repro, equiv) = conn.axiom_defects(AXIOM_SAMPLES, seed);
        if repro > AXIOM_TOL {
            return Err(Error::NotInvariant { what: "connection (generator reproduction)".into(), defect: repro });
        }
        if equiv > AXIOM_TOL {
            return Err(Error::NotInvariant { what: "connection (equivariance)".into(), defect: equiv });
        }
        Ok(conn)
    }

    /// (max |ω(σ_q(e_a)) − e_a|, max equivariance defect) over samples.
    pub fn axiom_defects(&self, n: usize, seed: u64) -> (f64, f64) {
        let group = self.action.group;
        let k = group.dim();
        let (mut repro, mut equiv) = (0.0f64, 0.0f64);
        for (g, s) in self.action.samples(n, seed) {
            let w = self.form_matrix(&s.q);
            let sigma = self.action.generator_matrix(&s.q);
            repro = repro.max((w * sigma - Matrix::identity(k, k)).amax());
            let gs = self.action.lift(&g, &s);
            let lhs = self.omega(&gs.q, &gs.v);
            let w0 = self.omega(&s.q, &s.v);
            let rhs = match self.action.side {
                Side::Right => group.adjoint(&group.inverse(&g), &w0),
                Side::Left => group.adjoint(&g, &w0),
            };
            equiv = equiv.max((lhs - rhs).amax());
        }
        (repro, equiv)
    }

    pub fn group(&self) -> LieGroup {
        self.action.group
    }

    pub fn form_matrix(&self, q: &Vector) -> Matrix {
        (self.form)(q)
    }

    pub fn omega(&self, q: &Vector, v: &Vector) -> Vector {
        (self.form)(q) * v
    }

    /// v − σ_q(ω(v)).
    pub fn horizontal_part(&self, q: &Vector, v: &Vector) -> Vector {
        v - self.action.generator(q, &self.omega(q, v))
    }

    /// ⟨μ, ω(q)⟩ as a covector on Q.
    pub fn omega_mu(&self, mu: &Vector, q: &Vector) -> Vector {
        self.form_matrix(q).transpose() * mu
    }

    /// dω^μ as an antisymmetric matrix: dω^μ(U, V) = Uᵀ D V.
    pub fn d_omega_mu(&self, mu: &Vector, q: &Vector) -> Matrix {
        exterior_derivative(|p| self.omega_mu(mu, p), q)
    }
}

/// D_ij = ∂_i θ_j − ∂_j θ_i for a covector field θ.
pub fn exterior_derivative(theta: impl Fn(&Vector) -> Vector, q: &Vector) -> Matrix {
    let j = jacobian5(theta, q);
    j.transpose() - j
}

/// Mechanical connection ω = I⁻¹ J with the kinetic metric ∂²L/∂v² at v = 0.
pub fn mechanical_connection(sys: &LagrangianSystem, action: &GroupAction, seed: u64) -> Result<PrincipalConnection> {
    let mut worst: f64 = 1.0;
    for (_, s) in action.samples(AXIOM_SAMPLES, seed) {
        let s0 = ChartState::new(s.q.clone(), Vector::zeros(s.q.len()));
        let (min, max) = singular_extremes(&locked_inertia(sys, action, &s0));
        worst = worst.max(if min > 0.0 { max / min } else { f64::INFINITY });
    }
    if !(worst < 1e10) {
        return Err(Error::NotGRegular { worst_condition: worst });
    }
    let sys = sys.clone();
    let act = action.clone();
    let form = move |q: &Vector| {
        let h = sys.hess_vv(q, &Vector::zeros(q.len()));
        let sigma = act.generator_matrix(q);
        let st_h = sigma.transpose() * h;
        let inertia = &st_h * &sigma;
        inertia.lu().solve(&st_h).unwrap_or_else(|| Matrix::from_element(sigma.ncols(), q.len(), f64::NAN))
    };
    PrincipalConnection::new(action.clone(), form, Provenance::Mechanical, seed)
}

type ProjFn = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
type SectionFn = Arc<dyn Fn(&Vector, &Vector) -> Vector + Send + Sync>;
type GaugeFn = Arc<dyn Fn(&Vector) -> GroupElement + Send + Sync>;

/// One local trivialization: coordinates x on Q/G, fibre coordinates y of
/// Q/G_μ → Q/G, a section of Q → Q/G_μ and the gauge map.
///
/// `gauge(q)` is the group element g with q = g · s(π(q)) for a fixed section
/// s of Q → Q/G. ξ̃ components are taken at s: ξ̃ = Ad_g ξ for right actions
/// and ξ̃ = Ad_{g⁻¹} ξ for left actions. μ̃(y) is μ transported the same way.
#[derive(Clone)]
pub struct QuotientChart {
    /// Coordinates (x, y) on Q/G_μ.
    pub chart: Arc<Chart>,
    pub base_dim: usize,
    group: LieGroup,
    side: Side,
    base: ProjFn,
    fibre: ProjFn,
    section: SectionFn,
    gauge: GaugeFn,
}

impl fmt::Debug for QuotientChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuotientChart").field("chart", &self.chart).field("base_dim", &self.base_dim).finish()
    }
}

/// A point (v_x, y, ξ̃) in the coordinates of a [`QuotientChart`].
#[derive(Clone, Debug, PartialEq)]
pub struct QuotientPoint {
    pub x: Vector,
    pub v_x: Vector,
    pub y: Vector,
    pub xi: Vector,
}

impl QuotientChart {
    pub fn new(
        chart: Chart,
        base_dim: usize,
        action: &GroupAction,
        base: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        fibre: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        section: impl Fn(&Vector, &Vector) -> Vector + Send + Sync + 'static,
        gauge: impl Fn(&Vector) -> GroupElement + Send + Sync + 'static,
    ) -> Self {
        assert!(base_dim <= chart.dim());
        QuotientChart {
            chart: Arc::new(chart),
            base_dim,
            group: action.group,
            side: action.side,
            base: Arc::new(base),
            fibre: Arc::new(fibre),
            section: Arc::new(section),
            gauge: Arc::new(gauge),
        }
    }

    pub fn fibre_dim(&self) -> usize {
        self.chart.dim() - self.base_dim
    }

    pub fn algebra_dim(&self) -> usize {
        self.group.dim()
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn group(&self) -> LieGroup {
        self.group
    }

    pub fn base_chart(&self) -> Chart {
        self.chart.leading(&format!("{} base", self.chart.name), self.base_dim)
    }

    pub fn project_base(&self, q: &Vector) -> Vector {
        (self.base)(q)
    }

    pub fn project_fibre(&self, q: &Vector) -> Vector {
        (self.fibre)(q)
    }

    /// Coordinates (x, y) of π_μ(q).
    pub fn project(&self, q: &Vector) -> Vector {
        join(&self.project_base(q), &self.project_fibre(q))
    }

    pub fn section(&self, x: &Vector, y: &Vector) -> Vector {
        (self.section)(x, y)
    }

    pub fn gauge(&self, q: &Vector) -> GroupElement {
        (self.gauge)(q)
    }

    /// Splits (x, y) coordinates.
    pub fn split(&self, z: &Vector) -> (Vector, Vector) {
        (z.rows(0, self.base_dim).into_owned(), z.rows(self.base_dim, self.fibre_dim()).into_owned())
    }

    /// Jacobian of q ↦ x.
    pub fn base_jacobian(&self, q: &Vector) -> Matrix {
        jacobian5(|p| self.project_base(p), q)
    }

    /// Jacobian of q ↦ (x, y).
    pub fn projection_jacobian(&self, q: &Vector) -> Matrix {
        jacobian5(|p| self.project(p), q)
    }

    /// Components of [q, ξ]_G in the trivialization.
    pub fn to_tilde(&self, q: &Vector, xi: &Vector) -> Vector {
        let g = self.gauge(q);
        match self.side {
            Side::Right => self.group.adjoint(&g, xi),
            Side::Left => self.group.adjoint(&self.group.inverse(&g), xi),
        }
    }

    /// Representative ξ at q of the class with components ξ̃.
    pub fn from_tilde(&self, q: &Vector, xi_t: &Vector) -> Vector {
        let g = self.gauge(q);
        match self.side {
            Side::Right => self.group.adjoint(&self.group.inverse(&g), xi_t),
            Side::Left => self.group.adjoint(&g, xi_t),
        }
    }

    /// Matrix of ξ̃ ↦ ξ at q.
    pub fn from_tilde_matrix(&self, q: &Vector) -> Matrix {
        let k = self.group.dim();
        Matrix::from_columns(&(0..k).map(|a| self.from_tilde(q, &self.group.basis(a))).collect::<Vec<_>>())
    }

    /// μ̃ at q: ⟨μ̃, ξ̃⟩ = ⟨μ, ξ⟩.
    pub fn mu_tilde(&self, mu: &Vector, q: &Vector) -> Vector {
        self.from_tilde_matrix(q).transpose() * mu
    }
}

pub(crate) fn join(a: &Vector, b: &Vector) -> Vector {
    Vector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).cloned())
}

/// Tangent vector at q with Tπ(lift) = v_x and ω(lift) = 0.
pub fn horizontal_lift(conn: &PrincipalConnection, qc: &QuotientChart, v_x: &Vector, q: &Vector) -> Vector {
    horizontal_lift_matrix(conn, qc, q) * v_x
}

/// Matrix whose columns are the horizontal lifts of the base coordinate vectors.
pub fn horizontal_lift_matrix(conn: &PrincipalConnection, qc: &QuotientChart, q: &Vector) -> Matrix {
    let n = qc.base_dim;
    let dim = q.len();
    if n == 0 {
        return Matrix::zeros(dim, 0);
    }
    let p = qc.base_jacobian(q);
    let w = conn.form_matrix(q);
    let k = w.nrows();
    let mut m = Matrix::zeros(n + k, dim);
    m.view_mut((0, 0), (n, dim)).copy_from(&p);
    m.view_mut((n, 0), (k, dim)).copy_from(&w);
    let mut rhs = Matrix::zeros(n + k, n);
    rhs.view_mut((0, 0), (n, n)).fill_with_identity();
    if n + k == dim {
        if let Some(sol) = m.clone().lu().solve(&rhs) {
            return sol;
        }
    }
    pinv(&m, 1e-12) * rhs
}

/// Ω(v₁, v₂) = dω(hor v₁, hor v₂); the bracket term vanishes on horizontal vectors.
pub fn curvature(conn: &PrincipalConnection, q: &Vector, v1: &Vector, v2: &Vector) -> Vector {
    let h1 = conn.horizontal_part(q, v1);
    let h2 = conn.horizontal_part(q, v2);
    let k = conn.group().dim();
    let mut out = Vector::zeros(k);
    for a in 0..k {
        let e = conn.group().basis(a);
        let d = conn.d_omega_mu(&e, q);
        out[a] = h1.dot(&(d * &h2));
    }
    out
}

/// (v_x, y, ξ̃) of a full state, with the base point x.
pub fn quotient_coords(conn: &PrincipalConnection, qc: &QuotientChart, s: &ChartState) -> Result<QuotientPoint> {
    if conn.action.chart.is_singular(&s.q) {
        return Err(Error::ChartSingularity { chart: conn.action.chart.name.clone(), t: f64::NAN });
    }
    Ok(QuotientPoint {
        x: qc.project_base(&s.q),
        v_x: qc.base_jacobian(&s.q) * &s.v,
        y: qc.project_fibre(&s.q),
        xi: qc.to_tilde(&s.q, &conn.omega(&s.q, &s.v)),
    })
}

/// Inverse of [`quotient_coords`] at the gauge `h · section(x, y)` (h = e if `None`).
pub fn assemble(
    conn: &PrincipalConnection,
    qc: &QuotientChart,
    p: &QuotientPoint,
    gauge: Option<&GroupElement>,
) -> Result<ChartState> {
    let mut q = qc.section(&p.x, &p.y);
    if let Some(h) = gauge {
        q = conn.action.act(h, &q);
    }
    if conn.action.chart.is_singular(&q) {
        return Err(Error::ChartSingularity { chart: conn.action.chart.name.clone(), t: f64::NAN });
    }
    let v = horizontal_lift(conn, qc, &p.v_x, &q) + conn.action.generator(&q, &qc.from_tilde(&q, &p.xi));
    Ok(ChartState::new(q, v))
}

/// β^μ in (x, y) coordinates at section(x, y).
pub fn beta_mu(conn: &PrincipalConnection, qc: &QuotientChart, mu: &Vector, x: &Vector, y: &Vector) -> Matrix {
    let q = qc.section(x, y);
    let lift = pinv(&qc.projection_jacobian(&q), 1e-10);
    let d = conn.d_omega_mu(mu, &q);
    let b = lift.transpose() * d * &lift;
    (&b - b.transpose()) * 0.5
}

/// Block decomposition of β^μ.
#[derive(Clone, Debug)]
pub struct BetaBlocks {
    /// Ω̃^μ on horizontal lifts of the base coordinate vectors (n×n).
    pub omega_mu: Matrix,
    /// Horizontal-vertical block (n×ky); zero up to round-off.
    pub mixed: Matrix,
    /// Vertical block in y coordinates (ky×ky).
    pub vertical: Matrix,
    /// ∓⟨μ̃, [e_a, e_b]⟩ on the ξ̃ basis (− for right, + for left actions).
    pub ad_star_block: Matrix,
    /// ξ̃ ↦ ẏᵛ (ky×k).
    pub vertical_map: Matrix,
}

pub fn beta_mu_blocks(conn: &PrincipalConnection, qc: &QuotientChart, mu: &Vector, x: &Vector, y: &Vector) -> BetaBlocks {
    let (n, ky) = (qc.base_dim, qc.fibre_dim());
    let q = qc.section(x, y);
    let beta = beta_mu(conn, qc, mu, x, y);
    let jac = qc.projection_jacobian(&q);
    let hor = &jac * horizontal_lift_matrix(conn, qc, &q);
    let mut ey = Matrix::zeros(n + ky, ky);
    for a in 0..ky {
        ey[(n + a, a)] = 1.0;
    }
    let group = qc.group();
    let k = group.dim();
    let mu_t = qc.mu_tilde(mu, &q);
    let sign = -qc.side().sign();
    let ad = Matrix::from_fn(k, k, |a, b| sign * mu_t.dot(&group.bracket(&group.basis(a), &group.basis(b))));
    let sigma = conn.action.generator_matrix(&q);
    let vmap = jac.rows(n, ky) * sigma * qc.from_tilde_matrix(&q);
    BetaBlocks {
        omega_mu: hor.transpose() * &beta * &hor,
        mixed: hor.transpose() * &beta * &ey,
        vertical: ey.transpose() * &beta * &ey,
        ad_star_block: ad,
        vertical_map: vmap,
    }
}

/// D/Dt [q, e] = [q, ė ± [ω(q̇), e]] (+ for right, − for left actions), with ė
/// from five-point differences on the grid.
pub fn covariant_derivative(
    conn: &PrincipalConnection,
    times: &[f64],
    states: &[ChartState],
    values: &[Vector],
) -> Vec<Vector> {
    let group = conn.group();
    let sign = conn.action.side.sign();
    let de = crate::calculus::grid_derivative(times, values);
    states
        .iter()
        .zip(values)
        .zip(de)
        .map(|((s, e), d)| d + group.bracket(&conn.omega(&s.q, &s.v), e) * sign)
        .collect()
}
