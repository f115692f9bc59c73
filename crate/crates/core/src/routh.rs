//! Routhians, the reduced intrinsically constrained system on Q/G_μ and its
//! regular (κ-eliminated) form.

use std::sync::Arc;

use crate::calculus::{d1, jacobian5, lstsq, singular_extremes, Chart, ChartState, Matrix, Trajectory, Vector};
use crate::connection::{beta_mu, exterior_derivative, horizontal_lift_matrix, join, quotient_coords, PrincipalConnection, QuotientChart};
use crate::error::{Error, Result};
use crate::lagrangian::{ForceTerm, FibredSystem, LagrangianSystem};
use crate::symmetry::{check_invariance, isotropy_subalgebra};

/// R^μ = L − ⟨μ, ω⟩ on TQ.
#[derive(Clone, Debug)]
pub struct Routhian {
    pub sys: LagrangianSystem,
    pub conn: PrincipalConnection,
    pub mu: Vector,
}

impl Routhian {
    pub fn new(sys: LagrangianSystem, conn: PrincipalConnection, mu: Vector) -> Self {
        assert_eq!(mu.len(), conn.group().dim());
        Routhian { sys, conn, mu }
    }

    pub fn eval(&self, s: &ChartState) -> f64 {
        self.sys.lagrangian(&s.q, &s.v) - self.mu.dot(&self.conn.omega(&s.q, &s.v))
    }

    /// (Q, R^μ, F + G^μ) as a Lagrangian system in its own right.
    pub fn as_system(&self) -> LagrangianSystem {
        let (sys, conn, mu) = (self.sys.clone(), self.conn.clone(), self.mu.clone());
        let lag = {
            let (sys, conn, mu) = (sys.clone(), conn.clone(), mu.clone());
            move |q: &Vector, v: &Vector| sys.lagrangian(q, v) - mu.dot(&conn.omega(q, v))
        };
        let force = move |q: &Vector, v: &Vector| sys.force(q, v) + conn.d_omega_mu(&mu, q) * v;
        LagrangianSystem::new(self.sys.chart.clone(), lag, ForceTerm::general(force))
    }
}

/// Momentum map of R^μ, each component d/dε R^μ(v + ε (e_a)_Q) at ε = 0.
pub fn routhian_momentum(r: &Routhian, s: &ChartState) -> Vector {
    let sigma = r.conn.action.generator_matrix(&s.q);
    Vector::from_fn(sigma.ncols(), |a, _| {
        let dir = sigma.column(a).into_owned();
        d1(|e| r.eval(&ChartState::new(s.q.clone(), &s.v + &dir * e)), 0.0)
    })
}

/// G^μ(v) = −i_v dω^μ, as the covector D v with D the matrix of dω^μ.
pub fn gyro_force_full(r: &Routhian, s: &ChartState) -> Vector {
    r.conn.d_omega_mu(&r.mu, &s.q) * &s.v
}

/// Frame at q = section(z): horizontal lifts of base directions and the
/// images of the ξ̃ basis.
#[derive(Clone, Debug)]
pub struct Frame {
    pub q: Vector,
    pub hor: Matrix,
    pub vert: Matrix,
    pub mu_tilde: Vector,
}

impl Frame {
    pub fn velocity(&self, v_x: &Vector, xi: &Vector) -> Vector {
        &self.hor * v_x + &self.vert * xi
    }
}

/// Result of the G-regularity test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GRegularity {
    pub is_regular: bool,
    pub worst_condition: f64,
}

const KAPPA_TOL: f64 = 1e-12;
const KAPPA_MAX_ITER: usize = 50;

/// The reduced system (Q/G_μ → Q/G, 𝓡^μ, f + ζ^μ) in the coordinates of a
/// [`QuotientChart`]. Points of Q/G_μ are z = (x, y).
#[derive(Clone, Debug)]
pub struct ReducedSystem {
    pub sys: LagrangianSystem,
    pub conn: PrincipalConnection,
    pub qchart: QuotientChart,
    pub mu: Vector,
    pub g_mu_basis: Vec<Vector>,
}

/// Builds the reduced system after checking invariance of (L, F).
pub fn reduce(
    sys: &LagrangianSystem,
    conn: &PrincipalConnection,
    qchart: &QuotientChart,
    mu: &Vector,
    seed: u64,
) -> Result<ReducedSystem> {
    let report = check_invariance(sys, &conn.action, 20, seed);
    if !report.all() {
        let defect = report.max_l_violation.max(report.max_f1_violation).max(report.max_f2_violation);
        return Err(Error::NotInvariant { what: "Lagrangian system".into(), defect });
    }
    if mu.len() != conn.group().dim() {
        return Err(Error::Config(format!("momentum has {} components, group has dimension {}", mu.len(), conn.group().dim())));
    }
    let g_mu_basis = isotropy_subalgebra(&conn.group(), mu);
    if qchart.fibre_dim() + g_mu_basis.len() != conn.group().dim() {
        return Err(Error::Config(format!(
            "quotient chart has fibre dimension {}, but the isotropy algebra of this momentum has dimension {}",
            qchart.fibre_dim(),
            g_mu_basis.len()
        )));
    }
    // G_μ orbits must be the fibres of q ↦ (x, y)
    let mut defect: f64 = 0.0;
    for (_, s) in conn.action.samples(10, seed) {
        if conn.action.chart.is_singular(&s.q) {
            continue;
        }
        let jac = qchart.projection_jacobian(&s.q);
        for eta in &g_mu_basis {
            defect = defect.max((&jac * conn.action.generator(&s.q, eta)).amax());
        }
    }
    if defect > 1e-6 {
        return Err(Error::NotInvariant { what: "quotient chart under the isotropy group".into(), defect });
    }
    Ok(ReducedSystem { sys: sys.clone(), conn: conn.clone(), qchart: qchart.clone(), mu: mu.clone(), g_mu_basis })
}

impl ReducedSystem {
    pub fn base_dim(&self) -> usize {
        self.qchart.base_dim
    }

    pub fn fibre_dim(&self) -> usize {
        self.qchart.fibre_dim()
    }

    pub fn algebra_dim(&self) -> usize {
        self.qchart.algebra_dim()
    }

    pub fn split(&self, z: &Vector) -> (Vector, Vector) {
        self.qchart.split(z)
    }

    pub fn frame(&self, z: &Vector) -> Frame {
        let (x, y) = self.split(z);
        let q = self.qchart.section(&x, &y);
        let hor = horizontal_lift_matrix(&self.conn, &self.qchart, &q);
        let vert = self.conn.action.generator_matrix(&q) * self.qchart.from_tilde_matrix(&q);
        let mu_tilde = self.qchart.mu_tilde(&self.mu, &q);
        Frame { q, hor, vert, mu_tilde }
    }

    /// Full state at section(z) with velocity hor(v_x) + σ(ξ̃).
    pub fn full_state(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> ChartState {
        let f = self.frame(z);
        let v = f.velocity(v_x, xi);
        ChartState::new(f.q, v)
    }

    /// The reduced Lagrangian l(v_x, ξ̃).
    pub fn l(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> f64 {
        let s = self.full_state(z, v_x, xi);
        self.sys.lagrangian(&s.q, &s.v)
    }

    /// 𝓡^μ(v_x, y, ξ̃) = l(v_x, ξ̃) − ⟨μ̃(y), ξ̃⟩.
    pub fn routhian(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> f64 {
        let f = self.frame(z);
        let v = f.velocity(v_x, xi);
        self.sys.lagrangian(&f.q, &v) - f.mu_tilde.dot(xi)
    }

    pub fn mu_tilde(&self, z: &Vector) -> Vector {
        let (x, y) = self.split(z);
        self.qchart.mu_tilde(&self.mu, &self.qchart.section(&x, &y))
    }

    /// j_l(v_x, ξ̃) = 𝔽_ξ̃ l.
    pub fn j_l(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> Vector {
        let f = self.frame(z);
        f.vert.transpose() * self.sys.dl_dv(&f.q, &f.velocity(v_x, xi))
    }

    /// ξ̃-Hessian of l.
    pub fn xi_hessian(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> Matrix {
        let f = self.frame(z);
        let h = f.vert.transpose() * self.sys.hess_vv(&f.q, &f.velocity(v_x, xi)) * &f.vert;
        (&h + h.transpose()) * 0.5
    }

    /// Reduced force f = ⟨F, hor(e_i)⟩.
    pub fn force(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> Vector {
        let f = self.frame(z);
        f.hor.transpose() * self.sys.force(&f.q, &f.velocity(v_x, xi))
    }

    /// β^μ at z in (x, y) coordinates.
    pub fn beta(&self, z: &Vector) -> Matrix {
        let (x, y) = self.split(z);
        beta_mu(&self.conn, &self.qchart, &self.mu, &x, &y)
    }

    /// ζ^μ(ż) = −i_ż β^μ.
    pub fn zeta(&self, z: &Vector, zdot: &Vector) -> Vector {
        self.beta(z) * zdot
    }

    /// ẏ = Tπ_μ(hor(v_x) + σ(ξ̃)); the 𝔤_μ part of ξ̃ drops out.
    pub fn y_velocity(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> Vector {
        let f = self.frame(z);
        let n = self.base_dim();
        let jac = self.qchart.projection_jacobian(&f.q);
        jac.rows(n, self.fibre_dim()) * f.velocity(v_x, xi)
    }

    /// Reduced point of a full state: (z, v_x, ξ̃).
    pub fn project(&self, s: &ChartState) -> Result<(Vector, Vector, Vector)> {
        let p = quotient_coords(&self.conn, &self.qchart, s)?;
        Ok((join(&p.x, &p.y), p.v_x, p.xi))
    }

    /// Newton iteration for j_l(v_x, ξ̃) = target.
    pub fn kappa_solve(&self, z: &Vector, v_x: &Vector, target: &Vector, guess: Option<&Vector>) -> Result<Vector> {
        let f = self.frame(z);
        self.kappa_in_frame(&f, v_x, target, guess)
    }

    fn kappa_in_frame(&self, f: &Frame, v_x: &Vector, target: &Vector, guess: Option<&Vector>) -> Result<Vector> {
        let k = self.algebra_dim();
        let mut xi = guess.cloned().unwrap_or_else(|| Vector::zeros(k));
        let tol = KAPPA_TOL * target.amax().max(1.0);
        let mut res = f64::INFINITY;
        for it in 0..=KAPPA_MAX_ITER {
            let v = f.velocity(v_x, &xi);
            let r = f.vert.transpose() * self.sys.dl_dv(&f.q, &v) - target;
            res = r.amax();
            if !res.is_finite() {
                break;
            }
            if res <= tol && it > 0 {
                return Ok(xi);
            }
            let jac = f.vert.transpose() * self.sys.hess_vv(&f.q, &v) * &f.vert;
            let (min, max) = singular_extremes(&jac);
            if !(min > 1e-12 * max) {
                break;
            }
            match jac.lu().solve(&r) {
                Some(step) => xi -= step,
                None => break,
            }
        }
        Err(Error::KappaSolve { residual: res, iterations: KAPPA_MAX_ITER })
    }

    /// Condition of the ξ̃-Hessian of l at quasi-random reduced points. Small
    /// singular values are judged against the full velocity Hessian, so a
    /// 1×1 block that is zero up to difference noise still counts as singular.
    pub fn g_regularity_test(&self, samples: usize, seed: u64) -> GRegularity {
        let mut worst: f64 = 1.0;
        for (_, s) in self.conn.action.samples(samples, seed) {
            let Ok((z, v_x, xi)) = self.project(&s) else { continue };
            let (min, max) = singular_extremes(&self.xi_hessian(&z, &v_x, &xi));
            let full = self.full_state(&z, &v_x, &xi);
            let scale = max.max(singular_extremes(&self.sys.hess_vv(&full.q, &full.v)).1);
            let cond = if min > 1e-8 * scale && max > 0.0 { max / min } else { f64::INFINITY };
            worst = worst.max(cond);
        }
        GRegularity { is_regular: worst.is_finite(), worst_condition: worst }
    }

    /// Coordinates (x, y, ξ̃) for the intrinsically constrained form.
    pub fn fibred_chart(&self) -> Chart {
        let c = &self.qchart.chart;
        let k = self.algebra_dim();
        let mut names: Vec<String> = c.coord_names.clone();
        names.extend((0..k).map(|a| format!("xi{}", a + 1)));
        let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
        let mut angular = c.angular.clone();
        angular.extend(std::iter::repeat_n(false, k));
        let mut bounds = c.bounds.clone();
        bounds.extend(std::iter::repeat_n((-1.0, 1.0), k));
        Chart::new(&format!("{} x xi", c.name), &refs).with_angular(&angular).with_bounds(&bounds)
    }

    /// (M → Q/G, 𝓡^μ, f + ζ^μ) as a fibred system with base x and fibre (y, ξ̃).
    pub fn as_fibred(&self, seed: u64) -> Result<FibredSystem> {
        let (n, ky) = (self.base_dim(), self.fibre_dim());
        let nz = n + ky;
        let me = self.clone();
        let lag = move |m: &Vector, vm: &Vector| {
            let z = m.rows(0, nz).into_owned();
            let xi = m.rows(nz, m.len() - nz).into_owned();
            me.routhian(&z, &vm.rows(0, n).into_owned(), &xi)
        };
        let flat = self.conn.action.samples(10, seed).iter().all(|(_, s)| {
            self.project(s).map(|(z, _, _)| self.beta(&z).amax() < 1e-10).unwrap_or(false)
        });
        let force = if flat && matches!(self.sys.force, ForceTerm::Zero) {
            ForceTerm::Zero
        } else {
            let me = self.clone();
            ForceTerm::general(move |m: &Vector, vm: &Vector| {
                let z = m.rows(0, nz).into_owned();
                let xi = m.rows(nz, m.len() - nz).into_owned();
                let v_x = vm.rows(0, n).into_owned();
                let zdot = vm.rows(0, nz).into_owned();
                let mut out = Vector::zeros(m.len());
                out.rows_mut(0, nz).copy_from(&me.zeta(&z, &zdot));
                let f = me.force(&z, &v_x, &xi);
                let mut head = out.rows_mut(0, n);
                head += f;
                out
            })
        };
        let sys = LagrangianSystem::new(Arc::new(self.fibred_chart()), lag, force);
        FibredSystem::new(sys, n, seed)
    }
}

/// The regular form (Q/G_μ → Q/G, 𝓡̄^μ, f̄ + ζ^μ) with ξ̃ = κ_l(v_x, μ̃(y)).
#[derive(Clone, Debug)]
pub struct RegularReducedSystem {
    pub red: ReducedSystem,
}

/// Checks G-regularity and wraps the reduced system.
pub fn regular_reduce(red: &ReducedSystem, seed: u64) -> Result<RegularReducedSystem> {
    let g = red.g_regularity_test(20, seed);
    if !g.is_regular {
        return Err(Error::NotGRegular { worst_condition: g.worst_condition });
    }
    Ok(RegularReducedSystem { red: red.clone() })
}

/// Reduced vector field at one point.
#[derive(Clone, Debug)]
pub struct ReducedVelocity {
    pub zdot: Vector,
    pub accel: Vector,
    pub xi: Vector,
}

impl RegularReducedSystem {
    pub fn chart(&self) -> Arc<Chart> {
        self.red.qchart.chart.clone()
    }

    /// γ(v_x, y) = κ_l(v_x, μ̃(y)).
    pub fn gamma_section(&self, z: &Vector, v_x: &Vector, guess: Option<&Vector>) -> Result<Vector> {
        let f = self.red.frame(z);
        self.red.kappa_in_frame(&f, v_x, &f.mu_tilde, guess)
    }

    /// (𝓡̄^μ, ∂𝓡̄^μ/∂v_x, ξ̃).
    fn eval_full(&self, z: &Vector, v_x: &Vector, guess: Option<&Vector>) -> Result<(f64, Vector, Vector)> {
        let f = self.red.frame(z);
        let xi = self.red.kappa_in_frame(&f, v_x, &f.mu_tilde, guess)?;
        let v = f.velocity(v_x, &xi);
        let r = self.red.sys.lagrangian(&f.q, &v) - f.mu_tilde.dot(&xi);
        let p = f.hor.transpose() * self.red.sys.dl_dv(&f.q, &v);
        Ok((r, p, xi))
    }

    pub fn rbar(&self, z: &Vector, v_x: &Vector) -> Result<f64> {
        Ok(self.eval_full(z, v_x, None)?.0)
    }

    /// ∂𝓡̄^μ/∂v_x (the ξ̃ contribution drops out on the momentum constraint).
    pub fn momentum_x(&self, z: &Vector, v_x: &Vector) -> Result<Vector> {
        Ok(self.eval_full(z, v_x, None)?.1)
    }

    pub fn fbar(&self, z: &Vector, v_x: &Vector) -> Result<Vector> {
        let xi = self.gamma_section(z, v_x, None)?;
        Ok(self.red.force(z, v_x, &xi))
    }

    /// E = ⟨∂𝓡̄/∂v_x, v_x⟩ − 𝓡̄.
    pub fn energy(&self, z: &Vector, v_x: &Vector) -> Result<f64> {
        let (r, p, _) = self.eval_full(z, v_x, None)?;
        Ok(p.dot(v_x) - r)
    }

    /// ẏ from the vertical equation ẏᵛ = κ_l(v_x, μ̃(y)) mod 𝔤_μ.
    pub fn y_velocity(&self, z: &Vector, v_x: &Vector) -> Result<Vector> {
        let xi = self.gamma_section(z, v_x, None)?;
        Ok(self.red.y_velocity(z, v_x, &xi))
    }

    /// ẏ from the y-equations ∂_y𝓡̄ + (β^μ ż)_y = 0.
    pub fn y_velocity_gyroscopic(&self, z: &Vector, v_x: &Vector) -> Result<Vector> {
        let (n, ky) = (self.red.base_dim(), self.red.fibre_dim());
        let (grad, _) = self.z_derivatives(z, v_x, None)?;
        let b = self.red.beta(z);
        let byy = b.view((n, n), (ky, ky)).into_owned();
        let rhs = -(grad.rows(n, ky).into_owned() + b.view((n, 0), (ky, n)) * v_x);
        Ok(byy.clone().lu().solve(&rhs).unwrap_or_else(|| lstsq(&byy, &rhs, 1e-10)))
    }

    /// (∂𝓡̄/∂z, ∂p_x/∂z) by five-point differences.
    fn z_derivatives(&self, z: &Vector, v_x: &Vector, guess: Option<&Vector>) -> Result<(Vector, Matrix)> {
        let n = self.red.base_dim();
        let stacked = jacobian5(
            |zz| match self.eval_full(zz, v_x, guess) {
                Ok((r, p, _)) => Vector::from_iterator(n + 1, p.iter().cloned().chain(std::iter::once(r))),
                Err(_) => Vector::from_element(n + 1, f64::NAN),
            },
            z,
        );
        if stacked.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalDomain("reduced Routhian near z".into()));
        }
        let grad = stacked.row(n).transpose();
        Ok((grad, stacked.rows(0, n).into_owned()))
    }

    /// ∂²𝓡̄/∂v_x², the Schur complement of the full velocity Hessian.
    pub fn base_mass(&self, z: &Vector, v_x: &Vector, xi: &Vector) -> Matrix {
        let f = self.red.frame(z);
        let h = self.red.sys.hess_vv(&f.q, &f.velocity(v_x, xi));
        let hh = f.hor.transpose() * &h * &f.hor;
        let hv = f.hor.transpose() * &h * &f.vert;
        let vv = f.vert.transpose() * &h * &f.vert;
        let corr = match vv.clone().lu().solve(&hv.transpose()) {
            Some(s) => &hv * s,
            None => Matrix::zeros(hh.nrows(), hh.ncols()),
        };
        let m = hh - corr;
        (&m + m.transpose()) * 0.5
    }

    /// (ż, ẍ, ξ̃) at (z, v_x).
    pub fn vector_field(&self, z: &Vector, v_x: &Vector, guess: Option<&Vector>) -> Result<ReducedVelocity> {
        let n = self.red.base_dim();
        let f = self.red.frame(z);
        if self.red.conn.action.chart.is_singular(&f.q) {
            return Err(Error::ChartSingularity { chart: self.red.conn.action.chart.name.clone(), t: f64::NAN });
        }
        let xi = self.red.kappa_in_frame(&f, v_x, &f.mu_tilde, guess)?;
        let ydot = self.red.y_velocity(z, v_x, &xi);
        let zdot = join(v_x, &ydot);
        if n == 0 {
            return Ok(ReducedVelocity { zdot, accel: Vector::zeros(0), xi });
        }
        let (grad, dp_dz) = self.z_derivatives(z, v_x, Some(&xi))?;
        let zeta = self.red.zeta(z, &zdot);
        let fbar = self.red.force(z, v_x, &xi);
        let rhs = grad.rows(0, n) + fbar + zeta.rows(0, n) - dp_dz * &zdot;
        let mass = self.base_mass(z, v_x, &xi);
        let accel = mass
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularLagrangian { condition: f64::INFINITY })?;
        Ok(ReducedVelocity { zdot, accel, xi })
    }
}

/// Integrates the regular reduced equations from (x₀, v_x₀, y₀). The
/// trajectory lives on Q/G_μ coordinates with states (z, ż); channels `xi`
/// (κ_l), `momentum_constraint` (j_l − μ̃) and `E_R` (reduced energy).
pub fn integrate_reduced(
    rr: &RegularReducedSystem,
    x0: &Vector,
    v_x0: &Vector,
    y0: &Vector,
    t0: f64,
    t1: f64,
    dt: f64,
) -> Result<Trajectory> {
    let red = &rr.red;
    let (n, ky) = (red.base_dim(), red.fibre_dim());
    assert_eq!(x0.len(), n);
    assert_eq!(v_x0.len(), n);
    assert_eq!(y0.len(), ky);
    let nz = n + ky;
    let z0 = join(&join(x0, y0), v_x0);
    let mut warm: Option<Vector> = None;
    let rhs = |t: f64, w: &Vector| -> Result<Vector> {
        let z = w.rows(0, nz).into_owned();
        let v_x = w.rows(nz, n).into_owned();
        let vf = rr.vector_field(&z, &v_x, warm.as_ref()).map_err(|e| match e {
            Error::ChartSingularity { chart, .. } => Error::ChartSingularity { chart, t },
            e => e,
        })?;
        warm = Some(vf.xi.clone());
        Ok(join(&vf.zdot, &vf.accel))
    };
    let (times, points) = crate::calculus::rk4(rhs, &z0, t0, t1, dt)?;
    let mut traj = Trajectory::new(rr.chart());
    let mut guess: Option<Vector> = None;
    for (t, w) in times.into_iter().zip(points) {
        let z = w.rows(0, nz).into_owned();
        let v_x = w.rows(nz, n).into_owned();
        let vf = rr.vector_field(&z, &v_x, guess.as_ref())?;
        let mismatch = red.j_l(&z, &v_x, &vf.xi) - red.mu_tilde(&z);
        traj.push_diag("momentum_constraint", mismatch);
        traj.push_diag("E_R", Vector::from_element(1, rr.energy(&z, &v_x)?));
        traj.push_diag("xi", vf.xi.clone());
        guess = Some(vf.xi);
        traj.push(t, ChartState::new(z, vf.zdot));
    }
    Ok(traj)
}

/// Maximum discrepancies in the connection-change identities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConnectionChange {
    pub routhian: f64,
    pub zeta: f64,
}

impl ConnectionChange {
    pub fn max(&self) -> f64 {
        self.routhian.max(self.zeta)
    }
}

/// Compares the reductions of (L, F) with two connections at sampled points.
///
/// With δ = ω₂ − ω₁ and δ̃^μ = ⟨μ̃, δ̃⟩ on Q/G_μ, checks
/// 𝓡₂(v_x, y, ξ̃ + δ̃(v_x)) = 𝓡₁(v_x, y, ξ̃) − ⟨δ̃^μ, v_x⟩ and
/// ζ₂ = ζ₁ − i_ż dδ̃^μ.
pub fn connection_change_check(
    red1: &ReducedSystem,
    red2: &ReducedSystem,
    samples: usize,
    seed: u64,
) -> ConnectionChange {
    let mut out = ConnectionChange { routhian: 0.0, zeta: 0.0 };
    let n = red1.base_dim();
    let nz = n + red1.fibre_dim();
    let delta_mu = |z: &Vector| -> Vector {
        let f = red1.frame(z);
        let d = red2.conn.form_matrix(&f.q) * &f.hor;
        let d_tilde = Matrix::from_columns(
            &(0..n).map(|i| red1.qchart.to_tilde(&f.q, &d.column(i).into_owned())).collect::<Vec<_>>(),
        );
        let mut cov = Vector::zeros(nz);
        if n > 0 {
            cov.rows_mut(0, n).copy_from(&(d_tilde.transpose() * &f.mu_tilde));
        }
        cov
    };
    for (_, s) in red1.conn.action.samples(samples, seed) {
        let Ok((z, v_x, xi)) = red1.project(&s) else { continue };
        let f = red1.frame(&z);
        let shift = if n > 0 {
            let d = red2.conn.form_matrix(&f.q) * (&f.hor * &v_x);
            red1.qchart.to_tilde(&f.q, &d)
        } else {
            Vector::zeros(xi.len())
        };
        let lhs = red2.routhian(&z, &v_x, &(&xi + shift));
        let rhs = red1.routhian(&z, &v_x, &xi) - delta_mu(&z).rows(0, n).dot(&v_x);
        out.routhian = out.routhian.max((lhs - rhs).abs());
        let zdot = join(&v_x, &red1.y_velocity(&z, &v_x, &xi));
        let d_delta = exterior_derivative(delta_mu, &z);
        let z2 = red2.zeta(&z, &zdot);
        let z1 = red1.zeta(&z, &zdot) + d_delta * &zdot;
        out.zeta = out.zeta.max((z2 - z1).amax());
    }
    out
}

/// ∂_y𝓡^μ paired with η̃ against ∓⟨ad*_ξ̃ μ̃, η̃⟩ (− right, + left), over all
/// basis η̃ whose vertical image is nonzero. Returns the largest defect.
pub fn y_derivative_identity_defect(red: &ReducedSystem, samples: usize, seed: u64) -> f64 {
    let (n, ky, k) = (red.base_dim(), red.fibre_dim(), red.algebra_dim());
    if ky == 0 {
        return 0.0;
    }
    let group = red.qchart.group();
    let sign = -red.qchart.side().sign();
    let mut worst: f64 = 0.0;
    for (_, s) in red.conn.action.samples(samples, seed) {
        let Ok((z, v_x, xi)) = red.project(&s) else { continue };
        let grad = crate::calculus::grad5(|zz| red.routhian(zz, &v_x, &xi), &z);
        let gy = grad.rows(n, ky).into_owned();
        let (x, y) = red.split(&z);
        let q = red.qchart.section(&x, &y);
        let vmap = red.qchart.projection_jacobian(&q).rows(n, ky)
            * red.conn.action.generator_matrix(&q)
            * red.qchart.from_tilde_matrix(&q);
        let mu_t = red.mu_tilde(&z);
        for a in 0..k {
            let eta = group.basis(a);
            let lhs = gy.dot(&(&vmap * &eta));
            let rhs = sign * group.ad_star(&xi, &mu_t).dot(&eta);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::Chart;
    use crate::connection::Provenance;
    use crate::lagrangian::ForceTerm;
    use crate::symmetry::{GroupAction, GroupElement, LieGroup, Side};

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    /// L = ½ȧ² + ½(1 + a²)ḃ² − ½a² with ℝ translating b.
    fn plane() -> (LagrangianSystem, PrincipalConnection, QuotientChart) {
        let chart = Arc::new(Chart::new("plane", &["a", "b"]).with_bounds(&[(-1.0, 1.0), (-1.0, 1.0)]));
        let sys = LagrangianSystem::new(
            chart.clone(),
            |q, v| 0.5 * v[0] * v[0] + 0.5 * (1.0 + q[0] * q[0]) * v[1] * v[1] - 0.5 * q[0] * q[0],
            ForceTerm::Zero,
        );
        let act = GroupAction::new(
            LieGroup::Abelian(1),
            Side::Left,
            chart,
            |g, q| v(&[q[0], q[1] + g.as_vec()[0]]),
            |_| Matrix::from_column_slice(2, 1, &[0.0, 1.0]),
        );
        let conn = PrincipalConnection::new(act.clone(), |_| Matrix::from_row_slice(1, 2, &[0.0, 1.0]), Provenance::Flat, 0).unwrap();
        let qc = QuotientChart::new(
            Chart::new("line", &["a"]),
            1,
            &act,
            |q| v(&[q[0]]),
            |_| Vector::zeros(0),
            |x, _| v(&[x[0], 0.0]),
            |q| GroupElement::Vec(v(&[q[1]])),
        );
        (sys, conn, qc)
    }

    #[test]
    fn routhian_subtracts_the_momentum_term() {
        let (sys, conn, _) = plane();
        let r = Routhian::new(sys.clone(), conn, v(&[0.7]));
        let s = ChartState::from_slices(&[0.3, 0.1], &[0.2, -0.4]);
        assert!((r.eval(&s) - (sys.lagrangian(&s.q, &s.v) + 0.7 * 0.4)).abs() < 1e-14);
    }

    #[test]
    fn cyclic_reduction_of_a_warped_plane() {
        let (sys, conn, qc) = plane();
        let mu = 0.7;
        let red = reduce(&sys, &conn, &qc, &v(&[mu]), 0).unwrap();
        let rr = regular_reduce(&red, 0).unwrap();
        let (z, vx) = (v(&[0.5]), v(&[0.3]));
        let xi = rr.gamma_section(&z, &vx, None).unwrap();
        assert!((xi[0] - mu / 1.25).abs() < 1e-12);
        // 𝓡̄ = ½ȧ² − ½a² − μ²/(2(1 + a²))
        let want = 0.5 * 0.09 - 0.125 - mu * mu / 2.5;
        assert!((rr.rbar(&z, &vx).unwrap() - want).abs() < 1e-12);
        let vf = rr.vector_field(&z, &vx, None).unwrap();
        let accel = -0.5 + mu * mu * 0.5 / (1.25 * 1.25);
        assert!((vf.accel[0] - accel).abs() < 1e-7);
        assert!(red.beta(&z).amax() < 1e-12);
    }

    #[test]
    fn momentum_with_wrong_length_is_rejected() {
        let (sys, conn, qc) = plane();
        assert!(matches!(reduce(&sys, &conn, &qc, &v(&[1.0, 2.0]), 0), Err(Error::Config(_))));
    }

    #[test]
    fn degenerate_vertical_hessian_fails_regularity() {
        let (_, conn, qc) = plane();
        let chart = conn.action.chart.clone();
        let sys = LagrangianSystem::new(chart, |q, v| 0.5 * v[0] * v[0] + v[0] * v[1] - 0.5 * q[0] * q[0], ForceTerm::Zero);
        let red = reduce(&sys, &conn, &qc, &v(&[1.0]), 0).unwrap();
        assert!(!red.g_regularity_test(10, 0).is_regular);
        assert!(matches!(regular_reduce(&red, 0), Err(Error::NotGRegular { .. })));
    }
}
