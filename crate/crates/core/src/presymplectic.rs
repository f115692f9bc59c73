//! Legendre maps, energies and the presymplectic form of reduced systems,
//! pointwise solvability of the presymplectic equation, and
//! Lagrange-Poincaré residuals.
//!
//! Points of T_MN are flattened as w = (x, v_x, y, ξ̃). For a
//! [`RegularReducedSystem`] the ξ̃ block is absent (ξ̃ = κ is eliminated).

use crate::calculus::{grad5, grid_derivative, jacobian5, lstsq, singular_extremes, Matrix, Trajectory, Vector};
use crate::connection::{curvature, horizontal_lift_matrix, join};
use crate::error::{Error, Result};
use crate::routh::{ReducedSystem, RegularReducedSystem};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-10;
/// Least-squares residual bound for pointwise solvability.
pub const SOLVABLE_TOL: f64 = 1e-8;

/// A Lagrangian on T_MN with its gyroscopic two-form and external force.
pub trait PresymplecticModel {
    /// (n, ky, k_ξ): base, fibre and algebra block sizes of w.
    fn blocks(&self) -> (usize, usize, usize);
    fn lagrangian(&self, w: &Vector) -> Result<f64>;
    /// 𝔽₁L(w), the derivative along the base velocity.
    fn fibre_derivative(&self, w: &Vector) -> Result<Vector>;
    /// β^μ in (x, y) coordinates.
    fn beta(&self, w: &Vector) -> Matrix;
    /// The non-gyroscopic force along the base.
    fn force(&self, w: &Vector) -> Result<Vector>;

    fn dim(&self) -> usize {
        let (n, ky, k) = self.blocks();
        2 * n + ky + k
    }

    /// (z, v_x, ξ̃) with z = (x, y).
    fn unpack(&self, w: &Vector) -> (Vector, Vector, Vector) {
        let (n, ky, k) = self.blocks();
        let z = join(&w.rows(0, n).into_owned(), &w.rows(2 * n, ky).into_owned());
        (z, w.rows(n, n).into_owned(), w.rows(2 * n + ky, k).into_owned())
    }
}

/// Flattens (x, v_x, y, ξ̃).
pub fn pack(x: &Vector, v_x: &Vector, y: &Vector, xi: &Vector) -> Vector {
    join(&join(x, v_x), &join(y, xi))
}

impl PresymplecticModel for ReducedSystem {
    fn blocks(&self) -> (usize, usize, usize) {
        (self.base_dim(), self.fibre_dim(), self.algebra_dim())
    }

    fn lagrangian(&self, w: &Vector) -> Result<f64> {
        let (z, v_x, xi) = self.unpack(w);
        Ok(self.routhian(&z, &v_x, &xi))
    }

    fn fibre_derivative(&self, w: &Vector) -> Result<Vector> {
        let (z, v_x, xi) = self.unpack(w);
        let f = self.frame(&z);
        Ok(f.hor.transpose() * self.sys.dl_dv(&f.q, &f.velocity(&v_x, &xi)))
    }

    fn beta(&self, w: &Vector) -> Matrix {
        ReducedSystem::beta(self, &self.unpack(w).0)
    }

    fn force(&self, w: &Vector) -> Result<Vector> {
        let (z, v_x, xi) = self.unpack(w);
        Ok(ReducedSystem::force(self, &z, &v_x, &xi))
    }
}

impl PresymplecticModel for RegularReducedSystem {
    fn blocks(&self) -> (usize, usize, usize) {
        (self.red.base_dim(), self.red.fibre_dim(), 0)
    }

    fn lagrangian(&self, w: &Vector) -> Result<f64> {
        let (z, v_x, _) = self.unpack(w);
        self.rbar(&z, &v_x)
    }

    fn fibre_derivative(&self, w: &Vector) -> Result<Vector> {
        let (z, v_x, _) = self.unpack(w);
        self.momentum_x(&z, &v_x)
    }

    fn beta(&self, w: &Vector) -> Matrix {
        self.red.beta(&self.unpack(w).0)
    }

    fn force(&self, w: &Vector) -> Result<Vector> {
        let (z, v_x, _) = self.unpack(w);
        self.fbar(&z, &v_x)
    }
}

pub fn legendre_f1(model: &dyn PresymplecticModel, w: &Vector) -> Result<Vector> {
    model.fibre_derivative(w)
}

/// E = ⟨𝔽₁L, v_x⟩ − L.
pub fn energy(model: &dyn PresymplecticModel, w: &Vector) -> Result<f64> {
    let (n, _, _) = model.blocks();
    let p = model.fibre_derivative(w)?;
    Ok(p.dot(&w.rows(n, n)) - model.lagrangian(w)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormProvenance {
    PullbackCanonical,
    Beta,
    Sum,
}

#[derive(Clone, Debug)]
pub struct TwoFormEval {
    pub matrix: Matrix,
    pub provenance: FormProvenance,
}

impl TwoFormEval {
    /// Number of singular values below [`RANK_TOL`]·σ_max.
    pub fn kernel_dim(&self) -> usize {
        kernel_dim(&self.matrix)
    }

    pub fn condition(&self) -> f64 {
        crate::calculus::condition_number(&self.matrix)
    }
}

fn kernel_dim(m: &Matrix) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return m.nrows();
    }
    sv.iter().filter(|&&s| s < RANK_TOL * smax).count()
}

fn finite_or_domain(m: Matrix, what: &str) -> Result<Matrix> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(m)
    } else {
        Err(Error::NumericalDomain(what.into()))
    }
}

/// d(𝔽₁L · dx) as a matrix in the w basis.
pub fn canonical_pullback(model: &dyn PresymplecticModel, w: &Vector) -> Result<TwoFormEval> {
    let (n, _, _) = model.blocks();
    let dim = model.dim();
    let p = jacobian5(|ww| model.fibre_derivative(ww).unwrap_or_else(|_| Vector::from_element(n, f64::NAN)), w);
    let p = finite_or_domain(p, "Legendre map near w")?;
    let mut e = Matrix::zeros(n, dim);
    for i in 0..n {
        e[(i, i)] = 1.0;
    }
    let pe = p.transpose() * &e;
    Ok(TwoFormEval { matrix: &pe - pe.transpose(), provenance: FormProvenance::PullbackCanonical })
}

/// π₂*β^μ in the w basis.
pub fn beta_pullback(model: &dyn PresymplecticModel, w: &Vector) -> TwoFormEval {
    let (n, ky, _) = model.blocks();
    let b = model.beta(w);
    let idx: Vec<usize> = (0..n).chain(2 * n..2 * n + ky).collect();
    let mut m = Matrix::zeros(model.dim(), model.dim());
    for (a, &i) in idx.iter().enumerate() {
        for (c, &j) in idx.iter().enumerate() {
            m[(i, j)] = b[(a, c)];
        }
    }
    TwoFormEval { matrix: m, provenance: FormProvenance::Beta }
}

/// The two-form of the presymplectic equation: d(𝔽₁L · dx) + π₂*β^μ.
pub fn presymplectic_form(model: &dyn PresymplecticModel, w: &Vector) -> Result<TwoFormEval> {
    let c = canonical_pullback(model, w)?;
    let b = beta_pullback(model, w);
    let m = c.matrix + b.matrix;
    Ok(TwoFormEval { matrix: (&m - m.transpose()) * 0.5, provenance: FormProvenance::Sum })
}

fn energy_differential(model: &dyn PresymplecticModel, w: &Vector) -> Result<Vector> {
    let d = grad5(|ww| energy(model, ww).unwrap_or(f64::NAN), w);
    if d.iter().all(|x| x.is_finite()) {
        Ok(d)
    } else {
        Err(Error::NumericalDomain("energy near w".into()))
    }
}

fn embed_force(model: &dyn PresymplecticModel, f: &Vector) -> Vector {
    let mut out = Vector::zeros(model.dim());
    out.rows_mut(0, f.len()).copy_from(f);
    out
}

/// i_ẇ ω + dE − f as a covector on T_MN.
pub fn presymplectic_residual(model: &dyn PresymplecticModel, w: &Vector, wdot: &Vector, f: &Vector) -> Result<Vector> {
    let omega = presymplectic_form(model, w)?;
    let de = energy_differential(model, w)?;
    Ok(-(&omega.matrix * wdot) + de - embed_force(model, f))
}

/// Outcome of one primary-constraint step.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintCheck {
    pub solvable: bool,
    pub residual: f64,
    pub kernel_dim: usize,
    /// Least-squares ẇ.
    pub velocity: Vector,
}

/// Whether i_ẇ ω = f − dE has a solution ẇ at w.
pub fn pointwise_constraint_check(model: &dyn PresymplecticModel, w: &Vector, f: &Vector) -> Result<ConstraintCheck> {
    let omega = presymplectic_form(model, w)?;
    let rhs = energy_differential(model, w)? - embed_force(model, f);
    let wdot = lstsq(&omega.matrix, &rhs, RANK_TOL);
    let residual = (&omega.matrix * &wdot - &rhs).amax();
    Ok(ConstraintCheck {
        solvable: residual <= SOLVABLE_TOL,
        residual,
        kernel_dim: kernel_dim(&omega.matrix),
        velocity: wdot,
    })
}

/// Points w and velocities ẇ along a reduced trajectory with states (z, ż)
/// (plus an `xi` channel when the model carries ξ̃). ẍ and ξ̃̇ come from
/// grid differences.
pub fn tangent_curve(model: &dyn PresymplecticModel, traj: &Trajectory) -> Result<(Vec<Vector>, Vec<Vector>)> {
    let (n, ky, k) = model.blocks();
    let xis: Vec<Vector> = if k > 0 { traj.channel("xi")?.to_vec() } else { vec![Vector::zeros(0); traj.len()] };
    let ws: Vec<Vector> = traj
        .states
        .iter()
        .zip(&xis)
        .map(|(s, xi)| {
            let x = s.q.rows(0, n).into_owned();
            let y = s.q.rows(n, ky).into_owned();
            pack(&x, &s.v.rows(0, n).into_owned(), &y, xi)
        })
        .collect();
    let dw = grid_derivative(&traj.times, &ws);
    let wdots = traj
        .states
        .iter()
        .zip(dw)
        .map(|(s, d)| {
            let mut out = d;
            out.rows_mut(0, n).copy_from(&s.v.rows(0, n));
            out.rows_mut(2 * n, ky).copy_from(&s.v.rows(n, ky));
            out
        })
        .collect();
    Ok((ws, wdots))
}

/// Sup norm of the presymplectic residual along a reduced trajectory.
pub fn residual_along(model: &dyn PresymplecticModel, traj: &Trajectory) -> Result<f64> {
    let (ws, wdots) = tangent_curve(model, traj)?;
    let mut sup: f64 = 0.0;
    for (w, wd) in ws.iter().zip(&wdots) {
        let f = model.force(w)?;
        sup = sup.max(presymplectic_residual(model, w, wd, &f)?.amax());
    }
    Ok(sup)
}

/// Lagrange-Poincaré residual curves.
#[derive(Clone, Debug)]
pub struct LpResidual {
    /// D/Dt 𝔽_ξ̃ l ± ad*_ξ̃ 𝔽_ξ̃ l (+ right, − left).
    pub vertical: Vec<Vector>,
    /// ∂l/∂x − d/dt ∂l/∂ẋ + f + ⟨𝔽_ξ̃ l, Ω̃(e_i, ẋ)⟩.
    pub horizontal: Vec<Vector>,
}

impl LpResidual {
    pub fn sup(&self) -> (f64, f64) {
        let s = |c: &[Vector]| c.iter().map(|v| v.amax()).fold(0.0, f64::max);
        (s(&self.vertical), s(&self.horizontal))
    }
}

/// Lagrange-Poincaré residuals of the reduced Lagrangian l along a curve
/// (z, ż) with an `xi` channel, using the system force. With a
/// non-trivial base only abelian groups are supported, where the adjoint
/// bundle is flat in the trivialization.
pub fn lagrange_poincare_residual(red: &ReducedSystem, curve: &Trajectory) -> Result<LpResidual> {
    let n = red.base_dim();
    let group = red.conn.group();
    if n > 0 && !group.is_abelian() {
        return Err(Error::Config(
            "Lagrange-Poincaré residual with a non-abelian group needs a point base".into(),
        ));
    }
    let sign = red.qchart.side().sign();
    let xis = curve.channel("xi")?;
    let vxs: Vec<Vector> = curve.states.iter().map(|s| s.v.rows(0, n).into_owned()).collect();
    let nus: Vec<Vector> = curve.states.iter().zip(&vxs).zip(xis).map(|((s, vx), xi)| red.j_l(&s.q, vx, xi)).collect();
    let dnu = grid_derivative(&curve.times, &nus);
    let vertical = dnu.iter().zip(&nus).zip(xis).map(|((d, nu), xi)| d + group.ad_star(xi, nu) * sign).collect();

    let mut lv = Vec::with_capacity(curve.len());
    let mut rest = Vec::with_capacity(curve.len());
    for ((s, vx), (xi, nu)) in curve.states.iter().zip(&vxs).zip(xis.iter().zip(&nus)) {
        let z = &s.q;
        let (x, y) = red.split(z);
        lv.push(grad5(|v| red.l(z, v, xi), vx));
        let lx = grad5(|xx| red.l(&join(xx, &y), vx, xi), &x);
        let q = red.qchart.section(&x, &y);
        let hor = horizontal_lift_matrix(&red.conn, &red.qchart, &q);
        let hdot = &hor * vx;
        let curv = Vector::from_fn(n, |i, _| {
            let om = curvature(&red.conn, &q, &hor.column(i).into_owned(), &hdot);
            nu.dot(&red.qchart.to_tilde(&q, &om))
        });
        rest.push(lx + red.force(z, vx, xi) + curv);
    }
    let dlv = grid_derivative(&curve.times, &lv);
    let horizontal = rest.into_iter().zip(dlv).map(|(r, d)| r - d).collect();
    Ok(LpResidual { vertical, horizontal })
}

/// Smallest and largest singular values of the form at w.
pub fn form_spectrum(model: &dyn PresymplecticModel, w: &Vector) -> Result<(f64, f64)> {
    Ok(singular_extremes(&presymplectic_form(model, w)?.matrix))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// L = ½v² − ½x² on a line, no fibre.
    struct Oscillator;

    impl PresymplecticModel for Oscillator {
        fn blocks(&self) -> (usize, usize, usize) {
            (1, 0, 0)
        }
        fn lagrangian(&self, w: &Vector) -> Result<f64> {
            Ok(0.5 * w[1] * w[1] - 0.5 * w[0] * w[0])
        }
        fn fibre_derivative(&self, w: &Vector) -> Result<Vector> {
            Ok(Vector::from_element(1, w[1]))
        }
        fn beta(&self, _: &Vector) -> Matrix {
            Matrix::zeros(1, 1)
        }
        fn force(&self, _: &Vector) -> Result<Vector> {
            Ok(Vector::zeros(1))
        }
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn oscillator_is_symplectic() {
        let w = v(&[0.4, -0.7]);
        let f = presymplectic_form(&Oscillator, &w).unwrap();
        assert_eq!(f.kernel_dim(), 0);
        assert!((energy(&Oscillator, &w).unwrap() - 0.5 * (0.16 + 0.49)).abs() < 1e-15);
        let r = presymplectic_residual(&Oscillator, &w, &v(&[-0.7, -0.4]), &v(&[0.0])).unwrap();
        assert!(r.amax() < 1e-9);
        let c = pointwise_constraint_check(&Oscillator, &w, &v(&[0.0])).unwrap();
        assert!(c.solvable && (c.velocity - v(&[-0.7, -0.4])).amax() < 1e-9);
    }

    #[test]
    fn forcing_enters_the_residual() {
        let w = v(&[0.4, -0.7]);
        let r = presymplectic_residual(&Oscillator, &w, &v(&[-0.7, -0.4]), &v(&[0.5])).unwrap();
        assert!((r[0] + 0.5).abs() < 1e-9);
    }

    #[test]
    fn kernel_of_degenerate_matrices() {
        assert_eq!(kernel_dim(&Matrix::zeros(3, 3)), 3);
        assert_eq!(kernel_dim(&Matrix::zeros(0, 0)), 0);
        let m = Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(kernel_dim(&m), 1);
    }
}
