//! Built-in example systems: a degenerate toy model, the free rigid body, a
//! charged heavy top, a modified Tippe Top and geodesics of a pp-wave.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::calculus::{d1, euler_pole_region, Chart, Matrix, Vector};
use crate::connection::{mechanical_connection, PrincipalConnection, Provenance, QuotientChart};
use crate::error::{Error, Result};
use crate::lagrangian::{ForceTerm, LagrangianSystem, Mechanical};
use crate::symmetry::{check_invariance, so3, GroupAction, GroupElement, LieGroup, Side};

/// Closed-form expression used as an oracle; arguments are documented per entry.
pub type Formula = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A system with its symmetry, default connection, trivialization and
/// closed-form reference expressions.
#[derive(Clone)]
pub struct SystemBundle {
    pub name: String,
    pub sys: LagrangianSystem,
    pub action: GroupAction,
    pub connection: PrincipalConnection,
    /// Coordinate connection with constant coefficients, when the chart has one.
    pub flat_connection: Option<PrincipalConnection>,
    pub qchart: QuotientChart,
    pub default_mu: Vector,
    pub params: BTreeMap<String, f64>,
    pub reference_formulas: BTreeMap<String, Formula>,
}

impl fmt::Debug for SystemBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SystemBundle")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("formulas", &self.reference_formulas.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl SystemBundle {
    pub fn formula(&self, name: &str, args: &[f64]) -> Vec<f64> {
        let f = self.reference_formulas.get(name).unwrap_or_else(|| panic!("{} has no formula {name}", self.name));
        f(args)
    }

    pub fn param(&self, name: &str) -> f64 {
        *self.params.get(name).unwrap_or_else(|| panic!("{} has no parameter {name}", self.name))
    }
}

const SEED: u64 = 0;

fn checked(bundle: SystemBundle) -> Result<SystemBundle> {
    let report = check_invariance(&bundle.sys, &bundle.action, 30, SEED);
    if !report.all() {
        let defect = report.max_l_violation.max(report.max_f1_violation).max(report.max_f2_violation);
        return Err(Error::NotInvariant { what: format!("{} system", bundle.name), defect });
    }
    Ok(bundle)
}

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, x)| (k.to_string(), *x)).collect()
}

fn formula(f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Formula {
    Arc::new(f)
}

/// Translation of coordinate `index` by ℝ, with the coordinate connection on it.
fn translation(chart: &Arc<Chart>, index: usize) -> (GroupAction, PrincipalConnection) {
    let n = chart.dim();
    let gen = Matrix::from_fn(n, 1, |i, _| if i == index { 1.0 } else { 0.0 });
    let gen2 = gen.clone();
    let action = GroupAction::new(
        LieGroup::Abelian(1),
        Side::Left,
        chart.clone(),
        move |g, q| {
            let mut p = q.clone();
            p[index] += g.as_vec()[0];
            p
        },
        move |_| gen.clone(),
    );
    let conn = PrincipalConnection::new(action.clone(), move |_| gen2.transpose(), Provenance::Flat, SEED)
        .expect("coordinate connection");
    (action, conn)
}

/// Trivialization for a translation in coordinate `index`: x is the remaining coordinates.
fn translation_chart(chart: &Chart, index: usize, action: &GroupAction) -> QuotientChart {
    let n = chart.dim();
    let keep: Vec<usize> = (0..n).filter(|&i| i != index).collect();
    let names: Vec<&str> = keep.iter().map(|&i| chart.coord_names[i].as_str()).collect();
    let base = Chart::new(&format!("{}/R", chart.name), &names)
        .with_angular(&keep.iter().map(|&i| chart.angular[i]).collect::<Vec<_>>())
        .with_bounds(&keep.iter().map(|&i| chart.bounds[i]).collect::<Vec<_>>());
    let (k1, k2) = (keep.clone(), keep.clone());
    QuotientChart::new(
        base,
        n - 1,
        action,
        move |q| Vector::from_iterator(k1.len(), k1.iter().map(|&i| q[i])),
        |_| Vector::zeros(0),
        move |x, _| {
            let mut q = Vector::zeros(n);
            for (j, &i) in k2.iter().enumerate() {
                q[i] = x[j];
            }
            q
        },
        move |q| GroupElement::Vec(v(&[q[index]])),
    )
}

/// L = (q̇¹)² + q̇¹q̇² − V(q¹) with ℝ acting on q². Not G-regular: the locked inertia is [0].
pub fn toy_cyclic(potential: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<SystemBundle> {
    let chart = Arc::new(Chart::new("toy", &["q1", "q2"]).with_bounds(&[(-2.0, 2.0), (-2.0, 2.0)]));
    let pot = Arc::new(potential);
    let (p1, p2) = (pot.clone(), pot.clone());
    let mech = Mechanical::new(|_| Matrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 0.0]), |_, _| Matrix::zeros(2, 2))
        .with_potential(move |q| p1(q[0]), move |q| v(&[d1(|s| p2(s), q[0]), 0.0]));
    let sys = LagrangianSystem::mechanical(chart.clone(), mech, ForceTerm::Zero);
    let (action, conn) = translation(&chart, 1);
    let qchart = translation_chart(&chart, 1, &action);
    let mut f = BTreeMap::new();
    // [q̇¹] → J_L
    f.insert("momentum".to_string(), formula(|a| vec![a[0]]));
    checked(SystemBundle {
        name: "toy".into(),
        sys,
        action,
        flat_connection: Some(conn.clone()),
        connection: conn,
        qchart,
        default_mu: v(&[1.0]),
        params: BTreeMap::new(),
        reference_formulas: f,
    })
}

fn euler_chart(name: &str) -> Chart {
    Chart::new(name, &["phi", "theta", "psi"])
        .with_angular(&[true, false, true])
        .with_bounds(&[(-PI, PI), (0.3, PI - 0.3), (-PI, PI)])
        .with_singular_region(euler_pole_region(1, 1e-3))
}

/// Free rigid body, L = ½ Σ Iᵢ ξᵢ² in body angular velocities, ZXZ Euler angles.
///
/// SO(3) acts on the left, A ↦ gA, with the standard connection ȦA⁻¹ and
/// Q/G_μ ≅ S² in coordinates (θ, ψ) for μ along the spatial z-axis.
pub fn free_rigid_body(i1: f64, i2: f64, i3: f64) -> Result<SystemBundle> {
    if !(i1 > 0.0 && i2 > 0.0 && i3 > 0.0) {
        return Err(Error::Config("rigid body inertia must be positive".into()));
    }
    let chart = Arc::new(euler_chart("euler"));
    let inertia = Matrix::from_diagonal(&v(&[i1, i2, i3]));
    let (i_a, i_b) = (inertia.clone(), inertia.clone());
    let mech = Mechanical::new(
        move |q| {
            let b = so3::body_rate_matrix(q[1], q[2]);
            b.transpose() * &i_a * b
        },
        move |q, k| {
            if k == 0 {
                return Matrix::zeros(3, 3);
            }
            let b = so3::body_rate_matrix(q[1], q[2]);
            let db = so3::body_rate_matrix_deriv(q[1], q[2], k == 1);
            let m = db.transpose() * &i_b * &b;
            &m + m.transpose()
        },
    );
    let sys = LagrangianSystem::mechanical(chart.clone(), mech, ForceTerm::Zero);
    let action = so3_left_action(&chart);
    let conn = PrincipalConnection::new(
        action.clone(),
        |q| so3::spatial_rate_matrix(q[0], q[1]),
        Provenance::Coefficients,
        SEED,
    )?;
    let sphere = Chart::new("S2", &["theta", "psi"])
        .with_angular(&[false, true])
        .with_bounds(&[(0.3, PI - 0.3), (-PI, PI)])
        .with_singular_region(euler_pole_region(0, 1e-3));
    let qchart = QuotientChart::new(
        sphere,
        0,
        &action,
        |_| Vector::zeros(0),
        |q| v(&[q[1], q[2]]),
        |_, y| v(&[0.0, y[0], y[1]]),
        |q| GroupElement::Rot(so3::euler_to_matrix(q[0], q[1], q[2])),
    );
    let mut f = BTreeMap::new();
    // [θ, ψ, μ] → μ̃
    f.insert(
        "mu_tilde".to_string(),
        formula(|a| vec![a[2] * a[0].sin() * a[1].sin(), a[2] * a[0].sin() * a[1].cos(), a[2] * a[0].cos()]),
    );
    // [θ, ψ, μ] → κ_l(μ̃)
    f.insert(
        "kappa".to_string(),
        formula(move |a| {
            let (st, ct) = a[0].sin_cos();
            let (sp, cp) = a[1].sin_cos();
            vec![a[2] * st * sp / i1, a[2] * st * cp / i2, a[2] * ct / i3]
        }),
    );
    // [θ, ψ, μ] → (θ̇, ψ̇)
    f.insert(
        "reduced_velocity".to_string(),
        formula(move |a| {
            let (st, ct) = a[0].sin_cos();
            let (sp, cp) = a[1].sin_cos();
            let mu = a[2];
            vec![mu * st * sp * cp * (1.0 / i1 - 1.0 / i2), mu * ct * (1.0 / i3 - (sp * sp / i1 + cp * cp / i2))]
        }),
    );
    // [θ, ψ, μ] → 𝓡̄^μ
    f.insert(
        "rbar".to_string(),
        formula(move |a| {
            let (st, ct) = a[0].sin_cos();
            let (sp, cp) = a[1].sin_cos();
            vec![-0.5 * a[2] * a[2] * (st * st * sp * sp / i1 + st * st * cp * cp / i2 + ct * ct / i3)]
        }),
    );
    // [θ, μ] → β^μ(∂θ, ∂ψ)
    f.insert("beta".to_string(), formula(|a| vec![-a[1] * a[0].sin()]));
    checked(SystemBundle {
        name: "rigid-body".into(),
        sys,
        action,
        connection: conn,
        flat_connection: None,
        qchart,
        default_mu: v(&[0.0, 0.0, 2.0]),
        params: params(&[("I1", i1), ("I2", i2), ("I3", i3)]),
        reference_formulas: f,
    })
}

fn so3_left_action(chart: &Arc<Chart>) -> GroupAction {
    GroupAction::new(
        LieGroup::SO3,
        Side::Left,
        chart.clone(),
        |g, q| {
            let a = g.as_rot() * so3::euler_to_matrix(q[0], q[1], q[2]);
            let (phi, theta, psi) = so3::matrix_to_euler(&a);
            v(&[phi, theta, psi])
        },
        |q| {
            so3::spatial_rate_matrix(q[0], q[1])
                .try_inverse()
                .unwrap_or_else(|| Matrix::from_element(3, 3, f64::NAN))
        },
    )
}

/// Parameters of [`heavy_top_magnetic`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeavyTopParams {
    pub m: f64,
    pub g: f64,
    pub eps: f64,
    pub i1: f64,
    pub i3: f64,
    /// ΩB, the Larmor frequency.
    pub omega_b: f64,
    /// Tilt of gravity away from the field axis; nonzero values break the symmetry.
    pub tilt: f64,
}

impl Default for HeavyTopParams {
    fn default() -> Self {
        HeavyTopParams { m: 1.0, g: 9.81, eps: 0.1, i1: 1.0, i3: 0.5, omega_b: 0.01, tilt: 0.0 }
    }
}

/// Symmetric charged top with a fixed point in a constant vertical magnetic field.
///
/// L = ½I₁θ̇² + ½I₃ψ̇² + I₃cosθ φ̇ψ̇ + ½ρφ̇² − mgε cosθ − ΩB(ρφ̇ + I₃cosθ ψ̇)
/// with ρ = I₁sin²θ + I₃cos²θ; S¹ acts on φ.
pub fn heavy_top_magnetic(p: HeavyTopParams) -> Result<SystemBundle> {
    let HeavyTopParams { m, g, eps, i1, i3, omega_b, tilt } = p;
    if !(i1 > 0.0 && i3 > 0.0) {
        return Err(Error::Config("heavy top inertia must be positive".into()));
    }
    let chart = Arc::new(euler_chart("euler"));
    let rho = move |th: f64| i1 * th.sin().powi(2) + i3 * th.cos().powi(2);
    let drho = move |th: f64| 2.0 * (i1 - i3) * th.sin() * th.cos();
    let mge = m * g * eps;
    let (ct, st) = (tilt.cos(), tilt.sin());
    let mech = Mechanical::new(
        move |q| {
            let c = q[1].cos();
            Matrix::from_row_slice(3, 3, &[rho(q[1]), 0.0, i3 * c, 0.0, i1, 0.0, i3 * c, 0.0, i3])
        },
        move |q, k| {
            if k != 1 {
                return Matrix::zeros(3, 3);
            }
            let s = q[1].sin();
            Matrix::from_row_slice(3, 3, &[drho(q[1]), 0.0, -i3 * s, 0.0, 0.0, 0.0, -i3 * s, 0.0, 0.0])
        },
    )
    .with_one_form(
        move |q| v(&[-omega_b * rho(q[1]), 0.0, -omega_b * i3 * q[1].cos()]),
        move |q, k| {
            if k != 1 {
                return Vector::zeros(3);
            }
            v(&[-omega_b * drho(q[1]), 0.0, omega_b * i3 * q[1].sin()])
        },
    )
    .with_potential(
        move |q| mge * (ct * q[1].cos() - st * q[0].cos() * q[1].sin()),
        move |q| {
            let (sf, cf) = q[0].sin_cos();
            let (s, c) = q[1].sin_cos();
            v(&[mge * st * sf * s, mge * (-ct * s - st * cf * c), 0.0])
        },
    );
    let sys = LagrangianSystem::mechanical(chart.clone(), mech, ForceTerm::Zero);
    let (action, flat) = translation(&chart, 0);
    let conn = mechanical_connection(&sys, &action, SEED)?;
    let qchart = translation_chart(&chart, 0, &action);
    let mut f = BTreeMap::new();
    // [θ, φ̇, ψ̇] → J_L
    f.insert(
        "momentum".to_string(),
        formula(move |a| vec![rho(a[0]) * a[1] + i3 * a[0].cos() * a[2] - omega_b * rho(a[0])]),
    );
    // [θ] → mechanical connection coefficient of dψ
    f.insert("connection".to_string(), formula(move |a| vec![i3 * a[0].cos() / rho(a[0])]));
    // [θ, μ] → V_μ
    f.insert(
        "v_mu".to_string(),
        formula(move |a| vec![mge * a[0].cos() + 0.5 * (a[1] + omega_b * rho(a[0])).powi(2) / rho(a[0])]),
    );
    // [θ, θ̇, ψ̇, μ] → 𝓡̄^μ
    f.insert(
        "rbar".to_string(),
        formula(move |a| {
            let r = rho(a[0]);
            let vmu = mge * a[0].cos() + 0.5 * (a[3] + omega_b * r).powi(2) / r;
            vec![0.5 * (i1 * a[1] * a[1] + i3 * i1 * a[0].sin().powi(2) / r * a[2] * a[2]) - vmu]
        }),
    );
    // [θ, θ̇, ψ̇] → ∂𝓡̄^μ/∂(θ̇, ψ̇)
    f.insert(
        "legendre".to_string(),
        formula(move |a| vec![i1 * a[1], i3 * i1 * a[0].sin().powi(2) / rho(a[0]) * a[2]]),
    );
    // [θ, ψ̇, μ] → φ̇
    f.insert(
        "phi_dot".to_string(),
        formula(move |a| vec![(a[2] - i3 * a[0].cos() * a[1]) / rho(a[0]) + omega_b]),
    );
    checked(SystemBundle {
        name: "heavy-top".into(),
        sys,
        action,
        connection: conn,
        flat_connection: Some(flat),
        qchart,
        default_mu: v(&[0.5]),
        params: params(&[("m", m), ("g", g), ("eps", eps), ("I1", i1), ("I3", i3), ("OmegaB", omega_b), ("tilt", tilt)]),
        reference_formulas: f,
    })
}

/// Parameters of [`tippe_top`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TippeTopParams {
    pub m: f64,
    pub g: f64,
    pub r: f64,
    pub eps: f64,
    pub a: f64,
    pub c: f64,
    /// Friction coefficient of the sliding contact.
    pub mu_f: f64,
}

impl Default for TippeTopParams {
    fn default() -> Self {
        TippeTopParams { m: 1.0, g: 9.81, r: 1.0, eps: 0.3, a: 0.4, c: 0.5, mu_f: 0.3 }
    }
}

/// Modified Tippe Top with sliding friction; S¹ acts by (φ + Rα, θ, ψ − εα).
/// The conserved momentum is the Jellet integral.
pub fn tippe_top(p: TippeTopParams) -> Result<SystemBundle> {
    let TippeTopParams { m, g, r, eps, a, c, mu_f } = p;
    if !(a > 0.0 && c > 0.0 && r > 0.0 && eps > 0.0) {
        return Err(Error::Config("Tippe Top needs A, C, R, eps > 0".into()));
    }
    let chart = Arc::new(euler_chart("euler"));
    let em = eps * eps * m;
    let mech = Mechanical::new(
        move |q| {
            let (s, co) = q[1].sin_cos();
            Matrix::from_row_slice(
                3,
                3,
                &[a * s * s + c * co * co, 0.0, c * co, 0.0, em * s * s + a, 0.0, c * co, 0.0, c],
            )
        },
        move |q, k| {
            if k != 1 {
                return Matrix::zeros(3, 3);
            }
            let (s, co) = q[1].sin_cos();
            Matrix::from_row_slice(
                3,
                3,
                &[2.0 * (a - c) * s * co, 0.0, -c * s, 0.0, 2.0 * em * s * co, 0.0, -c * s, 0.0, 0.0],
            )
        },
    )
    .with_potential(move |q| m * g * (r - eps * q[1].cos()), move |q| v(&[0.0, m * g * eps * q[1].sin(), 0.0]));
    let friction = move |q: &Vector, vel: &Vector| {
        let (s, co) = q[1].sin_cos();
        let slip = eps * vel[0] + r * vel[2];
        v(&[
            -mu_f * eps * s * s * slip,
            -mu_f * (r - eps * co).powi(2) * vel[1],
            -mu_f * r * s * s * slip,
        ])
    };
    let fr = friction;
    let sys = LagrangianSystem::mechanical(chart.clone(), mech, ForceTerm::general(friction));
    let gen = v(&[r, 0.0, -eps]);
    let g2 = gen.clone();
    let action = GroupAction::new(
        LieGroup::Abelian(1),
        Side::Left,
        chart.clone(),
        move |g, q| q + &g2 * g.as_vec()[0],
        move |_| Matrix::from_column_slice(3, 1, gen.as_slice()),
    );
    let norm = eps * eps + r * r;
    let conn = PrincipalConnection::new(
        action.clone(),
        move |_| Matrix::from_row_slice(1, 3, &[r / norm, 0.0, -eps / norm]),
        Provenance::Flat,
        SEED,
    )?;
    let base = Chart::new("S2", &["theta", "chi"]).with_bounds(&[(0.3, PI - 0.3), (-PI, PI)]);
    let qchart = QuotientChart::new(
        base,
        2,
        &action,
        move |q| v(&[q[1], eps * q[0] + r * q[2]]),
        |_| Vector::zeros(0),
        move |x, _| v(&[0.0, x[0], x[1] / r]),
        move |q| GroupElement::Vec(v(&[q[0] / r])),
    );
    let mut f = BTreeMap::new();
    // [θ, φ̇, ψ̇] → Jellet integral
    f.insert(
        "jellet".to_string(),
        formula(move |x| {
            let (s, co) = x[0].sin_cos();
            vec![r * a * s * s * x[1] + c * (x[2] + co * x[1]) * (r * co - eps)]
        }),
    );
    // [θ, φ̇, θ̇, ψ̇] → F
    f.insert(
        "friction".to_string(),
        formula(move |x| fr(&v(&[0.0, x[0], 0.0]), &v(&[x[1], x[2], x[3]])).iter().cloned().collect()),
    );
    // [θ, θ̇, χ̇] → reduced friction
    f.insert(
        "reduced_friction".to_string(),
        formula(move |x| {
            let (s, co) = x[0].sin_cos();
            vec![-mu_f * (r - eps * co).powi(2) * x[1], -mu_f * s * s * x[2]]
        }),
    );
    checked(SystemBundle {
        name: "tippe-top".into(),
        sys,
        action,
        flat_connection: Some(conn.clone()),
        connection: conn,
        qchart,
        default_mu: v(&[0.5]),
        params: params(&[("m", m), ("g", g), ("R", r), ("eps", eps), ("A", a), ("C", c), ("mu_f", mu_f)]),
        reference_formulas: f,
    })
}

/// Geodesics of g = H(u, x, y) du² + 2 du dv + dx² + dy²; ℝ translates v along
/// the lightlike Killing field ∂_v.
pub fn pp_wave(h: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> Result<SystemBundle> {
    let chart = Arc::new(
        Chart::new("brinkmann", &["u", "v", "x", "y"]).with_bounds(&[(-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)]),
    );
    let h = Arc::new(h);
    let h1 = h.clone();
    let h2 = h.clone();
    let mech = Mechanical::new(
        move |q| {
            let mut m = Matrix::identity(4, 4);
            m[(0, 0)] = h1(q[0], q[2], q[3]);
            m[(0, 1)] = 1.0;
            m[(1, 0)] = 1.0;
            m[(1, 1)] = 0.0;
            m
        },
        move |q, k| {
            let mut m = Matrix::zeros(4, 4);
            m[(0, 0)] = match k {
                0 => d1(|s| h2(s, q[2], q[3]), q[0]),
                2 => d1(|s| h2(q[0], s, q[3]), q[2]),
                3 => d1(|s| h2(q[0], q[2], s), q[3]),
                _ => 0.0,
            };
            m
        },
    );
    let sys = LagrangianSystem::mechanical(chart.clone(), mech, ForceTerm::Zero);
    let (action, conn) = translation(&chart, 1);
    let qchart = translation_chart(&chart, 1, &action);
    let mut f = BTreeMap::new();
    // [u̇] → J_L
    f.insert("momentum".to_string(), formula(|a| vec![a[0]]));
    // [u, x, y, ẋ, ẏ, μ] → 𝓡̄^μ on u̇ = μ
    f.insert(
        "rbar".to_string(),
        formula(move |a| vec![0.5 * (a[5] * a[5] * h(a[0], a[1], a[2]) + a[3] * a[3] + a[4] * a[4])]),
    );
    checked(SystemBundle {
        name: "pp-wave".into(),
        sys,
        action,
        flat_connection: Some(conn.clone()),
        connection: conn,
        qchart,
        default_mu: v(&[1.0]),
        params: BTreeMap::new(),
        reference_formulas: f,
    })
}

/// Geodesic of the H = x² − y² wave with u̇ = μ: [t, x₀, ẋ₀, y₀, ẏ₀, u₀, μ] → (u, x, y).
pub fn pp_wave_saddle_geodesic(a: &[f64]) -> Vec<f64> {
    let (t, x0, xd0, y0, yd0, u0, mu) = (a[0], a[1], a[2], a[3], a[4], a[5], a[6]);
    let w = mu * t;
    vec![
        u0 + w,
        x0 * w.cosh() + xd0 / mu * w.sinh(),
        y0 * w.cos() + yd0 / mu * w.sin(),
    ]
}

pub const SYSTEM_NAMES: [&str; 5] = ["toy", "rigid-body", "heavy-top", "tippe-top", "pp-wave"];

/// Built-in system with default parameters, overridden by `overrides`.
pub fn by_name(name: &str, overrides: &BTreeMap<String, f64>) -> Result<SystemBundle> {
    let get = |k: &str, d: f64| overrides.get(k).copied().unwrap_or(d);
    let known: &[&str] = match name {
        "toy" => &["k"],
        "rigid-body" => &["I1", "I2", "I3"],
        "heavy-top" => &["m", "g", "eps", "I1", "I3", "OmegaB", "tilt"],
        "tippe-top" => &["m", "g", "R", "eps", "A", "C", "mu_f"],
        "pp-wave" => &["a", "b"],
        _ => return Err(Error::Config(format!("unknown system '{name}' (known: {})", SYSTEM_NAMES.join(", ")))),
    };
    if let Some(bad) = overrides.keys().find(|k| !known.contains(&k.as_str())) {
        return Err(Error::Config(format!("system '{name}' has no parameter '{bad}'")));
    }
    match name {
        "toy" => {
            let k = get("k", 1.0);
            toy_cyclic(move |q| 0.5 * k * q * q)
        }
        "rigid-body" => free_rigid_body(get("I1", 1.0), get("I2", 2.0), get("I3", 3.0)),
        "heavy-top" => {
            let d = HeavyTopParams::default();
            heavy_top_magnetic(HeavyTopParams {
                m: get("m", d.m),
                g: get("g", d.g),
                eps: get("eps", d.eps),
                i1: get("I1", d.i1),
                i3: get("I3", d.i3),
                omega_b: get("OmegaB", d.omega_b),
                tilt: get("tilt", d.tilt),
            })
        }
        "tippe-top" => {
            let d = TippeTopParams::default();
            tippe_top(TippeTopParams {
                m: get("m", d.m),
                g: get("g", d.g),
                r: get("R", d.r),
                eps: get("eps", d.eps),
                a: get("A", d.a),
                c: get("C", d.c),
                mu_f: get("mu_f", d.mu_f),
            })
        }
        _ => {
            let (a, b) = (get("a", 1.0), get("b", -1.0));
            pp_wave(move |_, x, y| a * x * x + b * y * y)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_named_system_builds() {
        for name in SYSTEM_NAMES {
            let b = by_name(name, &BTreeMap::new()).unwrap();
            assert_eq!(b.name, name);
            assert_eq!(b.default_mu.len(), b.action.group.dim());
        }
    }

    #[test]
    fn overrides_reach_the_parameters() {
        let o: BTreeMap<String, f64> = [("OmegaB".to_string(), 0.0)].into_iter().collect();
        assert_eq!(by_name("heavy-top", &o).unwrap().param("OmegaB"), 0.0);
    }

    #[test]
    fn saddle_geodesic_initial_data() {
        let at0 = pp_wave_saddle_geodesic(&[0.0, 0.3, 0.5, -0.2, 0.4, 0.1, 0.8]);
        assert_eq!(at0, vec![0.1, 0.3, -0.2]);
        let h = 1e-6;
        let p = pp_wave_saddle_geodesic(&[h, 0.3, 0.5, -0.2, 0.4, 0.1, 0.8]);
        let m = pp_wave_saddle_geodesic(&[-h, 0.3, 0.5, -0.2, 0.4, 0.1, 0.8]);
        assert!(((p[1] - m[1]) / (2.0 * h) - 0.5).abs() < 1e-8);
        assert!(((p[2] - m[2]) / (2.0 * h) - 0.4).abs() < 1e-8);
    }
}
