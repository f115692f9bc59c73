#![allow(dead_code)]

use routh::calculus::{ChartState, Matrix, Trajectory, Vector};
use routh::symmetry::momentum_map;
use routh::systems::SystemBundle;

pub fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

/// State at q with the velocity chosen so that J_L = mu (J_L is linear in v
/// for these systems, with an affine offset read off at v = 0).
pub fn state_with_momentum(b: &SystemBundle, q: &Vector, mu: &Vector, free: &Vector) -> ChartState {
    let n = q.len();
    let j = |vel: &Vector| momentum_map(&b.sys, &b.action, &ChartState::new(q.clone(), vel.clone()));
    let j0 = j(&Vector::zeros(n));
    let cols: Vec<Vector> = (0..n)
        .map(|i| {
            let mut e = Vector::zeros(n);
            e[i] = 1.0;
            j(&e) - &j0
        })
        .collect();
    let m = Matrix::from_columns(&cols);
    // minimal correction of `free` onto the momentum level
    let corr = m.pseudo_inverse(1e-12).unwrap() * (mu - j(free));
    ChartState::new(q.clone(), free + corr)
}

pub fn sup_channel(tr: &Trajectory, name: &str) -> f64 {
    let c = tr.channel(name).unwrap();
    c.iter().map(|x| (x - &c[0]).amax()).fold(0.0, f64::max)
}

/// Rigid body (1, 2, 3) on a slider r with L = ½ ξᵀIξ + ½ṙ² + c ṙ ξ₁ in body
/// rates ξ. SO(3) acts on the left on the attitude; the mechanical
/// connection then depends on r, so β^μ has both horizontal and vertical
/// blocks. Chart (r, φ, θ, ψ); Q/G_μ in (r | θ, ψ).
pub fn coupled_rigid_body(c: f64) -> (routh::lagrangian::LagrangianSystem, routh::symmetry::GroupAction, routh::connection::PrincipalConnection, routh::connection::QuotientChart) {
    use routh::calculus::{euler_pole_region, Chart};
    use routh::connection::{mechanical_connection, QuotientChart};
    use routh::lagrangian::{ForceTerm, LagrangianSystem, Mechanical};
    use routh::symmetry::{so3, GroupAction, GroupElement, LieGroup, Side};
    use std::f64::consts::PI;
    use std::sync::Arc;

    let inertia = Matrix::from_diagonal(&v(&[1.0, 2.0, 3.0]));
    let metric_of = move |b: &Matrix| {
        let mut m = Matrix::zeros(4, 4);
        m[(0, 0)] = 1.0;
        let rot = b.transpose() * &inertia * b;
        m.view_mut((1, 1), (3, 3)).copy_from(&rot);
        for j in 0..3 {
            m[(0, 1 + j)] = c * b[(0, j)];
            m[(1 + j, 0)] = c * b[(0, j)];
        }
        m
    };
    let inertia2 = Matrix::from_diagonal(&v(&[1.0, 2.0, 3.0]));
    let mech = Mechanical::new(
        move |q| metric_of(&so3::body_rate_matrix(q[2], q[3])),
        move |q, k| {
            let mut m = Matrix::zeros(4, 4);
            if k < 2 {
                return m;
            }
            let b = so3::body_rate_matrix(q[2], q[3]);
            let db = so3::body_rate_matrix_deriv(q[2], q[3], k == 2);
            let d = db.transpose() * &inertia2 * &b;
            m.view_mut((1, 1), (3, 3)).copy_from(&(&d + d.transpose()));
            for j in 0..3 {
                m[(0, 1 + j)] = c * db[(0, j)];
                m[(1 + j, 0)] = c * db[(0, j)];
            }
            m
        },
    );
    let chart = Arc::new(
        Chart::new("slider x euler", &["r", "phi", "theta", "psi"])
            .with_angular(&[false, true, false, true])
            .with_bounds(&[(-1.0, 1.0), (-PI, PI), (0.3, PI - 0.3), (-PI, PI)])
            .with_singular_region(euler_pole_region(2, 1e-3)),
    );
    let sys = LagrangianSystem::mechanical(chart.clone(), mech, ForceTerm::Zero);
    let action = GroupAction::new(
        LieGroup::SO3,
        Side::Left,
        chart,
        |g, q| {
            let a = g.as_rot() * so3::euler_to_matrix(q[1], q[2], q[3]);
            let (phi, theta, psi) = so3::matrix_to_euler(&a);
            v(&[q[0], phi, theta, psi])
        },
        |q| {
            let mut m = Matrix::zeros(4, 3);
            let s = so3::spatial_rate_matrix(q[1], q[2]).try_inverse().unwrap();
            m.view_mut((1, 0), (3, 3)).copy_from(&s);
            m
        },
    );
    let conn = mechanical_connection(&sys, &action, 0).unwrap();
    let qc = QuotientChart::new(
        Chart::new("slider x S2", &["r", "theta", "psi"])
            .with_angular(&[false, false, true])
            .with_bounds(&[(-1.0, 1.0), (0.3, PI - 0.3), (-PI, PI)])
            .with_singular_region(euler_pole_region(1, 1e-3)),
        1,
        &action,
        |q| v(&[q[0]]),
        |q| v(&[q[2], q[3]]),
        |x, y| v(&[x[0], 0.0, y[0], y[1]]),
        |q| GroupElement::Rot(so3::euler_to_matrix(q[1], q[2], q[3])),
    );
    (sys, action, conn, qc)
}
