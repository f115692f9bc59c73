mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::{state_with_momentum, v};
use routh::calculus::{ChartState, Jet, Trajectory, Vector};
use routh::lagrangian::{integrate_full, FibredConnection};
use routh::presymplectic::*;
use routh::reconstruction::project_trajectory;
use routh::routh::*;
use routh::symmetry::momentum_map;
use routh::systems::*;

fn none() -> Vector {
    Vector::zeros(0)
}

#[test]
fn legendre_maps_and_energies() {
    let toy = toy_cyclic(|q| 0.5 * q * q).unwrap();
    let red = reduce(&toy.sys, &toy.connection, &toy.qchart, &v(&[1.0]), 0).unwrap();
    let w = pack(&v(&[0.3]), &v(&[0.7]), &none(), &v(&[-0.4]));
    assert!((legendre_f1(&red, &w).unwrap()[0] - (2.0 * 0.7 - 0.4)).abs() < 1e-12);
    // E = v² + V + μξ̃
    assert!((energy(&red, &w).unwrap() - (0.49 + 0.045 - 0.4)).abs() < 1e-12);

    let ht = heavy_top_magnetic(HeavyTopParams::default()).unwrap();
    let rr = regular_reduce(&reduce(&ht.sys, &ht.connection, &ht.qchart, &v(&[0.5]), 0).unwrap(), 0).unwrap();
    let w = pack(&v(&[1.2, 0.4]), &v(&[0.3, -0.9]), &none(), &none());
    let want = ht.formula("legendre", &[1.2, 0.3, -0.9]);
    assert!((legendre_f1(&rr, &w).unwrap() - v(&want)).amax() < 1e-10);

    let rb = free_rigid_body(1.0, 2.0, 3.0).unwrap();
    let rr = regular_reduce(&reduce(&rb.sys, &rb.connection, &rb.qchart, &rb.default_mu, 0).unwrap(), 0).unwrap();
    let w = pack(&none(), &none(), &v(&[1.0, 0.5]), &none());
    assert!((energy(&rr, &w).unwrap() + rr.rbar(&v(&[1.0, 0.5]), &none()).unwrap()).abs() < 1e-12);
}

#[test]
fn form_ranks() {
    let toy = toy_cyclic(|q| 0.5 * q * q).unwrap();
    let red = reduce(&toy.sys, &toy.connection, &toy.qchart, &v(&[1.0]), 0).unwrap();
    let w = pack(&v(&[0.3]), &v(&[0.7]), &none(), &v(&[-0.4]));
    let f = presymplectic_form(&red, &w).unwrap();
    assert_eq!(f.kernel_dim(), 1);
    assert_eq!(f.provenance, FormProvenance::Sum);
    assert_eq!((&f.matrix + f.matrix.transpose()).amax(), 0.0);

    let rb = free_rigid_body(1.0, 2.0, 3.0).unwrap();
    let ht = heavy_top_magnetic(HeavyTopParams::default()).unwrap();
    let tt = tippe_top(TippeTopParams::default()).unwrap();
    for (b, w) in [
        (&rb, pack(&none(), &none(), &v(&[1.0, 0.5]), &none())),
        (&ht, pack(&v(&[1.2, 0.4]), &v(&[0.3, -0.9]), &none(), &none())),
        (&tt, pack(&v(&[0.8, 0.1]), &v(&[0.3, 2.0]), &none(), &none())),
    ] {
        let rr = regular_reduce(&reduce(&b.sys, &b.connection, &b.qchart, &b.default_mu, 0).unwrap(), 0).unwrap();
        let f = presymplectic_form(&rr, &w).unwrap();
        assert_eq!(f.kernel_dim(), 0, "{}", b.name);
        assert!(f.condition() < 1e10);
        assert_eq!((&f.matrix + f.matrix.transpose()).amax(), 0.0);
    }
}

#[test]
fn residual_vanishes_along_reduced_flows() {
    let rb = free_rigid_body(1.0, 2.0, 3.0).unwrap();
    let s_rb = state_with_momentum(&rb, &v(&[0.3, 1.1, 0.7]), &rb.default_mu, &v(&[0.0, 0.0, 0.0]));
    let ht = heavy_top_magnetic(HeavyTopParams::default()).unwrap();
    let s_ht = ChartState::from_slices(&[0.4, 1.0, 0.3], &[0.7, 0.2, 1.5]);
    let tt = tippe_top(TippeTopParams::default()).unwrap();
    let s_tt = ChartState::from_slices(&[0.0, 0.5, 0.0], &[0.0, 0.1, 8.0]);
    for (b, s0) in [(&rb, s_rb), (&ht, s_ht), (&tt, s_tt)] {
        let mu = momentum_map(&b.sys, &b.action, &s0);
        let red = reduce(&b.sys, &b.connection, &b.qchart, &mu, 0).unwrap();
        let rr = regular_reduce(&red, 0).unwrap();
        let (z0, vx0, _) = red.project(&s0).unwrap();
        let (x0, y0) = red.split(&z0);
        let rt = integrate_reduced(&rr, &x0, &vx0, &y0, 0.0, 1.0, 1e-3).unwrap();
        assert!(residual_along(&rr, &rt).unwrap() < 1e-5, "{}", b.name);
        assert!(residual_along(&red, &rt).unwrap() < 1e-5, "{}", b.name);
    }
}

#[test]
fn least_squares_recovers_the_regular_flow() {
    let ht = heavy_top_magnetic(HeavyTopParams::default()).unwrap();
    let rr = regular_reduce(&reduce(&ht.sys, &ht.connection, &ht.qchart, &v(&[0.5]), 0).unwrap(), 0).unwrap();
    let (z, vx) = (v(&[1.2, 0.4]), v(&[0.3, -0.9]));
    let w = pack(&v(&[1.2, 0.4]), &vx, &none(), &none());
    let f = rr.fbar(&z, &vx).unwrap();
    let at_rest = presymplectic_residual(&rr, &w, &Vector::zeros(4), &f).unwrap();
    assert!(at_rest.amax() > 1e-3);
    let wrong = presymplectic_residual(&rr, &w, &v(&[1.0, 1.0, 1.0, 1.0]), &f).unwrap();
    assert!(wrong.amax() > 1e-3);
    let check = pointwise_constraint_check(&rr, &w, &f).unwrap();
    assert!(check.solvable && check.kernel_dim == 0);
    let vf = rr.vector_field(&z, &vx, None).unwrap();
    assert!((check.velocity.rows(0, 2) - &vf.zdot).amax() < 1e-7);
    assert!((check.velocity.rows(2, 2) - &vf.accel).amax() < 1e-6);
    assert!(presymplectic_residual(&rr, &w, &check.velocity, &f).unwrap().amax() < 1e-8);
}

#[test]
fn toy_constraint_set() {
    let toy = toy_cyclic(|q| 0.5 * q * q).unwrap();
    let mu = 1.0;
    let red = reduce(&toy.sys, &toy.connection, &toy.qchart, &v(&[mu]), 0).unwrap();
    for (x, xi) in [(0.3, -0.4), (-1.1, 2.0), (0.0, 0.0)] {
        for (vx, solvable) in [(mu, true), (mu + 0.3, false), (mu - 1e-3, false)] {
            let w = pack(&v(&[x]), &v(&[vx]), &none(), &v(&[xi]));
            let f = red.force(&v(&[x]), &v(&[vx]), &v(&[xi]));
            let c = pointwise_constraint_check(&red, &w, &f).unwrap();
            assert_eq!(c.solvable, solvable, "x {x} v {vx}: {c:?}");
            assert_eq!(c.kernel_dim, 1);
        }
    }
}

/// Curve (x, ξ̃) of the toy reduced system: x = x₀ + vt, ξ̃ = ξ₀ − x₀t − vt²/2.
fn toy_curve(v0: f64, shift: f64) -> (Trajectory, Vec<Jet>) {
    let chart = Arc::new(routh::calculus::Chart::new("toy/R", &["q1"]));
    let mut tr = Trajectory::new(chart);
    let mut jets = Vec::new();
    let (x0, xi0) = (0.2, 0.5);
    for i in 0..=200 {
        let t = i as f64 * 5e-3;
        let x = x0 + v0 * t;
        let xi = xi0 - x0 * t - v0 * t * t / 2.0 + shift * t * t;
        let xid = -x0 - v0 * t + 2.0 * shift * t;
        let xidd = -v0 + 2.0 * shift;
        tr.push_diag("xi", v(&[xi]));
        tr.push(t, ChartState::from_slices(&[x], &[v0]));
        jets.push(Jet::new(v(&[x, xi]), v(&[v0, xid]), v(&[0.0, xidd])));
    }
    (tr, jets)
}

#[test]
fn residual_equivalence_with_split_equations() {
    let toy = toy_cyclic(|q| 0.5 * q * q).unwrap();
    let red = reduce(&toy.sys, &toy.connection, &toy.qchart, &v(&[1.0]), 0).unwrap();
    let fibred = red.as_fibred(0).unwrap();
    let conn = FibredConnection::zero(1, 1);
    for (v0, shift, critical) in [(1.0, 0.0, true), (1.2, 0.0, false), (1.0, 0.3, false)] {
        let (tr, jets) = toy_curve(v0, shift);
        let pre = residual_along(&red, &tr).unwrap();
        let split = jets
            .iter()
            .map(|j| {
                let (h, vv) = fibred.split_el_residual(&conn, j).unwrap();
                h.amax().max(vv.amax())
            })
            .fold(0.0, f64::max);
        if critical {
            assert!(pre <= 1e-5 && split <= 1e-5, "{pre} {split}");
        } else {
            assert!(pre >= 1e-3 && split >= 1e-3, "{pre} {split}");
        }
    }
}

#[test]
fn lagrange_poincare_residuals() {
    let rb = free_rigid_body(1.0, 2.0, 3.0).unwrap();
    let s0 = state_with_momentum(&rb, &v(&[0.3, 1.1, 0.7]), &rb.default_mu, &v(&[0.0, 0.0, 0.0]));
    let full = integrate_full(&rb.sys, &s0, 0.0, 1.0, 1e-3, None).unwrap();
    let red = reduce(&rb.sys, &rb.connection, &rb.qchart, &rb.default_mu, 0).unwrap();
    let mut curve = project_trajectory(&rb.connection, &rb.qchart, &full).unwrap();
    let (vert, hor) = lagrange_poincare_residual(&red, &curve).unwrap().sup();
    assert!(vert < 1e-5 && hor < 1e-5);
    // perturbing ξ̃ breaks the vertical equation
    for xi in curve.diagnostics.get_mut("xi").unwrap() {
        xi[0] *= 1.1;
    }
    assert!(lagrange_poincare_residual(&red, &curve).unwrap().sup().0 > 1e-3);

    let ht = heavy_top_magnetic(HeavyTopParams::default()).unwrap();
    let s0 = ChartState::from_slices(&[0.4, 1.0, 0.3], &[0.7, 0.2, 1.5]);
    let mu = momentum_map(&ht.sys, &ht.action, &s0);
    let full = integrate_full(&ht.sys, &s0, 0.0, 1.0, 1e-3, None).unwrap();
    for conn in [&ht.connection, ht.flat_connection.as_ref().unwrap()] {
        let red = reduce(&ht.sys, conn, &ht.qchart, &mu, 0).unwrap();
        let curve = project_trajectory(conn, &ht.qchart, &full).unwrap();
        let (vert, hor) = lagrange_poincare_residual(&red, &curve).unwrap().sup();
        // abelian: the vertical equation is conservation of 𝔽_ξ̃ l
        assert!(vert < 1e-5 && hor < 1e-5, "{vert} {hor}");
    }
    let tt = by_name("tippe-top", &BTreeMap::new()).unwrap();
    let s0 = ChartState::from_slices(&[0.0, 0.5, 0.0], &[0.0, 0.1, 8.0]);
    let mu = momentum_map(&tt.sys, &tt.action, &s0);
    let full = integrate_full(&tt.sys, &s0, 0.0, 1.0, 1e-3, None).unwrap();
    let red = reduce(&tt.sys, &tt.connection, &tt.qchart, &mu, 0).unwrap();
    let mut curve = project_trajectory(&tt.connection, &tt.qchart, &full).unwrap();
    let (vert, hor) = lagrange_poincare_residual(&red, &curve).unwrap().sup();
    assert!(vert < 1e-5 && hor < 1e-5, "{vert} {hor}");
    for s in curve.states.iter_mut() {
        s.v[0] += 0.05;
    }
    assert!(lagrange_poincare_residual(&red, &curve).unwrap().sup().1 > 1e-3);
}
