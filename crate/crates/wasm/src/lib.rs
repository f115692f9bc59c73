//! Browser bindings: a reduced rigid-body orbit, the Larmor shift of the
//! magnetic heavy top and a short invariant summary for any built-in.
//!
//! Build with `wasm-pack build --target web --out-dir www/pkg`.

use std::collections::BTreeMap;

use routh::calculus::{ChartState, Halton, Vector};
use routh::reconstruction::reconstruct;
use routh::routh::{integrate_reduced, reduce, regular_reduce, routhian_momentum, Routhian};
use routh::symmetry::{check_invariance, momentum_map};
use routh::systems::{by_name, free_rigid_body, heavy_top_magnetic, HeavyTopParams};
use wasm_bindgen::prelude::*;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

/// Free rigid body reduced at |μ| = `mu`: flat `[t, θ, ψ, E_R, ...]`.
#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn rigid_body_orbit(
    i1: f64,
    i2: f64,
    i3: f64,
    mu: f64,
    theta0: f64,
    psi0: f64,
    t1: f64,
    dt: f64,
) -> Result<Vec<f64>, String> {
    let rb = free_rigid_body(i1, i2, i3).map_err(|e| e.to_string())?;
    let red = reduce(&rb.sys, &rb.connection, &rb.qchart, &v(&[0.0, 0.0, mu]), 0).map_err(|e| e.to_string())?;
    let rr = regular_reduce(&red, 0).map_err(|e| e.to_string())?;
    let none = Vector::zeros(0);
    let tr = integrate_reduced(&rr, &none, &none, &v(&[theta0, psi0]), 0.0, t1, dt).map_err(|e| e.to_string())?;
    let energy = tr.channel("E_R").map_err(|e| e.to_string())?;
    Ok(tr
        .times
        .iter()
        .zip(&tr.states)
        .zip(energy)
        .flat_map(|((t, s), e)| [*t, s.q[0], s.q[1], e[0]])
        .collect())
}

/// φ̇ with field `omega_b` minus φ̇ without it, from the same reduced data:
/// flat `[t, Δφ̇, ...]`. Should hover at `omega_b`.
#[wasm_bindgen]
pub fn larmor_shift(omega_b: f64, mu: f64, theta0: f64, t1: f64, dt: f64) -> Result<Vec<f64>, String> {
    let phi_dot = |omega_b: f64| -> routh::Result<(Vec<f64>, Vec<f64>)> {
        let ht = heavy_top_magnetic(HeavyTopParams { omega_b, ..Default::default() })?;
        let red = reduce(&ht.sys, &ht.connection, &ht.qchart, &v(&[mu]), 0)?;
        let rr = regular_reduce(&red, 0)?;
        let rt = integrate_reduced(&rr, &v(&[theta0, 0.0]), &v(&[0.2, 1.5]), &Vector::zeros(0), 0.0, t1, dt)?;
        let rec = reconstruct(&ht.connection, &ht.qchart, &rt, &v(&[0.0, theta0, 0.0]))?;
        Ok((rec.times.clone(), rec.states.iter().map(|s| s.v[0]).collect()))
    };
    let (times, with) = phi_dot(omega_b).map_err(|e| e.to_string())?;
    let (_, without) = phi_dot(0.0).map_err(|e| e.to_string())?;
    Ok(times.iter().zip(with.iter().zip(&without)).flat_map(|(t, (a, b))| [*t, a - b]).collect())
}

/// One `name: value` line per quantity.
#[wasm_bindgen]
pub fn invariant_summary(system: &str) -> Result<String, String> {
    let b = by_name(system, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let inv = check_invariance(&b.sys, &b.action, 30, 0);
    let red = reduce(&b.sys, &b.connection, &b.qchart, &b.default_mu, 0).map_err(|e| e.to_string())?;
    let greg = red.g_regularity_test(20, 0);
    let r = Routhian::new(b.sys.clone(), b.connection.clone(), b.default_mu.clone());
    let n = b.sys.dim();
    let mut ident: f64 = 0.0;
    for u in Halton::new(2 * n, 0).take(50) {
        let q = b.sys.chart.sample_point(&u[..n]);
        let s = ChartState::new(q, Vector::from_iterator(n, u[n..].iter().map(|x| 4.0 * x - 2.0)));
        let want = momentum_map(&b.sys, &b.action, &s) - &b.default_mu;
        ident = ident.max((routhian_momentum(&r, &s) - want).amax());
    }
    Ok(format!(
        "system: {}\ncoordinates: {}\nG-regular: {}\nL invariance defect: {:.2e}\nforce invariance defect: {:.2e}\nRouthian momentum identity error: {:.2e}\n",
        b.name,
        b.sys.chart.coord_names.join(", "),
        greg.is_regular,
        inv.max_l_violation,
        inv.max_f1_violation.max(inv.max_f2_violation),
        ident,
    ))
}
