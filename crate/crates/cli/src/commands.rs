use std::collections::BTreeSet;
use std::time::Instant;

use routh::calculus::{ChartState, Halton, Trajectory, Vector};
use routh::connection::beta_mu_blocks;
use routh::lagrangian::{integrate_full, ConstraintClass};
use routh::presymplectic::{pack, pointwise_constraint_check, residual_along};
use routh::reconstruction::{chart_distance, compare_trajectories, project_trajectory, reconstruct};
use routh::routh::{
    connection_change_check, integrate_reduced, reduce, regular_reduce, routhian_momentum, y_derivative_identity_defect,
    ReducedSystem, RegularReducedSystem, Routhian,
};
use routh::symmetry::{check_invariance, momentum_drift, momentum_map, project_to_level, LieGroup};
use routh::systems::{by_name, SystemBundle};
use routh::Error;
use serde_json::{json, Value};

use crate::Failure;

/// Largest J_L − μ accepted after projecting the initial state.
pub const LEVEL_TOL: f64 = 1e-8;

pub struct Scenario {
    pub bundle: SystemBundle,
    pub s0: ChartState,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub mu: Option<Vector>,
    pub seed: u64,
}

/// Initial state used when the run file does not give one.
pub fn default_state(system: &str) -> (Vec<f64>, Vec<f64>) {
    match system {
        "toy" => (vec![0.5, 0.0], vec![1.0, 0.3]),
        "rigid-body" => (vec![0.3, 1.1, 0.7], vec![0.0, 0.0, 0.0]),
        "heavy-top" => (vec![0.4, 1.0, 0.3], vec![0.7, 0.2, 1.5]),
        "tippe-top" => (vec![0.0, 0.5, 0.0], vec![0.0, 0.1, 8.0]),
        _ => (vec![0.1, 0.0, 0.3, -0.2], vec![0.8, 0.3, 0.5, 0.4]),
    }
}

fn sup(values: &[Vector]) -> f64 {
    values.iter().map(|x| x.amax()).fold(0.0, f64::max)
}

impl Scenario {
    fn timed_full(&self, s0: &ChartState, t1: f64) -> Result<(Trajectory, f64), Failure> {
        let b = &self.bundle;
        let t = Instant::now();
        let tr = integrate_full(&b.sys, s0, self.t0, t1, self.dt, Some(&b.action))?;
        Ok((tr, t.elapsed().as_secs_f64()))
    }

    /// μ for reduction: the flag if given, otherwise J_L(s₀) for abelian
    /// groups and the bundle default for SO(3).
    fn target_mu(&self) -> Vector {
        let b = &self.bundle;
        self.mu.clone().unwrap_or_else(|| match b.action.group {
            LieGroup::SO3 => b.default_mu.clone(),
            _ => momentum_map(&b.sys, &b.action, &self.s0),
        })
    }

    /// Initial state moved onto J_L = μ.
    pub fn on_level(&self, mu: &Vector) -> Result<ChartState, Failure> {
        let b = &self.bundle;
        if mu.len() != b.action.group.dim() {
            return Err(Failure::config(format!("mu needs {} components, got {}", b.action.group.dim(), mu.len())));
        }
        let (s, miss) = project_to_level(&b.sys, &b.action, &self.s0, mu);
        if !(miss <= LEVEL_TOL) {
            return Err(Failure::precondition(format!(
                "initial momentum misses mu by {miss:.3e} after projection (limit {LEVEL_TOL:.0e})"
            )));
        }
        Ok(s)
    }

    fn reduced(&self) -> Result<(ChartState, ReducedSystem), Failure> {
        let b = &self.bundle;
        let mu = self.target_mu();
        let s0 = self.on_level(&mu)?;
        let red = reduce(&b.sys, &b.connection, &b.qchart, &mu, self.seed)?;
        Ok((s0, red))
    }

    fn run_reduced(
        &self,
        red: &ReducedSystem,
        s0: &ChartState,
        t1: f64,
    ) -> Result<(RegularReducedSystem, Trajectory, f64), Failure> {
        let rr = regular_reduce(red, self.seed)?;
        let (z0, vx0, _) = red.project(s0)?;
        let (x0, y0) = red.split(&z0);
        let t = Instant::now();
        let rt = integrate_reduced(&rr, &x0, &vx0, &y0, self.t0, t1, self.dt)?;
        Ok((rr, rt, t.elapsed().as_secs_f64()))
    }
}

pub fn simulate(sc: &Scenario) -> Result<Trajectory, Failure> {
    let s0 = match &sc.mu {
        Some(mu) => sc.on_level(mu)?,
        None => sc.s0.clone(),
    };
    Ok(sc.timed_full(&s0, sc.t1)?.0)
}

pub fn reconstruct_run(sc: &Scenario) -> Result<Trajectory, Failure> {
    let (s0, red) = sc.reduced()?;
    let (_, rt, _) = sc.run_reduced(&red, &s0, sc.t1)?;
    Ok(reconstruct(&sc.bundle.connection, &sc.bundle.qchart, &rt, &s0.q)?)
}

pub fn reduce_report(sc: &Scenario) -> Result<Value, Failure> {
    let b = &sc.bundle;
    let (s0, red) = sc.reduced()?;
    let greg = red.g_regularity_test(20, sc.seed);
    let (full, full_time) = sc.timed_full(&s0, sc.t1)?;
    let head = json!({
        "system": b.name,
        "mu": red.mu.as_slice(),
        "t0": sc.t0, "t1": sc.t1, "dt": sc.dt, "seed": sc.seed,
        "g_regular": greg.is_regular,
        "worst_condition": greg.worst_condition,
        "momentum_drift_full": momentum_drift(&full)?.amax(),
        "runtime_full_s": full_time,
    });
    let body = if greg.is_regular {
        let (rr, rt, red_time) = sc.run_reduced(&red, &s0, sc.t1)?;
        let proj = project_trajectory(&b.connection, &b.qchart, &full)?;
        let cmp = compare_trajectories(&proj, &rt, None)?;
        json!({
            "routes": ["regular"],
            "sup_error": cmp.sup_error,
            "momentum_drift_reduced": sup(rt.channel("momentum_constraint")?),
            "presymplectic_residual_sup": residual_along(&rr, &rt)?,
            "runtime_reduced_s": red_time,
        })
    } else {
        let fibred = red.as_fibred(sc.seed)?;
        let class = fibred.classify_constraint(sc.seed);
        let mut body = json!({
            "routes": ["pointwise-constraint-check"],
            "constraint_class": class.to_string(),
            "pointwise_check": pointwise_summary(sc, &red)?,
        });
        if let (ConstraintClass::Linear, Some(lin), 0) = (class, fibred.as_linear(), red.fibre_dim()) {
            let (z0, vx0, _) = red.project(&s0)?;
            let t = Instant::now();
            let tr = lin.solve_constrained(&ChartState::new(z0, vx0), None, sc.t0, sc.t1, sc.dt)?;
            let lin_time = t.elapsed().as_secs_f64();
            let mut err: f64 = 0.0;
            for (a, f) in tr.states.iter().zip(&full.states) {
                let (z, _, _) = red.project(f)?;
                err = err.max(chart_distance(&lin.base, &a.q, &z));
            }
            body["routes"].as_array_mut().unwrap().push(json!("linear-constraint"));
            body["linear_constraint"] = json!({
                "sup_error_vs_full": err,
                "constraint_residual_sup": sup(tr.channel("constraint")?),
                "runtime_constrained_s": lin_time,
            });
        }
        body
    };
    let mut out = head;
    out.as_object_mut().unwrap().extend(body.as_object().unwrap().clone());
    Ok(out)
}

/// Samples states on and off the momentum level and asks whether the
/// presymplectic equation is solvable at their reductions.
fn pointwise_summary(sc: &Scenario, red: &ReducedSystem) -> Result<Value, Failure> {
    let b = &sc.bundle;
    let n = b.sys.dim();
    let (mut on_ok, mut on_res, mut off_ok, mut off_res) = (0usize, 0.0f64, 0usize, f64::INFINITY);
    let mut kernels = BTreeSet::new();
    let samples = 20;
    for u in Halton::new(n + 1, sc.seed).take(samples) {
        let q = b.sys.chart.sample_point(&u[..n]);
        let s = ChartState::new(q, Vector::from_iterator(n, (0..n).map(|i| 2.0 * u[(i + 1) % n] - 1.0)));
        let shift = 0.05 + 0.5 * u[n];
        for off in [false, true] {
            let mu = if off { red.mu.add_scalar(shift) } else { red.mu.clone() };
            let (st, _) = project_to_level(&b.sys, &b.action, &s, &mu);
            let (z, v_x, xi) = red.project(&st)?;
            let (x, y) = red.split(&z);
            let c = pointwise_constraint_check(red, &pack(&x, &v_x, &y, &xi), &red.force(&z, &v_x, &xi))?;
            if off {
                off_ok += usize::from(!c.solvable);
                off_res = off_res.min(c.residual);
            } else {
                on_ok += usize::from(c.solvable);
                on_res = on_res.max(c.residual);
                kernels.insert(c.kernel_dim);
            }
        }
    }
    Ok(json!({
        "samples": samples,
        "on_level": { "solvable": on_ok, "max_residual": on_res, "kernel_dims": kernels },
        "off_level": { "unsolvable": off_ok, "min_residual": off_res },
        "consistent": on_ok == samples && off_ok == samples,
    }))
}

pub fn compare_report(sc: &Scenario) -> Result<Value, Failure> {
    let b = &sc.bundle;
    let (s0, red) = sc.reduced()?;
    let (full, full_time) = sc.timed_full(&s0, sc.t1)?;
    let (_, rt, red_time) = sc.run_reduced(&red, &s0, sc.t1)?;
    let rec = reconstruct(&b.connection, &b.qchart, &rt, &s0.q)?;
    let cmp = compare_trajectories(&rec, &full, None)?;
    let proj = compare_trajectories(&project_trajectory(&b.connection, &b.qchart, &full)?, &rt, None)?;
    let per: serde_json::Map<String, Value> =
        b.sys.chart.coord_names.iter().cloned().zip(cmp.per_channel.iter().map(|x| json!(x))).collect();
    Ok(json!({
        "system": b.name,
        "mu": red.mu.as_slice(),
        "t0": sc.t0, "t1": sc.t1, "dt": sc.dt,
        "sup_error": cmp.sup_error,
        "per_coordinate": per,
        "sup_error_reduced": proj.sup_error,
        "runtime_full_s": full_time,
        "runtime_reduced_s": red_time,
    }))
}

struct Battery(Vec<Value>);

impl Battery {
    fn record(&mut self, name: &str, value: f64, tol: f64) {
        self.0.push(json!({ "name": name, "pass": value <= tol, "value": value, "tol": tol }));
    }

    fn passed(&self) -> bool {
        self.0.iter().all(|e| e["pass"] == json!(true))
    }
}

/// Invariant battery on a built-in system. The bool is false when any entry fails.
pub fn check_report(system: &str, sc: Result<Scenario, Failure>) -> Result<(Value, bool), Failure> {
    let sc = match sc {
        Ok(sc) => sc,
        // the bundle refuses to build when the symmetry is broken
        Err(Failure { source: Some(Error::NotInvariant { what, defect }), .. }) => {
            let report = json!({
                "system": system,
                "invariants": [{ "name": "invariance", "pass": false, "value": defect, "tol": 1e-8, "detail": what }],
                "pass": false,
            });
            return Ok((report, false));
        }
        Err(e) => return Err(e),
    };
    let b = &sc.bundle;
    let seed = sc.seed;
    let mut bat = Battery(Vec::new());
    let inv = check_invariance(&b.sys, &b.action, 50, seed);
    bat.record("invariance", inv.max_l_violation.max(inv.max_f1_violation).max(inv.max_f2_violation), 1e-8);
    let (repro, equiv) = b.connection.axiom_defects(50, seed);
    bat.record("connection_axioms", repro.max(equiv), 1e-8);

    let mu = sc.target_mu();
    let rt = Routhian::new(b.sys.clone(), b.connection.clone(), mu.clone());
    let n = b.sys.dim();
    let mut ident: f64 = 0.0;
    for u in Halton::new(2 * n, seed).take(100) {
        let q = b.sys.chart.sample_point(&u[..n]);
        let s = ChartState::new(q, Vector::from_iterator(n, u[n..].iter().map(|x| 4.0 * x - 2.0)));
        let want = momentum_map(&b.sys, &b.action, &s) - &mu;
        ident = ident.max((routhian_momentum(&rt, &s) - want).amax());
    }
    bat.record("routhian_momentum_identity", ident, 1e-9);

    let t1 = sc.t0 + 1.0;
    let s0 = sc.on_level(&mu)?;
    let (full, _) = sc.timed_full(&s0, t1)?;
    bat.record("momentum_conservation", momentum_drift(&full)?.amax(), 1e-6);

    let red = reduce(&b.sys, &b.connection, &b.qchart, &mu, seed)?;
    let mut mixed: f64 = 0.0;
    for u in Halton::new(b.qchart.chart.dim(), seed).take(20) {
        let z = b.qchart.chart.sample_point(&u);
        let (x, y) = b.qchart.split(&z);
        mixed = mixed.max(beta_mu_blocks(&b.connection, &b.qchart, &mu, &x, &y).mixed.amax());
    }
    bat.record("beta_mixed_block", mixed, 1e-8);
    bat.record("y_derivative_identity", y_derivative_identity_defect(&red, 20, seed), 1e-8);
    if let Some(flat) = &b.flat_connection {
        let red2 = reduce(&b.sys, flat, &b.qchart, &mu, seed)?;
        bat.record("connection_change", connection_change_check(&red, &red2, 30, seed).max(), 1e-7);
    }
    let greg = red.g_regularity_test(20, seed);
    if greg.is_regular {
        let (rr, tr, _) = sc.run_reduced(&red, &s0, t1)?;
        bat.record("presymplectic_residual", residual_along(&rr, &tr)?, 1e-5);
    }
    let pass = bat.passed();
    let report = json!({
        "system": b.name,
        "seed": seed,
        "mu": mu.as_slice(),
        "g_regular": greg.is_regular,
        "invariants": bat.0,
        "pass": pass,
    });
    Ok((report, pass))
}

pub fn list_systems() -> Result<Value, Failure> {
    let mut out = Vec::new();
    for name in routh::systems::SYSTEM_NAMES {
        let b = by_name(name, &Default::default())?;
        out.push(json!({
            "name": name,
            "coordinates": b.sys.chart.coord_names,
            "group": match b.action.group {
                LieGroup::SO3 => "SO(3)".to_string(),
                LieGroup::Abelian(k) => format!("R^{k}"),
                LieGroup::Torus(k) => format!("T^{k}"),
            },
            "params": b.params,
            "default_mu": b.default_mu.as_slice(),
        }));
    }
    Ok(Value::Array(out))
}
