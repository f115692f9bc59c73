//! Reconstruction of full motions from reduced ones: horizontal lifts, the
//! group ODE and trajectory comparison.

use nalgebra::Vector3;

use crate::calculus::{grid_derivative, wrap_angle, Chart, ChartState, Trajectory, Vector};
use crate::connection::{horizontal_lift, join, PrincipalConnection, QuotientChart};
use crate::error::{Error, Result};
use crate::symmetry::{so3, GroupElement, LieGroup, Side};

/// Cubic Lagrange interpolation on the four grid points around `t`.
pub fn interpolate(times: &[f64], values: &[Vector], t: f64) -> Vector {
    let n = times.len();
    assert!(n > 0 && n == values.len());
    if n == 1 {
        return values[0].clone();
    }
    let i = times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
    let w = n.min(4);
    let start = i.saturating_sub(1).min(n - w);
    let nodes = &times[start..start + w];
    let mut out = Vector::zeros(values[0].len());
    for k in 0..w {
        let mut lk = 1.0;
        for m in (0..w).filter(|&m| m != k) {
            lk *= (t - nodes[m]) / (nodes[k] - nodes[m]);
        }
        out += &values[start + k] * lk;
    }
    out
}

/// Classical RK4 on a prescribed grid, with a time-dependent field that may fail.
fn rk4_on_grid(
    times: &[f64],
    z0: &Vector,
    mut field: impl FnMut(f64, &Vector) -> Result<Vector>,
    mut project: impl FnMut(Vector) -> Vector,
) -> Result<Vec<Vector>> {
    let mut out = Vec::with_capacity(times.len());
    let mut z = z0.clone();
    out.push(z.clone());
    for w in times.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        let k1 = field(t, &z)?;
        let k2 = field(t + 0.5 * h, &(&z + &k1 * (0.5 * h)))?;
        let k3 = field(t + 0.5 * h, &(&z + &k2 * (0.5 * h)))?;
        let k4 = field(t + h, &(&z + &k3 * h))?;
        z = project(&z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
        if !z.iter().all(|x| x.is_finite()) {
            return Err(Error::IntegrationBlowup { last_good_t: t });
        }
        out.push(z.clone());
    }
    Ok(out)
}

/// The horizontal curve through `q_a` over the base curve `xs` (velocities
/// `vxs`, or grid differences when `None`).
pub fn horizontal_lift_curve(
    conn: &PrincipalConnection,
    qc: &QuotientChart,
    times: &[f64],
    xs: &[Vector],
    vxs: Option<&[Vector]>,
    q_a: &Vector,
) -> Result<Vec<ChartState>> {
    let x_a = qc.project_base(q_a);
    let gap = chart_distance(&qc.base_chart(), &x_a, &xs[0]);
    if gap > 1e-10 {
        return Err(Error::GaugeAnchor { distance: gap });
    }
    let owned;
    let vxs = match vxs {
        Some(v) => v,
        None => {
            owned = grid_derivative(times, xs);
            &owned
        }
    };
    let chart = &conn.action.chart;
    let qs = rk4_on_grid(
        times,
        q_a,
        |t, q| {
            if chart.is_singular(q) {
                return Err(Error::ChartSingularity { chart: chart.name.clone(), t });
            }
            Ok(horizontal_lift(conn, qc, &interpolate(times, vxs, t), q))
        },
        |q| q,
    )?;
    Ok(qs
        .into_iter()
        .zip(vxs)
        .map(|(q, vx)| {
            let v = horizontal_lift(conn, qc, vx, &q);
            ChartState::new(q, v)
        })
        .collect())
}

/// Solves ġ = ξ(t) g (right actions) or ġ = g ξ(t) (left actions) from `g_a`.
/// SO(3) steps are projected back onto the group by polar decomposition;
/// ξ is interpolated between grid points by cubics.
pub fn solve_group_ode(
    group: LieGroup,
    side: Side,
    times: &[f64],
    xi: &[Vector],
    g_a: &GroupElement,
) -> Result<Vec<GroupElement>> {
    match group {
        LieGroup::SO3 => {
            let a0 = g_a.as_rot();
            let z0 = Vector::from_column_slice(a0.as_slice());
            let zs = rk4_on_grid(
                times,
                &z0,
                |t, z| {
                    let g = nalgebra::Matrix3::from_column_slice(z.as_slice());
                    let w = interpolate(times, xi, t);
                    let k = so3::hat(&Vector3::new(w[0], w[1], w[2]));
                    let d = match side {
                        Side::Right => k * g,
                        Side::Left => g * k,
                    };
                    Ok(Vector::from_column_slice(d.as_slice()))
                },
                |z| {
                    let g = so3::polar(&nalgebra::Matrix3::from_column_slice(z.as_slice()));
                    Vector::from_column_slice(g.as_slice())
                },
            )?;
            Ok(zs
                .into_iter()
                .map(|z| GroupElement::Rot(nalgebra::Matrix3::from_column_slice(z.as_slice())))
                .collect())
        }
        _ => {
            let zs = rk4_on_grid(times, g_a.as_vec(), |t, _| Ok(interpolate(times, xi, t)), |z| z)?;
            Ok(zs.into_iter().map(GroupElement::Vec).collect())
        }
    }
}

/// Largest coordinate distance, angular coordinates taken modulo 2π.
pub fn chart_distance(chart: &Chart, a: &Vector, b: &Vector) -> f64 {
    (0..a.len())
        .map(|i| {
            let d = a[i] - b[i];
            if chart.angular[i] {
                wrap_angle(d).abs()
            } else {
                d.abs()
            }
        })
        .fold(0.0, f64::max)
}

/// Full trajectory with π_μ(q(t)) = z(t) and ω(q̇) represented by ξ̃(t),
/// anchored at `q_a`. `reduced` holds states (z, ż) and an `xi` channel.
pub fn reconstruct(
    conn: &PrincipalConnection,
    qc: &QuotientChart,
    reduced: &Trajectory,
    q_a: &Vector,
) -> Result<Trajectory> {
    let n = qc.base_dim;
    let xi_t = reduced.channel("xi")?;
    let z_a = &reduced.states[0].q;
    let gap = chart_distance(&qc.chart, &qc.project(q_a), z_a);
    if gap > 1e-10 {
        return Err(Error::GaugeAnchor { distance: gap });
    }
    let times = &reduced.times;
    let xs: Vec<Vector> = reduced.states.iter().map(|s| s.q.rows(0, n).into_owned()).collect();
    let vxs: Vec<Vector> = reduced.states.iter().map(|s| s.v.rows(0, n).into_owned()).collect();
    let lift = horizontal_lift_curve(conn, qc, times, &xs, Some(&vxs), q_a)?;
    let xi_h: Vec<Vector> = lift.iter().zip(xi_t).map(|(s, x)| qc.from_tilde(&s.q, x)).collect();
    let group = conn.group();
    let gs = solve_group_ode(group, conn.action.side, times, &xi_h, &group.identity())?;
    let mut traj = Trajectory::new(conn.action.chart.clone());
    for (((t, h), g), (vx, xi)) in times.iter().zip(&lift).zip(&gs).zip(vxs.iter().zip(xi_t)) {
        let q = conn.action.act(g, &h.q);
        let v = horizontal_lift(conn, qc, vx, &q) + conn.action.generator(&q, &qc.from_tilde(&q, xi));
        traj.push(*t, ChartState::new(q, v));
        if let GroupElement::Rot(r) = g {
            traj.push_diag("orthogonality_defect", Vector::from_element(1, so3::orthogonality_defect(r)));
        }
    }
    Ok(traj)
}

/// Supremum errors between two trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub sup_error: f64,
    pub per_channel: Vec<f64>,
}

/// Compares positions of `a` and `b` on `a`'s grid. When the grids differ,
/// `b` is resampled by cubic Hermite interpolation using its velocities.
pub fn compare_trajectories(a: &Trajectory, b: &Trajectory, weights: Option<&[f64]>) -> Result<Comparison> {
    if a.chart.dim() != b.chart.dim() || a.chart.coord_names != b.chart.coord_names {
        return Err(Error::Comparison(format!("charts differ: {} vs {}", a.chart.name, b.chart.name)));
    }
    if b.is_empty() || a.is_empty() {
        return Err(Error::Comparison("empty trajectory".into()));
    }
    let (t0, t1) = (b.times[0], *b.times.last().unwrap());
    let d = a.chart.dim();
    let mut per = vec![0.0f64; d];
    let same_grid = a.times.len() == b.times.len()
        && a.times.iter().zip(&b.times).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0));
    for (k, (t, s)) in a.times.iter().zip(&a.states).enumerate() {
        if *t < t0 - 1e-12 || *t > t1 + 1e-12 {
            return Err(Error::Comparison(format!("time {t} outside the other trajectory")));
        }
        let qb = if same_grid { b.states[k].q.clone() } else { hermite_at(b, *t) };
        for i in 0..d {
            let diff = s.q[i] - qb[i];
            let diff = if a.chart.angular[i] { wrap_angle(diff) } else { diff };
            let w = weights.map_or(1.0, |w| w[i]);
            per[i] = per[i].max(w * diff.abs());
        }
    }
    Ok(Comparison { sup_error: per.iter().cloned().fold(0.0, f64::max), per_channel: per })
}

fn hermite_at(tr: &Trajectory, t: f64) -> Vector {
    let n = tr.times.len();
    if n == 1 {
        return tr.states[0].q.clone();
    }
    let i = tr.times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
    let (ta, tb) = (tr.times[i], tr.times[i + 1]);
    let h = tb - ta;
    let s = (t - ta) / h;
    let (a, b) = (&tr.states[i], &tr.states[i + 1]);
    let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
    let h10 = s.powi(3) - 2.0 * s * s + s;
    let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
    let h11 = s.powi(3) - s * s;
    // angular coordinates are continuous along integrated curves
    &a.q * h00 + &a.v * (h10 * h) + &b.q * h01 + &b.v * (h11 * h)
}

/// Projects each state of a full trajectory to (z, ż) on Q/G_μ, with the
/// ξ̃ components in an `xi` channel.
pub fn project_trajectory(conn: &PrincipalConnection, qc: &QuotientChart, full: &Trajectory) -> Result<Trajectory> {
    let mut out = Trajectory::new(qc.chart.clone());
    for (t, s) in full.times.iter().zip(&full.states) {
        let p = crate::connection::quotient_coords(conn, qc, s)?;
        let jac = qc.projection_jacobian(&s.q);
        let zdot = jac * &s.v;
        out.push_diag("xi", p.xi);
        out.push(*t, ChartState::new(join(&p.x, &p.y), zdot));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn interpolation_reproduces_nodes_and_short_grids() {
        let times = [0.0, 0.5, 1.5];
        let vals = [v(&[1.0]), v(&[2.0]), v(&[0.0])];
        for (t, x) in times.iter().zip(&vals) {
            assert!((interpolate(&times, &vals, *t) - x).amax() < 1e-14);
        }
        assert_eq!(interpolate(&[0.0], &[v(&[3.0])], 7.0)[0], 3.0);
    }

    #[test]
    fn constant_rate_group_ode() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let w = v(&[0.3, -0.2, 0.9]);
        let xi = vec![w.clone(); times.len()];
        let g = solve_group_ode(LieGroup::SO3, Side::Left, &times, &xi, &LieGroup::SO3.identity()).unwrap();
        let want = so3::exp(&Vector3::new(0.3, -0.2, 0.9));
        assert!((g.last().unwrap().as_rot() - want).amax() < 1e-10);
        let g = solve_group_ode(LieGroup::Abelian(3), Side::Right, &times, &xi, &LieGroup::Abelian(3).identity()).unwrap();
        assert!((g.last().unwrap().as_vec() - &w).amax() < 1e-12);
    }

    #[test]
    fn angular_distance() {
        let chart = Chart::new("c", &["a", "b"]).with_angular(&[true, false]);
        assert!(chart_distance(&chart, &v(&[3.1, 0.0]), &v(&[-3.1, 0.5])) - 0.5 < 1e-12);
    }

    #[test]
    fn hermite_resampling_is_exact_on_cubics() {
        let chart = Arc::new(Chart::new("line", &["a"]));
        let mut coarse = Trajectory::new(chart.clone());
        let mut fine = Trajectory::new(chart);
        let p = |t: f64| (t * t * t - t, 3.0 * t * t - 1.0);
        for i in 0..=4 {
            let t = i as f64 * 0.25;
            coarse.push(t, ChartState::from_slices(&[p(t).0], &[p(t).1]));
        }
        for i in 0..=10 {
            let t = i as f64 * 0.1;
            fine.push(t, ChartState::from_slices(&[p(t).0], &[p(t).1]));
        }
        assert!(compare_trajectories(&fine, &coarse, None).unwrap().sup_error < 1e-14);
        let other = Trajectory::new(Arc::new(Chart::new("other", &["b"])));
        assert!(matches!(compare_trajectories(&fine, &other, None), Err(Error::Comparison(_))));
    }
}
