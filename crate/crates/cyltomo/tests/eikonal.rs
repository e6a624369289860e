use std::f64::consts::PI;

use cyltomo::eikonal::*;
use cyltomo::geometry::{CartGrid, CylGrid, CylinderSpec};
use cyltomo::phantom::{build_phantom, InclusionSpec, RefractiveField};

const H: f64 = 1.0 / 40.0;

fn homogeneous(n: f64) -> RefractiveField {
    RefractiveField::constant(CartGrid::for_cylinder(&CylinderSpec::default(), H).unwrap(), n)
}

#[test]
fn homogeneous_point_values() {
    let t = solve_eikonal(&homogeneous(1.0), 0.5).unwrap();
    assert!((t.at(0.5, 0.0, 0.5).unwrap() - 0.5).abs() <= 2.0 * H);
    assert!((t.at(0.3, 0.4, 1.0).unwrap() - 0.5f64.sqrt()).abs() <= 2.0 * H);
    assert!(t.causal);
    assert_eq!(t.at(0.0, 0.0, 0.5).unwrap(), 0.0);
}

#[test]
fn constant_index_scales_times() {
    let t1 = solve_eikonal(&homogeneous(1.0), 0.3).unwrap();
    let t2 = solve_eikonal(&homogeneous(2.0), 0.3).unwrap();
    for (a, b) in t1.tau.iter().zip(&t2.tau) {
        assert!((b - 2.0 * a).abs() < 1e-12 * (1.0 + b));
    }
}

#[test]
fn source_outside_is_rejected() {
    let f = homogeneous(1.0);
    assert!(matches!(solve_eikonal(&f, 1.5), Err(EikonalError::SourceOutside { .. })));
}

#[test]
fn travel_time_dominates_distance_in_letter_phantom() {
    let spec = CylinderSpec::default();
    let g = CartGrid::for_cylinder(&spec, H).unwrap();
    let f = build_phantom(&InclusionSpec::letter_b_vertical(3.0), &spec, &g).unwrap();
    let t = solve_eikonal(&f, 0.4).unwrap();
    assert!(t.causal);
    for ix in 0..g.m {
        for iy in 0..g.m {
            for iz in 0..g.m_z {
                let (x, y, z) = g.point(ix, iy, iz);
                let d = (x * x + y * y + (z - 0.4).powi(2)).sqrt();
                assert!(t.tau[g.index(ix, iy, iz)] >= d - 2.0 * H);
            }
        }
    }
}

#[test]
fn monotonicity_holds_for_homogeneous_and_radial_ramp() {
    let spec = CylinderSpec::default();
    let cyl = CylGrid::new(spec, 20, 32, 20).unwrap();
    let z0s: Vec<f64> = (1..20).map(|j| j as f64 / 20.0).collect();
    let g = CartGrid::for_cylinder(&spec, H).unwrap();
    let ramp = RefractiveField::from_fn(g.clone(), |x, y, _| {
        let r = x.hypot(y);
        1.0 + 0.5 * ((r - 0.2) / 0.6).clamp(0.0, 1.0)
    });
    for field in [homogeneous(1.0), ramp] {
        let tables = solve_sources(&field, &z0s, &FmmOptions::default()).unwrap();
        let rep = monotonicity_check(&tables, &cyl, 2.0 * H).unwrap();
        assert!(rep.holds, "{rep:?}");
        assert!((rep.c - 0.0099995).abs() < 1e-7);
    }
}

fn cyl_field(spec: CylinderSpec, f: impl Fn(f64, f64, f64) -> f64) -> CylField {
    let grid = CylGrid::new(spec, 40, 64, 40).unwrap();
    let mut values = vec![0.0; grid.len()];
    for (m, &r) in grid.r_nodes().iter().enumerate() {
        for i in 0..grid.n_phi {
            for j in 0..grid.nz() {
                let (x, y) = (r * grid.phi(i).cos(), r * grid.phi(i).sin());
                values[grid.index(m, i, j)] = f(x, y, grid.z(j));
            }
        }
    }
    CylField { grid, values }
}

#[test]
fn straight_rays_in_homogeneous_medium() {
    let field = cyl_field(CylinderSpec::default(), |_, _, _| 1.0);
    let path = trace_geodesic(&field, 0.5, PI / 2.0, 0.3, 10.0, 1e-10).unwrap();
    for st in &path[1..] {
        assert!((st.r - st.s).abs() < 1e-9);
        assert!((st.z - 0.5).abs() < 1e-12);
        assert!((st.phi - 0.3).abs() < 1e-12);
        assert!((st.q[0] - 1.0).abs() < 1e-12 && st.q[1].abs() < 1e-12 && st.q[2].abs() < 1e-12);
    }
    assert!((path.last().unwrap().r - 1.0).abs() < 1e-9);
    let path = trace_geodesic(&field, 0.2, PI / 4.0, 0.0, 10.0, 1e-10).unwrap();
    for st in &path {
        assert!((st.r - st.s / 2f64.sqrt()).abs() < 1e-9);
        assert!((st.z - 0.2 - st.s / 2f64.sqrt()).abs() < 1e-9);
    }
}

#[test]
fn hamiltonian_is_conserved_through_inclusion() {
    let spec = CylinderSpec::default();
    let inc = InclusionSpec::letter_b_vertical(1.5);
    let field = cyl_field(spec, |x, y, z| inc.index_at(&spec, x, y, z));
    for (theta, phi) in [(1.3, 0.0), (1.7, 0.1), (1.0, -0.2), (2.0, 0.05)] {
        let path = trace_geodesic(&field, 0.5, theta, phi, 5.0, 1e-11).unwrap();
        for st in &path[1..] {
            let (n, ..) = field.eval(st.r, st.phi, st.z);
            let h = st.q[0].powi(2) + (st.q[1] / st.r).powi(2) + st.q[2].powi(2) - n * n;
            assert!(h.abs() <= 1e-6, "theta {theta}: residual {h} at s {}", st.s);
        }
    }
}

#[test]
fn arc_length_matches_fast_marching_at_exit() {
    let spec = CylinderSpec::default();
    let inc = InclusionSpec::letter_b_vertical(1.5);
    let field = cyl_field(spec, |x, y, z| inc.index_at(&spec, x, y, z));
    let g = CartGrid::for_cylinder(&spec, H).unwrap();
    let table = solve_eikonal(&build_phantom(&inc, &spec, &g).unwrap(), 0.5).unwrap();
    for (theta, phi) in [(1.4, 0.0), (1.57, 0.1), (1.2, 1.0)] {
        let path = trace_geodesic(&field, 0.5, theta, phi, 5.0, 1e-11).unwrap();
        let end = path.last().unwrap();
        let (x, y) = (end.r * end.phi.cos(), end.r * end.phi.sin());
        let tau = table.at(x, y, end.z).unwrap();
        // The ray is a stationary path, so its length bounds the first arrival from above.
        assert!(tau <= end.s + 5.0 * H, "theta {theta}: fmm {tau} ray {}", end.s);
        assert!((tau - end.s).abs() <= 5.0 * H, "theta {theta}: fmm {tau} ray {}", end.s);
    }
}
