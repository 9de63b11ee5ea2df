use proptest::prelude::*;

use cutfem::geometry::{build_stabilization_submesh, CutGeometry, RigidDisk};
use cutfem::mesh::BackgroundMesh;
use cutfem::quadrature::GaussRule;
use cutfem::space::{compute_dof_activity, TaylorHoodSpace};
use cutfem::study::{compute_eoc, ErrorReport, ReportRow};

fn disk_strategy() -> impl Strategy<Value = RigidDisk> {
    (0.25f64..0.75, 0.25f64..0.75, 0.03f64..0.2).prop_map(|(x, y, r)| RigidDisk::new([x, y], r).unwrap())
}

/// `int_disk x^a y^b`, Gauss in the radius and the periodic trapezoid rule in the angle.
fn disk_moment(disk: &RigidDisk, a: i32, b: i32) -> f64 {
    let radial = GaussRule::new(16);
    let m = 64;
    let mut sum = 0.0;
    for (&s, &w) in radial.points.iter().zip(&radial.weights) {
        let rho = s * disk.radius;
        for j in 0..m {
            let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            let x = disk.center[0] + rho * th.cos();
            let y = disk.center[1] + rho * th.sin();
            sum += w * disk.radius * rho * (2.0 * std::f64::consts::PI / m as f64) * x.powi(a) * y.powi(b);
        }
    }
    sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fluid_measure_and_disk_partition_the_square(disk in disk_strategy(), level in 0u32..4, q in 4usize..9) {
        let mesh = BackgroundMesh::new(level).unwrap();
        let geo = CutGeometry::new(&mesh, Some(disk), q, q).unwrap();
        prop_assert!((geo.fluid_area() + disk.area() - 1.0).abs() <= 1e-9);
        prop_assert!((geo.interface_length() - disk.circumference()).abs() <= 1e-10);
    }

    #[test]
    fn surface_normals_are_unit_and_radial(disk in disk_strategy(), level in 0u32..4) {
        let mesh = BackgroundMesh::new(level).unwrap();
        let geo = CutGeometry::new(&mesh, Some(disk), 6, 6).unwrap();
        for (_, rule) in geo.cut_cells() {
            for (p, n) in rule.points.iter().zip(&rule.normals) {
                prop_assert!((n[0].hypot(n[1]) - 1.0).abs() <= 1e-12);
                let dot = n[0] * (p[0] - disk.center[0]) + n[1] * (p[1] - disk.center[1]);
                prop_assert!((dot + disk.radius).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cut_rules_integrate_monomials(disk in disk_strategy(), level in 0u32..3, q in 2usize..7) {
        let mesh = BackgroundMesh::new(level).unwrap();
        let geo = CutGeometry::new(&mesh, Some(disk), q, q).unwrap();
        for a in 0..=q as i32 {
            for b in 0..=(q as i32 - a) {
                let square = 1.0 / ((a + 1) * (b + 1)) as f64;
                let exact = square - disk_moment(&disk, a, b);
                let mut got = 0.0;
                for (_, rule) in geo.fluid_cells() {
                    for (p, w) in rule.points.iter().zip(&rule.weights) {
                        got += w * p[0].powi(a) * p[1].powi(b);
                    }
                }
                prop_assert!((got - exact).abs() <= 1e-11, "x^{} y^{}: {} vs {}", a, b, got, exact);
            }
        }
    }

    #[test]
    fn wider_stabilization_zone_contains_the_narrow_one(disk in disk_strategy(), level in 0u32..4) {
        let mesh = BackgroundMesh::new(level).unwrap();
        let narrow = build_stabilization_submesh(&mesh, &disk, 1.0).unwrap();
        let wide = build_stabilization_submesh(&mesh, &disk, 2.0).unwrap();
        for c in narrow.cells() {
            prop_assert!(wide.contains(c));
        }
        let geo = CutGeometry::new(&mesh, Some(disk), 4, 4).unwrap();
        let space = TaylorHoodSpace::new(&mesh, 2).unwrap();
        let an = compute_dof_activity(&space, &geo, &narrow);
        let aw = compute_dof_activity(&space, &geo, &wide);
        for (n, w) in an.active.iter().zip(&aw.active) {
            prop_assert!(!n || *w);
        }
    }

    #[test]
    fn interpolation_reproduces_tensor_monomials(
        r in 2usize..4,
        a in 0usize..4,
        b in 0usize..4,
        level in 0u32..3,
        px in 0.0f64..1.0,
        py in 0.0f64..1.0,
    ) {
        let (a, b) = (a.min(r), b.min(r));
        let mesh = BackgroundMesh::new(level).unwrap();
        let space = TaylorHoodSpace::new(&mesh, r).unwrap();
        let f = |x: [f64; 2]| x[0].powi(a as i32) * x[1].powi(b as i32);
        let coeffs = space.velocity.interpolate(f);
        let cell = mesh.locate([px, py]).unwrap();
        let (v, _) = space.velocity.evaluate(&coeffs, cell, [px, py]);
        prop_assert!((v - f([px, py])).abs() <= 1e-12);
    }

    #[test]
    fn eoc_of_geometric_sequences(c in 1e-6f64..1e2, rate in 1.5f64..20.0, n in 2usize..6) {
        let errors: Vec<f64> = (0..n).map(|l| c * rate.powi(-(l as i32))).collect();
        let eoc = compute_eoc(&errors);
        prop_assert!(eoc[0].is_none());
        for e in &eoc[1..] {
            prop_assert!((e.unwrap() - rate.log2()).abs() <= 1e-12);
        }
    }

    #[test]
    fn csv_round_trip(
        values in prop::collection::vec((1e-12f64..1e3, prop::option::of(-5.0f64..5.0), 1e-12f64..1e3, any::<bool>()), 1..5),
        k in 0usize..3,
        wall in 0.0f64..1e4,
    ) {
        let rows: Vec<ReportRow> = values
            .iter()
            .enumerate()
            .map(|(l, &(ev, eoc, ep, failed))| ReportRow {
                level: l as u32,
                tau: 1.0 / (1u32 << l) as f64,
                h: std::f64::consts::SQRT_2 / (4u32 << l) as f64,
                ev: (!failed).then_some(ev),
                eoc_v: eoc,
                ep: (!failed).then_some(ep),
                eoc_p: eoc.map(|x| x * 0.5),
                k,
                r: k + 1,
                radius_multiplier: 2.0,
                nu: 1.0,
            })
            .collect();
        let failures = rows
            .iter()
            .filter(|r| r.ev.is_none())
            .map(|r| (r.level, "newton diverged".to_string()))
            .collect();
        let rep = ErrorReport { rows, config_hash: "0123abcd".into(), wall_time: wall, failures };
        let back = ErrorReport::from_csv(&rep.to_csv()).unwrap();
        prop_assert_eq!(back, rep);
    }
}
