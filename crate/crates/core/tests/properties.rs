use ddbound::elasticity::{Loads, MaterialField, PlaneAssumption};
use ddbound::experiment::{run, ExperimentConfig, SEQUENTIAL};
use ddbound::fetidp::{fetidp_solve, FetiProblem, FetiSettings};
use ddbound::interface_ops::Scaling;
use ddbound::mesh::{
    build_interface_topology, default_inclusions, generate_benchmark_mesh, partition_structured,
    PartitionScheme,
};
use ddbound::recovery::{
    compute_lambda_f, multipoint_reference, subdomain_stresses, traction, MultipointMode,
};
use proptest::prelude::*;

fn config(ratio: f64, traction: [f64; 2], young: f64, overkill: usize) -> ExperimentConfig {
    let text = format!(
        r#"
schema_version = 1
name = "prop"
modes = ["EET", "EEToptim", "DD EET", "DD optim EET"]
[geometry]
n = 6
[materials]
young = {young:e}
ratios = [{ratio:e}]
poisson = 0.3
[loads]
traction = [{:e}, {:e}]
[partition]
schemes = ["grid3x3"]
[estimator]
overkill = {overkill}
"#,
        traction[0], traction[1]
    );
    ExperimentConfig::from_toml(&text).unwrap()
}

fn estimates(cfg: &ExperimentConfig) -> Vec<(f64, f64)> {
    run(cfg)
        .unwrap()
        .cases
        .iter()
        .map(|c| {
            let d = c.outcome.as_ref().unwrap();
            (d.report.global, d.report.relative)
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn estimate_is_linear_in_the_load(scale in -3.0f64..3.0, ratio in -4.0f64..4.0) {
        let a = 10f64.powf(scale);
        let base = estimates(&config(10f64.powf(ratio), [1.0, 1.0], 1.0, 0));
        let scaled = estimates(&config(10f64.powf(ratio), [a, a], 1.0, 0));
        for ((g0, r0), (g1, r1)) in base.iter().zip(&scaled) {
            prop_assert!((g1 - a * g0).abs() <= 1e-8 * a * g0);
            prop_assert!((r1 - r0).abs() <= 1e-8 * r0);
        }
    }

    #[test]
    fn relative_estimate_ignores_the_modulus_unit(scale in -3.0f64..3.0) {
        let c = 10f64.powf(scale);
        let base = estimates(&config(1e-2, [1.0, 0.5], 1.0, 0));
        let scaled = estimates(&config(1e-2, [1.0, 0.5], c, 0));
        for ((g0, r0), (g1, r1)) in base.iter().zip(&scaled) {
            prop_assert!((g1 * c.sqrt() - g0).abs() <= 1e-8 * g0);
            prop_assert!((r1 - r0).abs() <= 1e-8 * r0);
        }
    }

    #[test]
    fn every_mode_bounds_the_reference_error(ratio in -5.0f64..5.0, angle in 0.0f64..std::f64::consts::TAU) {
        let cfg = config(10f64.powf(ratio), [angle.cos(), angle.sin()], 1.0, 3);
        let r = run(&cfg).unwrap();
        for c in &r.cases {
            let d = c.outcome.as_ref().unwrap();
            let eff = d.report.effectivity.unwrap();
            prop_assert!(eff >= 1.0, "{} {} {eff}", c.scheme, c.mode);
        }
        prop_assert_eq!(r.cases.iter().filter(|c| c.scheme == SEQUENTIAL).count(), 2);
    }
}

/// At the multiple points of the soft-inclusion benchmark, compliance-weighted
/// `P` pulls `Λ_F` towards the soft-side traction, component by component.
#[test]
fn weighted_p_follows_the_soft_side_at_multiple_points() {
    let n = 36;
    let mesh = generate_benchmark_mesh(n, 1.0, &default_inclusions(1.0)).unwrap();
    let materials = MaterialField::benchmark(1.0, 1e-5, 0.3, PlaneAssumption::PlaneStress).unwrap();
    let loads = Loads::default();
    let partition = partition_structured(&mesh, PartitionScheme::Grid3x3).unwrap();
    let topo = build_interface_topology(&mesh, &partition);
    let problem = FetiProblem::new(
        &mesh,
        &materials,
        &loads,
        &partition,
        &topo,
        Scaling::Stiffness,
    )
    .unwrap();
    let state = fetidp_solve(&problem, &FetiSettings::default(), |_| Ok(()))
        .unwrap()
        .state;
    let sigma = subdomain_stresses(&mesh, &materials, &problem, &state.u_n);

    let solve = |mode| {
        let (p, l1) = multipoint_reference(&mesh, &materials, &partition, &topo, &sigma, mode);
        compute_lambda_f(&topo, &state.lambda_n, &p, &l1, 0.0)
            .unwrap()
            .lambda_f
    };
    let weighted = solve(MultipointMode::WeightedP);
    let identity = solve(MultipointMode::IdentityP);
    let plain = solve(MultipointMode::Off);

    // soft-side traction moments on relations of multiple points with a
    // material jump across the pair's edges
    let mut err = [[0.0_f64; 2]; 3];
    let mut count = 0;
    for (r, rel) in topo.face.iter().enumerate() {
        if topo.multiplicity[rel.node] < 3 {
            continue;
        }
        let pair = &topo.pairs[rel.pair];
        let mut soft = [0.0; 2];
        let mut jump = false;
        for &edge in pair
            .edges
            .iter()
            .filter(|&&e| mesh.edges[e].nodes.contains(&rel.node))
        {
            let [Some(a), Some(b)] = mesh.edges[edge].elements else {
                unreachable!()
            };
            let (es, et) = if partition.subdomain[a] == pair.s {
                (a, b)
            } else {
                (b, a)
            };
            let (ys, yt) = (
                materials.young(mesh.material_id[es]),
                materials.young(mesh.material_id[et]),
            );
            jump |= ys != yt;
            let e = if ys <= yt { es } else { et };
            let t = traction(&sigma[e], mesh.outward_normal(es, edge));
            for c in 0..2 {
                soft[c] += 0.5 * mesh.edge_length(edge) * t[c];
            }
        }
        if !jump {
            continue;
        }
        count += 1;
        for (k, lf) in [&weighted, &identity, &plain].into_iter().enumerate() {
            for c in 0..2 {
                err[k][c] += (lf[2 * r + c] - soft[c]).powi(2);
            }
        }
    }
    assert!(count > 0);
    for c in 0..2 {
        assert!(err[0][c] < err[1][c], "component {c}: {err:?}");
        assert!(err[0][c] < err[2][c], "component {c}: {err:?}");
    }
}
