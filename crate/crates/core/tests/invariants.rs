use std::sync::Arc;

use proptest::prelude::*;

use smma::csg_weights::{JointMetric, ParamAxis, QuadratureSet, SampleRecord, SampleStore};
use smma::design_field::{DesignSpace, SimpParams};
use smma::io::{physical_density, DesignFile, MeshDims};
use smma::mesh_fem::{build_rect_mesh, RectSupport};
use smma::mma_core::{kkt_residual, MmaState};
use smma::smoothing::{flavor_eval, h_eval, Flavor, SmoothingParams};

fn store_with(params: &[f64], designs: &[f64]) -> SampleStore<f64> {
    let metric = JointMetric::new(1.0, 1.0, vec![ParamAxis::circular(1.0)]).unwrap();
    let mut store = SampleStore::new(metric, None);
    for (x, d) in params.iter().zip(designs) {
        store
            .push(SampleRecord { design: Arc::new(vec![*d, 1.0 - d]), param: vec![*x], inner_value: 0.0, inner_gradient: vec![0.0; 2], iteration_born: 0 })
            .unwrap();
    }
    store
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_form_a_partition_of_unity(samples in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..20), u in 0.0f64..1.0) {
        let (params, designs): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
        let store = store_with(&params, &designs);
        let quad = QuadratureSet::uniform_circle(0.0, 1.0, 256);
        for w in [store.pseudoexact_weights(&[u, 1.0 - u], &quad).unwrap(), store.empirical_weights(&[u, 1.0 - u]).unwrap()] {
            prop_assert!(w.alpha.iter().all(|a| *a >= 0.0));
            prop_assert!((w.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn design_file_round_trip(values in prop::collection::vec(0.0f64..=1.0, 12), s in 1.0f64..6.0, r in 0.01f64..1.0) {
        let file = DesignFile { mesh: MeshDims::Rect { nx: 4, ny: 3 }, simp: s, filter_radius: r, values };
        prop_assert_eq!(DesignFile::parse(&file.to_text()).unwrap(), file);
    }

    #[test]
    fn physical_density_stays_in_unit_interval(rho in prop::collection::vec(0.0f64..=1.0, 24), s in 1.0f64..8.0) {
        let mesh = build_rect_mesh(6, 4, 1.5, 1.0, RectSupport::BottomClamped).unwrap();
        let space = DesignSpace::new(&mesh, 0.4).unwrap();
        let phys = physical_density(&space, &rho, &SimpParams::with_exponent(s).unwrap()).unwrap();
        prop_assert!(phys.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
    }

    #[test]
    fn tanh_indicator_is_point_symmetric(t in -50.0f64..50.0, a1 in 0.1f64..100.0) {
        let p = SmoothingParams::new(a1, 0.0, 5.0, 1.0, 0.05).unwrap();
        prop_assert!((h_eval(t, &p) + h_eval(-t, &p) - 1.0).abs() < 1e-12);
        let v = flavor_eval(Flavor::Tanh, t, &p);
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn subproblem_solution_is_feasible_box_point(
        z in prop::collection::vec(0.05f64..0.95, 1..12),
        seed in 0u64..1000,
        tau in 0.05f64..1.0,
    ) {
        let n = z.len();
        let g0: Vec<f64> = (0..n).map(|j| ((seed + j as u64) % 7) as f64 / 7.0).collect();
        let g1: Vec<f64> = (0..n).map(|j| (((seed * 3 + j as u64) % 11) as f64 - 5.0) / 5.0).collect();
        let mut st = MmaState::new(n, tau, 0.0, 1.0).unwrap();
        st.update_asymptotes(&z).unwrap();
        let sp = st.subproblem(&z, (0.0, &g0), (0.1, &g1)).unwrap();
        let sol = sp.solve().unwrap();
        for j in 0..n {
            prop_assert!(sol.z[j] >= sp.alpha[j] - 1e-14 && sol.z[j] <= sp.beta[j] + 1e-14);
            prop_assert!((sol.z[j] - z[j]).abs() <= tau + 1e-12);
        }
        prop_assert!(sol.multiplier >= 0.0);
        prop_assert!(kkt_residual(&sp, &sol) < 1e-8);
    }
}
