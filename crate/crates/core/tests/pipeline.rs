use bkm_core::flow::{flow_h, GridOrder};
use bkm_core::runner::{export, load_solution, run_scenario, verify_dir, write_run, ExportFormat, CSV_FILE};
use bkm_core::scenario::AxisSpec;
use bkm_core::synth::synthesize_infinite;
use bkm_core::{closed_form_kb, presets, BkmSpec, Chart, FlowConfig, Lambda, PhasePoint, Poly, Scenario, StackelSystem};
use proptest::prelude::*;

fn small_kb() -> Scenario {
    let mut sc = presets::load("kb-exact").unwrap();
    // the eigenvalues coincide at the origin, which this small window over-weights
    sc.checks.separation_residual = None;
    sc.grid.t = AxisSpec {
        min: -0.5,
        max: 0.5,
        count: 9,
    };
    sc.grid.x = AxisSpec {
        min: -1.0,
        max: 1.0,
        count: 21,
    };
    sc
}

#[test]
fn single_precision_pipeline() {
    let spec = BkmSpec::new(2, Poly::constant(-1.0f32), Lambda::Infinity, Chart::KbForm).unwrap();
    let c = Poly::new(vec![0.0f32, 0.0, 1.0, 0.0, -2.0, 0.0, 1.0]);
    let cfg = FlowConfig {
        rel_tol: 1e-5f32,
        abs_tol: 1e-6,
        ..FlowConfig::default()
    };
    let t = [-0.5f32, 0.0, 0.5];
    let x = [-1.0f32, -0.5, 0.0, 0.5, 1.0];
    let syn = synthesize_infinite(&spec, &c, &PhasePoint::zero(2), &t, &x, &cfg).unwrap();
    for (ti, &tv) in t.iter().enumerate() {
        for (xi, &xv) in x.iter().enumerate() {
            let (_, _, u1, u2) = closed_form_kb(tv as f64, xv as f64);
            let u = syn.solution.u_at(ti, xi);
            assert!((u[0] as f64 - u1).abs() < 1e-3 && (u[1] as f64 - u2).abs() < 1e-3);
        }
    }
}

#[test]
fn run_write_verify_roundtrip() {
    let sc = small_kb();
    let out = run_scenario(&sc).unwrap();
    assert!(out.summary.passed, "{:?}", out.summary);
    let dir = tempfile::tempdir().unwrap();
    write_run(dir.path(), &sc, &out).unwrap();
    let stored = load_solution(dir.path()).unwrap();
    assert_eq!(stored, out.synthesis.solution);
    let again = verify_dir(dir.path()).unwrap();
    assert!(again.passed);
    let cf = |s: &bkm_core::runner::Summary| s.checks.iter().find(|c| c.name == "closed-form-kb").unwrap().value;
    assert_eq!(cf(&again), cf(&out.summary));
    assert!(dir.path().join("verify.json").exists());
}

#[test]
fn csv_export_is_deterministic() {
    let sc = small_kb();
    let a = run_scenario(&sc).unwrap();
    let b = run_scenario(&sc).unwrap();
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export(&a.synthesis.solution, ExportFormat::Csv, da.path()).unwrap();
    export(&b.synthesis.solution, ExportFormat::Csv, db.path()).unwrap();
    let ta = std::fs::read_to_string(da.path().join(CSV_FILE)).unwrap();
    let tb = std::fs::read_to_string(db.path().join(CSV_FILE)).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(ta.lines().next().unwrap(), "t,x,u_1,u_2,q");
    assert_eq!(ta.lines().count(), 1 + 9 * 21);

    let frames = export(&a.synthesis.solution, ExportFormat::Frames, da.path()).unwrap();
    assert_eq!(frames.len(), 9);
    assert_eq!(std::fs::read_to_string(&frames[0]).unwrap().lines().count(), 22);
}

#[test]
fn grid_orders_agree_on_kb() {
    let sc = small_kb();
    let run = |order| {
        bkm_core::synthesize(
            &sc.bkm_spec().unwrap(),
            &sc.c_poly().unwrap(),
            &sc.start_point().unwrap(),
            &sc.grid.t.nodes(),
            &sc.grid.x.nodes(),
            &sc.flow,
            order,
        )
        .unwrap()
    };
    let (a, b) = (run(GridOrder::XThenT), run(GridOrder::TThenX));
    assert!(a.grid.max_difference(&b.grid) < 1e-9);
}

#[test]
fn every_preset_parses_and_validates() {
    for name in presets::names() {
        let sc = presets::load(name).unwrap();
        assert_eq!(sc.name, name);
        assert_eq!(Scenario::from_toml_str(&sc.to_toml_string()).unwrap(), sc);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Integrals stay on their level along the x-flow from random points of a
    /// compact torus.
    #[test]
    fn h_flow_conserves_integrals(
        gaps in proptest::collection::vec(0.2f64..0.6, 4),
        frac in proptest::collection::vec(0.1f64..0.9, 2),
        span in 0.1f64..2.0,
    ) {
        let mut r = vec![-1.5];
        for g in &gaps {
            r.push(r.last().unwrap() + g);
        }
        let q: Vec<f64> = (0..2).map(|a| r[2 * a] + frac[a] * (r[2 * a + 1] - r[2 * a])).collect();
        let m = Poly::constant(-1.0);
        let sys = StackelSystem::new(Poly::from_roots(&r), m.clone());
        let start = sys.level_set_point(&q, &[1.0, -1.0]).unwrap();
        let sys = StackelSystem::new(sys.repair_c(&start).unwrap(), m);
        let cfg = FlowConfig { rel_tol: 1e-12, abs_tol: 1e-14, ..FlowConfig::default() };
        let pts = flow_h(&sys, &start, &[-span, span], &cfg).unwrap();
        for p in pts {
            prop_assert!(sys.integral_coefficients(&p).unwrap().max_abs() < 1e-8);
        }
    }

    #[test]
    fn axis_nodes_are_uniform(min in -10.0f64..10.0, len in 0.1f64..10.0, count in 2usize..200) {
        let nodes = AxisSpec { min, max: min + len, count }.nodes();
        prop_assert_eq!(nodes.len(), count);
        prop_assert!((nodes[count - 1] - (min + len)).abs() < 1e-12 * (1.0 + min.abs() + len));
        prop_assert!(nodes.windows(2).all(|w| w[1] > w[0]));
    }
}
