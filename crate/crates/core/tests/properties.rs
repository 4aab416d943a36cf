use proptest::prelude::*;

use pvdt_core::datasheet::datasheet_rmse;
use pvdt_core::metrics::{compute_error_report, tri};
use pvdt_core::pso::{minimize, Bounds, PsoConfig};
use pvdt_core::sd_model::{current_at_voltage, open_circuit_voltage};
use pvdt_core::{lambert_w0, mpp_point, CurvePoint, EnvInputs, Measurement, OperatingPoint, PlantConstants, PvParams};

const X2: PvParams = PvParams::DATASHEET_OPT;

fn params_near_opt() -> impl Strategy<Value = PvParams> {
    (0.8..1.2f64, 0.8..1.2f64, 0.8..1.2f64, 0.8..1.2f64, -1.0..1.0f64).prop_map(|(a, b, c, d, e)| PvParams {
        rs: X2.rs * a,
        rsh: X2.rsh * b,
        kd: X2.kd * c,
        iph0: X2.iph0 * d,
        is0: X2.is0 * e.exp(),
    })
}

proptest! {
    #[test]
    fn lambert_inverts_on_log_grid(e in -300.0..300.0f64) {
        let x = 10f64.powf(e);
        let w = lambert_w0(x).unwrap();
        prop_assert!((w * w.exp() - x).abs() <= 1e-12 * x.max(1.0));
    }

    #[test]
    fn tri_is_scale_invariant(window in prop::collection::vec(1.0..100.0f64, 1..50), c in 1e-3..1e3f64) {
        let scaled: Vec<f64> = window.iter().map(|x| x * c).collect();
        let a = tri(&window, 0.2).unwrap();
        let b = tri(&scaled, 0.2).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn error_report_matches_direct_formulas(
        rows in prop::collection::vec((1.0..100.0f64, 1.0..100.0f64, 0.9..1.1f64, 0.9..1.1f64), 1..40)
    ) {
        let pairs: Vec<(Measurement, OperatingPoint)> = rows
            .iter()
            .map(|(v, i, fv, fi)| (Measurement::new(0.0, *v, *i, 25.0), OperatingPoint::new(v * fv, i * fi)))
            .collect();
        let r = compute_error_report(&pairs).unwrap();
        let n = pairs.len() as f64;
        let mape_i = pairs.iter().map(|(m, p)| 100.0 * ((m.i_meas - p.i) / m.i_meas).abs()).sum::<f64>() / n;
        let rmse_v = (pairs.iter().map(|(m, p)| (m.v_meas - p.v).powi(2)).sum::<f64>() / n).sqrt();
        let mape_p = pairs.iter().map(|(m, p)| 100.0 * ((m.p_meas - p.p) / m.p_meas).abs()).sum::<f64>() / n;
        prop_assert!((r.i.mape - mape_i).abs() <= 1e-12 * mape_i.max(1.0));
        prop_assert!((r.v.rmse - rmse_v).abs() <= 1e-12 * rmse_v.max(1.0));
        prop_assert!((r.p.mape - mape_p).abs() <= 1e-12 * mape_p.max(1.0));
        for c in [r.i, r.v, r.p] {
            prop_assert!(c.min_ape <= c.mape && c.mape <= c.max_ape && c.min_ape >= 0.0);
        }
    }

    #[test]
    fn swarm_stays_in_box(lo in -10.0..0.0f64, width in 0.1..10.0f64, seed in any::<u64>()) {
        let b = Bounds::uniform(3, lo, lo + width).unwrap();
        let out = minimize(|x: &[f64]| x.iter().map(|v| (v - 100.0).powi(2)).sum(), &b, &PsoConfig::new(8, 20).with_seed(seed)).unwrap();
        prop_assert!(b.contains(&out.x_best));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mpp_beats_every_scanned_point(p in params_near_opt(), g in 100.0..1000.0f64, t in 0.0..60.0f64) {
        let plant = PlantConstants::default();
        let env = EnvInputs::new(g, t);
        let mpp = mpp_point(&p, &plant, &env).unwrap();
        let voc = open_circuit_voltage(&p, &plant, &env).unwrap();
        let best = (0..=4000)
            .map(|k| {
                let v = voc * k as f64 / 4000.0;
                v * current_at_voltage(&p, &plant, &env, v).unwrap()
            })
            .fold(0.0, f64::max);
        prop_assert!(((mpp.p - best) / best).abs() <= 0.005, "mpp {} scan {}", mpp.p, best);
    }

    #[test]
    fn rmse_invariant_under_duplication(p in params_near_opt(), k in 2usize..5) {
        let plant = PlantConstants::default();
        let pts: Vec<CurvePoint> = (0..10)
            .map(|j| {
                let v = 2000.0 * j as f64;
                CurvePoint { v, i: current_at_voltage(&X2, &plant, &EnvInputs::new(900.0, 25.0), v).unwrap(), g: 900.0, t_c: 25.0 }
            })
            .collect();
        let dup: Vec<CurvePoint> = (0..k).flat_map(|_| pts.iter().copied()).collect();
        prop_assert_eq!(datasheet_rmse(&pts, &p, &plant), datasheet_rmse(&dup, &p, &plant));
    }
}

#[test]
fn params_invariants_enforced() {
    assert!(PvParams::new(0.3, 200.0, 1.0, 10.0, 1e-10).is_ok());
    assert!(PvParams::new(0.0, 200.0, 1.0, 10.0, 1e-10).is_err());
    assert!(PvParams::new(300.0, 200.0, 1.0, 10.0, 1e-10).is_err());
}

#[test]
fn single_precision_pipeline() {
    let p: PvParams<f32> = X2.cast();
    let plant = PlantConstants::<f32>::default();
    let op = mpp_point(&p, &plant, &EnvInputs::new(800.0f32, 25.0)).unwrap();
    let op64 = mpp_point(&X2, &PlantConstants::default(), &EnvInputs::new(800.0, 25.0)).unwrap();
    assert!(((op.p as f64 - op64.p) / op64.p).abs() < 1e-4);
}
