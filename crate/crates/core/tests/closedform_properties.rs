use mmimo_core::closedform::{
    dof_required_mf, dof_required_mmse, gamma_mf_simple, gamma_mmse_simple, gamma_rate_infinity,
    rate_mf_simple, rate_mmse_simple, SimpleSystemPoint, BISECTION_TOLERANCE,
};
use proptest::prelude::*;

fn point(snr_n: f64, dof: f64, alpha: f64, cells: usize) -> SimpleSystemPoint {
    SimpleSystemPoint::new(snr_n, dof, alpha, cells).unwrap()
}

proptest! {
    #[test]
    fn sinrs_increase_with_snr_and_dof(
        snr_n in 0.1f64..1e4,
        dof in 0.5f64..500.0,
        alpha in 0.01f64..1.0,
        cells in 2usize..8,
    ) {
        let base = point(snr_n, dof, alpha, cells);
        let more_snr = point(snr_n * 1.1, dof, alpha, cells);
        let more_dof = point(snr_n, dof * 1.1, alpha, cells);
        let mf = gamma_mf_simple(&base).gamma;
        prop_assert!(gamma_mf_simple(&more_snr).gamma > mf);
        prop_assert!(gamma_mf_simple(&more_dof).gamma > mf);
        let mmse = gamma_mmse_simple(&base).unwrap().gamma;
        prop_assert!(gamma_mmse_simple(&more_snr).unwrap().gamma > mmse);
        prop_assert!(gamma_mmse_simple(&more_dof).unwrap().gamma > mmse);
    }

    #[test]
    fn mmse_sits_between_mf_and_ceiling(
        snr_n in 0.1f64..1e4,
        dof in 0.5f64..500.0,
        alpha in 0.01f64..1.0,
        cells in 2usize..8,
    ) {
        let p = point(snr_n, dof, alpha, cells);
        let mf = gamma_mf_simple(&p).gamma;
        let mmse = gamma_mmse_simple(&p).unwrap().gamma;
        let ceiling = gamma_rate_infinity(alpha, cells).unwrap().gamma().unwrap();
        prop_assert!(mf <= mmse * (1.0 + 1e-12));
        prop_assert!(mmse <= ceiling);
    }

    #[test]
    fn mf_requirement_round_trips(
        eta in 0.05f64..0.95,
        snr_n in 1.0f64..1e4,
        alpha in 0.05f64..1.0,
        cells in 2usize..8,
    ) {
        let c = dof_required_mf(eta, snr_n, alpha, cells).unwrap();
        if let Some(dof) = c.requirement.value() {
            let target = eta * c.rate_infinity.rate().unwrap();
            prop_assert!((rate_mf_simple(&point(snr_n, dof, alpha, cells)) - target).abs() < 1e-9);
        }
    }

    #[test]
    fn mmse_requirement_round_trips(
        eta in 0.05f64..0.95,
        snr_n in 1.0f64..1e4,
        alpha in 0.05f64..1.0,
        cells in 2usize..8,
    ) {
        let c = dof_required_mmse(eta, snr_n, alpha, cells, 1.0 / snr_n).unwrap();
        if let Some(dof) = c.requirement.value() {
            let target = eta * c.rate_infinity.rate().unwrap();
            let p = point(snr_n, dof, alpha, cells);
            prop_assert!(rate_mmse_simple(&p).unwrap() >= target);
            let below = p.with_dof(dof * (1.0 - 2.0 * BISECTION_TOLERANCE)).unwrap();
            prop_assert!(rate_mmse_simple(&below).unwrap() < target);
            if let Some(mf) = dof_required_mf(eta, snr_n, alpha, cells).unwrap().requirement.value() {
                prop_assert!(dof <= mf * (1.0 + 1e-6));
            }
        }
    }
}

#[test]
fn detector_gap_widens_towards_the_ceiling() {
    for &alpha in &[0.3, 0.1] {
        let ratio = |eta: f64| {
            let mf = dof_required_mf(eta, 100.0, alpha, 4).unwrap().requirement.value().unwrap();
            let mmse = dof_required_mmse(eta, 100.0, alpha, 4, 0.01)
                .unwrap()
                .requirement
                .value()
                .unwrap();
            mf / mmse
        };
        assert!(ratio(0.9) > ratio(0.5), "alpha={alpha}");
    }
}

#[test]
fn mmse_limit_without_load_is_the_ceiling() {
    let p = SimpleSystemPoint::with_lambda(1e12, 1e12, 0.3, 4, 1e-6).unwrap();
    let m = gamma_mmse_simple(&p).unwrap();
    let lbar = p.lbar();
    assert!((m.delta - 1.0 / (1e-6 * lbar)).abs() / m.delta < 1e-5);
    assert!((m.x - 1.0).abs() < 1e-5);
    let ceiling = gamma_rate_infinity(0.3, 4).unwrap().gamma().unwrap();
    assert!((m.gamma - ceiling).abs() / ceiling < 1e-5);
}

#[test]
fn grid_ordering() {
    for i in 0..10 {
        for j in 0..10 {
            let snr_n = 10f64.powf(-1.0 + 0.5 * i as f64);
            let dof = 10f64.powf(-0.5 + 0.35 * j as f64);
            let p = point(snr_n, dof, 0.3, 4);
            assert!(gamma_mmse_simple(&p).unwrap().gamma >= gamma_mf_simple(&p).gamma);
        }
    }
}
