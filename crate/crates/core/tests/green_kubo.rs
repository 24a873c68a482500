use bulkdiff::cell_problems::{compute_abar, CellProblemSpec};
use bulkdiff::green_kubo::{gk_bracket, gk_integral_on, palm_flux, GkInputs};
use bulkdiff::homogenized::AlphaSource;
use bulkdiff::{CoefficientModel, Exec, RandomStream, SymMatrix};

fn count_indicator() -> CoefficientModel {
    CoefficientModel::count_indicator(2.0, 2).unwrap()
}

#[test]
fn palm_minus_integral_recovers_the_variational_value() {
    let spec = CellProblemSpec::new(2, 1, 1.0, count_indicator(), 3000, 21);
    let run = compute_abar(&spec, Exec::default()).unwrap();
    let sys = spec.system(false, Exec::default()).unwrap();
    let p = spec.direction_point();
    let integral = gk_integral_on(&sys, &p, 0.0, spec.ridge).unwrap();
    let palm = palm_flux(&count_indicator(), 1.0, &p, 1, 20000, RandomStream::new(5), Exec::default()).unwrap();
    let inputs = GkInputs {
        direction: p,
        dim: 1,
        abar: run.estimate.abar,
        abar_se: run.estimate.abar_se,
        palm,
        integral,
        alpha: 0.5,
        alpha_source: AlphaSource::Override,
    };
    let r = gk_bracket(2, 0.0, &inputs).unwrap();
    let (rec, rec_se) = r.reconstructed_half_abar();
    let se = rec_se.hypot(r.half_abar_se);
    eprintln!("reconstructed {rec} ± {rec_se}, variational {} ± {}", r.half_abar, r.half_abar_se);
    assert!((rec - r.half_abar).abs() <= 3.0 * se);
}

#[test]
fn bracket_at_zero_lambda_shrinks_with_the_cube() {
    let model = count_indicator();
    let p = [1.0, 0.0];
    let palm = palm_flux(&model, 1.0, &p, 1, 20000, RandomStream::new(6), Exec::default()).unwrap();
    // reference from the largest cube
    let reference = compute_abar(&CellProblemSpec::new(3, 1, 1.0, model, 1500, 31), Exec::default())
        .unwrap()
        .estimate;
    let mut last: Option<(f64, f64)> = None;
    for m in 0..=2u32 {
        let spec = CellProblemSpec::new(m, 1, 1.0, model, 3000, 40 + m as u64);
        let sys = spec.system(false, Exec::default()).unwrap();
        let integral = gk_integral_on(&sys, &p, 0.0, spec.ridge).unwrap();
        let inputs = GkInputs {
            direction: p,
            dim: 1,
            abar: reference.abar,
            abar_se: SymMatrix::zeros(1),
            palm,
            integral,
            alpha: 0.5,
            alpha_source: AlphaSource::Override,
        };
        let r = gk_bracket(m, 0.0, &inputs).unwrap();
        eprintln!("m={m}: bracket {} ± {}", r.bracket, r.bracket_se);
        let now = (r.bracket.abs(), r.bracket_se);
        if let Some((b, se)) = last {
            assert!(now.0 <= b + 3.0 * se.hypot(now.1), "m={m}: {now:?} after {b}");
        }
        last = Some(now);
    }
}
