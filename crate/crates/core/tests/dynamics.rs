use bulkdiff::dynamics::*;
use bulkdiff::homogenized::{GridFunction, HeatKernel};
use bulkdiff::*;

fn torus() -> Domain {
    Domain::torus(1, 27.0).unwrap()
}

fn fixtures() -> (GridFunction, GridFunction) {
    let f = GridFunction::from_fn(torus(), 270, |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
    let g = GridFunction::from_fn(torus(), 270, |x| (-(x[0] - 0.7).powi(2) / 3.0).exp()).unwrap();
    (f, g)
}

fn count_indicator() -> CoefficientModel {
    CoefficientModel::count_indicator(2.0, 2).unwrap()
}

#[test]
fn two_point_is_symmetric_and_stationary() {
    let (f, g) = fixtures();
    let params = ChainParams::new(0.05, torus(), count_indicator(), 1.0).unwrap();
    let fg = two_point_sweep(
        &f,
        &g,
        &[(1.0, 0.5), (1.5, 1.0)],
        &params,
        1500,
        RandomStream::new(21),
        Exec::Parallel,
        None,
    )
    .unwrap();
    let gf = two_point_estimate(&g, &f, 1.0, 0.5, &params, 1500, RandomStream::new(22), Exec::Parallel, None).unwrap();
    let combined = |a: &CorrelationEstimate, b: &CorrelationEstimate| (a.se * a.se + b.se * b.se).sqrt();
    assert!((fg[0].estimate - gf.estimate).abs() < 3.0 * combined(&fg[0], &gf), "{fg:?} {gf:?}");
    assert!((fg[0].estimate - fg[1].estimate).abs() < 3.0 * combined(&fg[0], &fg[1]), "{fg:?}");
}

#[test]
fn halving_dt_is_stable() {
    let (f, g) = fixtures();
    for model in [CoefficientModel::identity(), count_indicator()] {
        let run = |dt: f64, seed: u64| {
            let params = ChainParams::new(dt, torus(), model, 1.0).unwrap();
            two_point_sweep(
                &f,
                &g,
                &[(0.5, 0.0), (1.0, 0.0)],
                &params,
                1500,
                RandomStream::new(seed),
                Exec::Parallel,
                None,
            )
            .unwrap()
        };
        let coarse = run(0.1, 31);
        let fine = run(0.05, 32);
        for (a, b) in coarse.iter().zip(&fine) {
            let se = (a.se * a.se + b.se * b.se).sqrt();
            assert!((a.estimate - b.estimate).abs() < 3.0 * se, "{}: {a:?} {b:?}", model.name());
        }
    }
}

#[test]
fn plain_euler_runs_without_rejections() {
    let mut params = ChainParams::new(0.05, torus(), count_indicator(), 1.0).unwrap();
    params.scheme = Scheme::PlainEuler;
    let start = sample_poisson(&torus(), 1.0, &mut RandomStream::new(2).rng()).unwrap();
    let traj = simulate(&start, &params, &[1.0], RandomStream::new(3)).unwrap();
    assert_eq!(traj.stats.accepted, traj.stats.proposed);
    assert_eq!(traj.snapshots[0].1.len(), start.len());
    let dir = tempfile::tempdir().unwrap();
    let files = traj.write_dir(dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let text = std::fs::read_to_string(&files[1]).unwrap();
    let (back, t) = bulkdiff::configuration::read_snapshot(text.as_bytes()).unwrap();
    assert_eq!(t, Some(1.0));
    assert_eq!(back.len(), start.len());
}

#[test]
fn semigroup_difference_does_not_grow() {
    let f = GridFunction::from_fn(torus(), 270, |x| (-x[0] * x[0] / 0.5).exp()).unwrap();
    let params = ChainParams::new(0.05, torus(), count_indicator(), 1.0).unwrap();
    let hk = HeatKernel::isotropic(1, 1.862).unwrap();
    let est: Vec<SemigroupDiff> = [1.0, 4.0, 16.0]
        .iter()
        .map(|&t| semigroup_diff_with(&f, t, &params, &hk, 60, 32, RandomStream::new(40), Exec::Parallel).unwrap())
        .collect();
    for w in est.windows(2) {
        let se = (w[0].squared_se.powi(2) + w[1].squared_se.powi(2)).sqrt();
        assert!(w[1].squared <= w[0].squared + 3.0 * se, "{est:?}");
    }
    let table = correlation_csv(&[], &params);
    assert_eq!(table.columns, ["t", "s", "estimate", "SE", "prediction", "discrepancy"]);
}
