//! A Metropolis particle chain on the torus that is exactly reversible for
//! the Poisson law, and the fluctuation-field observables estimated from it.

pub mod chain;
pub mod observables;

pub use chain::{
    acceptance_probability, detailed_balance_defect, lattice_transition_matrix, simulate, step, sweep, ChainParams, Proposal, Scheme,
    SweepStats, Trajectory,
};
pub use observables::{
    correlation_csv, fluctuation_field, semigroup_diff, semigroup_diff_with, two_point_estimate, two_point_sweep, CorrelationEstimate,
    SemigroupDiff, INNER_CHAINS,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::{sample_poisson, Configuration};
    use crate::geometry::Domain;
    use crate::homogenized::{GridFunction, HeatKernel};
    use crate::model::{CoefficientModel, ModelKind};
    use crate::par::Exec;
    use crate::rng::RandomStream;
    use crate::stats::{covariance_se, ks_normal, mean_se, poisson_chi_square};

    fn count_indicator() -> CoefficientModel {
        CoefficientModel::count_indicator(2.0, 2).unwrap()
    }

    fn min_image(domain: &Domain, a: &Configuration, b: &Configuration) -> Vec<f64> {
        a.points.iter().zip(&b.points).map(|(x, y)| domain.displacement(x, y)[0]).collect()
    }

    #[test]
    fn params_are_validated() {
        let torus = Domain::torus(1, 9.0).unwrap();
        assert!(ChainParams::new(0.0, torus, count_indicator(), 1.0).is_err());
        assert!(ChainParams::new(0.1, Domain::cube(1, 1).unwrap(), count_indicator(), 1.0).is_err());
        assert!(ChainParams::new(0.1, torus, count_indicator(), 1.0).is_ok());
    }

    #[test]
    fn identity_increments_are_gaussian() {
        let domain = Domain::torus(1, 50.0).unwrap();
        let params = ChainParams::new(0.04, domain, CoefficientModel::identity(), 1.0).unwrap();
        let mut rng = RandomStream::new(1).rng();
        let mut mu = Configuration::from_1d(domain, &[0.0, 10.0, 20.0]).unwrap();
        let mut incs = Vec::new();
        for _ in 0..2000 {
            let before = mu.clone();
            let s = sweep(&mut mu, &params, &mut rng);
            assert_eq!(s.accepted, s.proposed);
            incs.extend(min_image(&domain, &before, &mu));
        }
        assert!(ks_normal(&incs, 0.04) > 0.01);
    }

    #[test]
    fn lattice_chain_satisfies_detailed_balance() {
        let aniso = CoefficientModel::new(ModelKind::AnisotropicCount, 3.0).unwrap();
        for model in [count_indicator(), aniso, CoefficientModel::identity()] {
            let k = lattice_transition_matrix(&model, 4.0, 8, 0.3, 3).unwrap();
            for row in &k {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|v| *v >= -1e-15));
            }
            assert!(detailed_balance_defect(&k) < 1e-10, "{}", model.name());
        }
        // the correction is active for the interacting model
        let model = count_indicator();
        let domain = Domain::torus(1, 4.0).unwrap();
        let mut pts = vec![[0.0, 0.0], [0.5, 0.0]];
        let p = acceptance_probability(
            &model,
            &domain,
            &mut pts,
            0,
            &[-1.5, 0.0],
            0.3,
            Proposal::Lattice { h: 0.5, max_jump: 3 },
        );
        assert!(p < 1.0);
    }

    #[test]
    fn poisson_law_is_invariant() {
        let domain = Domain::torus(1, 9.0).unwrap();
        let params = ChainParams::new(0.1, domain, count_indicator(), 1.0).unwrap();
        let window = Domain::cube(1, 1).unwrap();
        let stream = RandomStream::new(17);
        let counts: Vec<usize> = crate::par::map_indexed(Exec::Parallel, 400, |r| {
            let rs = stream.substream(r as u64);
            let start = sample_poisson(&domain, 1.0, &mut rs.branch("initial").rng()).unwrap();
            let traj = simulate(&start, &params, &[100.0], rs.branch("chain")).unwrap();
            traj.snapshots[0].1.count_in(&window)
        });
        assert!(poisson_chi_square(&counts, 3.0) > 0.01);
    }

    #[test]
    fn simulate_contract() {
        let domain = Domain::torus(1, 40.0).unwrap();
        let params = ChainParams::new(0.05, domain, CoefficientModel::identity(), 1.0).unwrap();
        let mu = Configuration::from_1d(domain, &[0.0]).unwrap();
        let t = simulate(&mu, &params, &[], RandomStream::new(2)).unwrap();
        assert!(t.snapshots.is_empty());
        assert_eq!(t.initial, mu);
        let a = simulate(&mu, &params, &[0.5, 1.0], RandomStream::new(2)).unwrap();
        let b = simulate(&mu, &params, &[0.5, 1.0], RandomStream::new(2)).unwrap();
        assert_eq!(a, b);
        assert!(simulate(&mu, &params, &[1.0, 0.5], RandomStream::new(2)).is_err());
        // one Brownian particle: displacement ~ N(0, t)
        let disp: Vec<f64> = (0..1500)
            .map(|r| {
                let tr = simulate(&mu, &params, &[1.0], RandomStream::new(5).substream(r)).unwrap();
                min_image(&domain, &mu, &tr.snapshots[0].1)[0]
            })
            .collect();
        assert!(ks_normal(&disp, 1.0) > 0.01);
        // disjoint seeds are uncorrelated
        let other: Vec<f64> = (0..1500)
            .map(|r| {
                let tr = simulate(&mu, &params, &[1.0], RandomStream::new(6).substream(r)).unwrap();
                min_image(&domain, &mu, &tr.snapshots[0].1)[0]
            })
            .collect();
        let (c, se) = covariance_se(&disp, &other);
        assert!(c.abs() < 3.0 * se);
    }

    #[test]
    fn fluctuation_field_moments() {
        let rho = 1.5;
        for scale in [1.0, 3.0] {
            let micro = Domain::torus(1, 27.0).unwrap();
            let macro_torus = Domain::torus(1, 27.0 / scale).unwrap();
            let f = GridFunction::from_fn(macro_torus, 270, |x| (-x[0] * x[0]).exp() + 0.3).unwrap();
            let stream = RandomStream::new(8);
            let vals: Vec<f64> = (0..20000)
                .map(|s| {
                    fluctuation_field(
                        &sample_poisson(&micro, rho, &mut stream.substream(s).rng()).unwrap(),
                        &f,
                        rho,
                        scale,
                    )
                    .unwrap()
                })
                .collect();
            let (m, se) = mean_se(&vals);
            assert!(m.abs() < 3.0 * se, "scale {scale}: {m} {se}");
            let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
            let (v, vse) = mean_se(&sq);
            let exact = rho * f.map(|x| x * x).integral();
            assert!((v - exact).abs() < 3.0 * vse + 2e-3 * exact, "scale {scale}: {v} vs {exact}");
        }
        // constant f sees only the total count
        let torus = Domain::torus(1, 9.0).unwrap();
        let f = GridFunction::from_fn(torus, 18, |_| 2.0).unwrap();
        let mu = Configuration::from_1d(torus, &[0.0, 1.0, 2.0]).unwrap();
        assert!((fluctuation_field(&mu, &f, 1.0, 1.0).unwrap() - 2.0 * (3.0 - 9.0)).abs() < 1e-12);
        assert!(fluctuation_field(&mu, &f, 1.0, 0.5).is_err());
    }

    #[test]
    fn equal_time_and_identity_two_point() {
        let torus = Domain::torus(1, 27.0).unwrap();
        let params = ChainParams::new(0.05, torus, CoefficientModel::identity(), 1.0).unwrap();
        let f = GridFunction::from_fn(torus, 270, |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let g = GridFunction::from_fn(torus, 270, |x| (-(x[0] - 0.7).powi(2) / 3.0).exp()).unwrap();
        let hk = HeatKernel::isotropic(1, 1.0).unwrap();
        let est = two_point_sweep(
            &f,
            &g,
            &[(1.0, 1.0), (1.5, 1.0), (2.0, 1.0)],
            &params,
            2000,
            RandomStream::new(4),
            Exec::Parallel,
            Some(&hk),
        )
        .unwrap();
        for e in &est {
            assert_eq!(e.consistent(3.0), Some(true), "{e:?}");
        }
        assert!(two_point_estimate(&f, &g, 0.5, 1.0, &params, 10, RandomStream::new(1), Exec::Sequential, None).is_err());
        assert!(two_point_estimate(&f, &g, 1.0, 0.5, &params, 0, RandomStream::new(1), Exec::Sequential, None).is_err());
    }

    #[test]
    fn identity_semigroups_agree() {
        let torus = Domain::torus(1, 27.0).unwrap();
        let params = ChainParams::new(0.05, torus, CoefficientModel::identity(), 1.0).unwrap();
        let f = GridFunction::from_fn(torus, 270, |x| (-x[0] * x[0] / 2.0).exp()).unwrap();
        let hk = HeatKernel::isotropic(1, 1.0).unwrap();
        for t in [0.5, 2.0] {
            let d = semigroup_diff(&f, t, &params, &hk, 2000, RandomStream::new(3), Exec::Parallel).unwrap();
            assert!(d.squared.abs() < 3.0 * d.squared_se, "{d:?}");
        }
    }
}
