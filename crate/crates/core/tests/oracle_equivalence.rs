use bulkdiff::cell_problems::*;
use bulkdiff::*;

fn compare(model: CoefficientModel) {
    let o = SectorOracle::new(Domain::cube(1, 1).unwrap(), 1.0, model, 2).unwrap();
    let nu = o.solve(&OracleMode::Nu { p: 1.0 }).unwrap().value;
    let star = o.solve(&OracleMode::NuStar { q: 1.0 }).unwrap().value;
    let mut spec = CellProblemSpec::new(1, 1, 1.0, model, 4000, 5);
    spec.truncation = Some(2);
    let a = solve_nu(&spec).unwrap();
    let b = solve_nu_star(&spec).unwrap();
    assert!((a.value - nu).abs() < 0.05 * nu, "nu {} vs {nu}", a.value);
    assert!(a.value >= nu - 3.0 * a.se, "nu {} below {nu}", a.value);
    assert!((b.value - star).abs() < 0.05 * star, "nu* {} vs {star}", b.value);
    assert!(b.value <= star + 3.0 * b.se, "nu* {} above {star}", b.value);
}

#[test]
fn count_indicator_matches_the_sector_oracle() {
    compare(CoefficientModel::count_indicator(2.0, 2).unwrap());
}

#[test]
fn anisotropic_count_matches_the_sector_oracle() {
    compare(CoefficientModel::new(ModelKind::AnisotropicCount, 2.0).unwrap());
}
