use precis::model::sample_covariance;
use precis::simgen::{contaminate, gen_precision, sample_mvn, GraphSpec};
use precis::{Dataset, SymMatrix};

#[test]
fn random_graph_edge_count_is_binomial() {
    let d = 100;
    let pairs = (d * (d - 1) / 2) as f64;
    let p = 3.0 / d as f64;
    let seeds = 200;
    let mean = (0..seeds)
        .map(|s| gen_precision(&GraphSpec::random(d), s).unwrap().1.edge_count() as f64)
        .sum::<f64>()
        / seeds as f64;
    let expected = pairs * p;
    assert!((expected - 148.5).abs() < 1e-9);
    let se = (pairs * p * (1.0 - p) / seeds as f64).sqrt();
    assert!((mean - expected).abs() < 3.0 * se, "mean {mean}, expected {expected}, se {se}");
}

#[test]
fn generated_precisions_are_positive_definite() {
    for seed in 0..20 {
        let (omega, adj) = gen_precision(&GraphSpec::random(30), seed).unwrap();
        assert!(omega.min_eigenvalue() > 0.49);
        assert_eq!(precis::Adjacency::from_support(&omega), adj);
    }
}

#[test]
fn sample_covariance_matches_target() {
    let n = 100_000;
    let x = sample_mvn(n, &SymMatrix::identity(2), 21).unwrap();
    let s = sample_covariance(&x).unwrap();
    let nf = n as f64;
    // Var of a sample variance is 2/n, of a sample covariance 1/n, for unit normals
    for (i, j, se) in [(0, 0, (2.0 / nf).sqrt()), (1, 1, (2.0 / nf).sqrt()), (0, 1, (1.0 / nf).sqrt())] {
        let want = if i == j { 1.0 } else { 0.0 };
        assert!((s.get(i, j) - want).abs() < 4.0 * se, "({i},{j}) = {}", s.get(i, j));
    }
}

#[test]
fn contamination_has_requested_variance() {
    let n = 100_000;
    let x = Dataset::from_flat(n, 2, vec![0.0; 2 * n]).unwrap();
    let c = contaminate(&x, &[1.0, 1.0], 0.25, 3).unwrap();
    assert_eq!(c.me.variances(), &[0.25, 0.25]);
    let nf = n as f64;
    for j in 0..2 {
        let u: Vec<f64> = c.w.column(j).iter().zip(x.column(j)).map(|(w, x)| w - x).collect();
        let m = u.iter().sum::<f64>() / nf;
        let v = u.iter().map(|e| (e - m).powi(2)).sum::<f64>() / nf;
        // Var of a sample variance of N(0, σ²) is 2σ⁴/n
        let se = (2.0 * 0.25f64.powi(2) / nf).sqrt();
        assert!((v - 0.25).abs() < 4.0 * se, "column {j}: {v}");
    }
}

#[test]
fn noise_is_added_exactly() {
    let (omega, _) = gen_precision(&GraphSpec::hub(20, 10), 5).unwrap();
    let x = sample_mvn(50, &omega.inverse().unwrap(), 5).unwrap();
    let c = contaminate(&x, &omega.inverse().unwrap().diag(), 0.5, 5).unwrap();
    for ((w, x), u) in c.w.as_slice().iter().zip(x.as_slice()).zip(c.noise.as_slice()) {
        assert_eq!(*w, x + u);
    }
}
