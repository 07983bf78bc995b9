// Temporary measurement probe; removed before finalization.
use cqnet_core::*;

fn one_server_spec(n: u64) -> NetworkSpec {
    NetworkSpec {
        r: 1,
        k: 2,
        n,
        n_i: vec![n],
        lambda_i: vec![4.0],
        p: vec![vec![0.5, 0.5]],
        mu_j: vec![4.0, 1.0],
        departure_kind: vec![PointProcessKind::Poisson; 2],
        beta_convention: BetaConvention::UnitSum,
    }
}

#[test]
#[ignore]
fn probe_criterion5_tv() {
    let spec = one_server_spec(2000);
    let params = derive_params(&spec);
    let rho13 = rho_j_of_t(&params, 0, 3.0).unwrap();
    println!("rho_1(3) = {rho13}");
    for seed in [42u64, 43, 44, 45, 46, 47, 48, 49] {
        let mut cfg = SimConfig::new(spec.clone(), 5.0, linspace(5.0, 51), seed);
        cfg.record_events = false;
        cfg.record_predeparture = false;
        let trajs = replicate(&cfg, 300);
        let est = pmf_at(&trajs, 0, 3.0, 10).unwrap();
        let tv = tv_distance(&est.with_tail(), &geometric_pmf(rho13, 10)).unwrap();
        println!("seed {seed}: TV = {tv:.4}  (threshold 0.03)");
    }
}

#[test]
#[ignore]
fn probe_criterion8_tv() {
    // Disjoint-hub scenario, client 1 has load 0.04.
    let spec = NetworkSpec {
        r: 2,
        k: 4,
        n: 2000,
        n_i: vec![1000, 1000],
        lambda_i: vec![1.0, 1.0],
        p: vec![vec![0.4, 0.1, 0.5, 0.0], vec![0.25, 0.0, 0.25, 0.5]],
        mu_j: vec![0.65, 1.25, 0.75, 0.2],
        departure_kind: vec![PointProcessKind::Poisson; 4],
        beta_convention: BetaConvention::UnitSum,
    };
    assert!(validate_spec(&spec).is_empty());
    let params = derive_params(&spec);
    println!("rho = {:?}", params.rho_j);
    for seed in [42u64, 43, 44, 45, 46] {
        let mut cfg = SimConfig::new(spec.clone(), 5.0, linspace(5.0, 51), seed);
        cfg.record_events = false;
        cfg.record_predeparture = false;
        let trajs = replicate(&cfg, 300);
        let rep = time_invariance_check(&trajs, 1, 2.0, 5.0, 10, 0.03, spec.mu_j[1]).unwrap();
        println!("seed {seed}: TV(t=2 vs t=5) = {:.4}", rep.tv);
    }
}

#[test]
#[ignore]
fn probe_criterion6_predeparture() {
    // Two-hub scenario with Erlang-2 streams.
    let n = 2000u64;
    let spec = NetworkSpec {
        r: 2,
        k: 3,
        n,
        n_i: vec![1800, 200],
        lambda_i: vec![1.0, 0.5],
        p: vec![vec![0.25, 0.25, 0.5], vec![0.0, 0.0, 1.0]],
        mu_j: vec![0.45, 0.5, 5.0 / 12.0],
        departure_kind: vec![PointProcessKind::RenewalGamma { shape: 2.0 }; 3],
        beta_convention: BetaConvention::UnitSum,
    };
    assert!(validate_spec(&spec).is_empty());
    let params = derive_params(&spec);
    println!("rho = {:?}  beta_ik = {:?}", params.rho_j, (0..2).map(|i| params.beta_ij[i][2]).collect::<Vec<_>>());
    for seed in [42u64, 43] {
        let mut cfg = SimConfig::new(spec.clone(), 5.0, linspace(5.0, 51), seed);
        cfg.record_events = true;
        let trajs = replicate(&cfg, 300);
        for j in 0..2 {
            let rho_t = rho_j_of_t(&params, j, 3.0).unwrap();
            let est = predeparture_pmf_at(&trajs, j, 3.0, 10).unwrap();
            let diff = (est.pmf[0] - (1.0 - rho_t)).abs();
            let tol = 4.0 * est.stderr[0] + 0.02;
            println!(
                "seed {seed} station {j}: |P0 - (1-rho)| = {diff:.4} tol {tol:.4} (rho_t {rho_t:.4})"
            );
            // Integral relation at levels 0..3.
            let ie = theorem1_integrals(&trajs, j, 3.0, 3, &params).unwrap();
            for l in 0..=3 {
                let d = (ie.lhs[l] - ie.rhs[l]).abs();
                let t = 4.0 * ie.stderr_diff[l] + 0.02;
                println!("  level {l}: |lhs-rhs| = {d:.4} tol {t:.4} (lhs {:.4} rhs {:.4})", ie.lhs[l], ie.rhs[l]);
            }
        }
        // Occupancy at t in {1,3,5}.
        let occ = occupancy_curves(&params, &cfg.sample_grid).unwrap();
        for i in 0..2 {
            for &t in &[1.0f64, 3.0, 5.0] {
                let g = cfg.sample_grid.iter().position(|&x| (x - t).abs() < 1e-9).unwrap();
                let vals: Vec<f64> = trajs.iter().map(|tr| tr.server_count[i][g] as f64 / n as f64).collect();
                let (m, s) = mean_stderr(&vals);
                let d = (m - occ[i][g]).abs();
                println!("  occ server {i} t={t}: diff {d:.4} tol {:.4}", 4.0 * s + 0.02);
            }
        }
    }
}
