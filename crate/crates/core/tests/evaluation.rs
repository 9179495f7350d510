mod common;

use mixgraph::empirical::StatsSource;
use mixgraph::eval::{align_components, best_permutation, concentration_check, diagnostics, DiagnosticsConfig};
use mixgraph::model::{MixtureModel, DEFAULT_ENUMERATION_CAP};
use mixgraph::pipeline::{find_components, FindOptions};
use mixgraph::spectral::random_rotation;

#[test]
fn single_component_aligns_to_identity() {
    let chain: &[(usize, usize)] = &[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6)];
    let c = common::potts_component(7, 3, chain, &[0.5, 0.0, -0.5], 1.0, 0);
    let m = MixtureModel::new(vec![c], vec![1.0], 0).unwrap();
    let src = StatsSource::exact(&m, DEFAULT_ENUMERATION_CAP).unwrap();
    let est = find_components(&src, &m.union_graph(), 1, &random_rotation(1, 0), &FindOptions::new(2)).unwrap();
    let report = align_components(&est, &m, Some(&m.union_graph()), DEFAULT_ENUMERATION_CAP).unwrap();
    assert_eq!(report.permutation, vec![0]);
    assert!(!report.heuristic_alignment);
    assert!(report.weight_l1_error <= 1e-12);
    assert!(report.max_marginal_error <= 1e-8);
    assert_eq!(report.graph.unwrap().precision, 1.0);
}

#[test]
fn noisy_estimate_alignment_matches_exhaustive_search() {
    let m = common::tree_mixture(4);
    let samples = mixgraph::model::sample(&m, 20_000, 17, DEFAULT_ENUMERATION_CAP).unwrap();
    let src = StatsSource::empirical(samples).unwrap();
    let est = find_components(&src, &m.union_graph(), 2, &random_rotation(2, 5), &FindOptions::new(2)).unwrap();
    let report = align_components(&est, &m, None, DEFAULT_ENUMERATION_CAP).unwrap();
    let swapped = est.permuted(&[1, 0]).unwrap();
    let again = align_components(&swapped, &m, None, DEFAULT_ENUMERATION_CAP).unwrap();
    assert_eq!(again.permutation, vec![report.permutation[1], report.permutation[0]]);
    assert!(report.max_marginal_error.is_finite());
}

#[test]
fn assignment_small_matrices() {
    let cost = vec![vec![0.9, 0.1, 0.5], vec![0.2, 0.8, 0.7], vec![0.6, 0.4, 0.05]];
    assert_eq!(best_permutation(&cost), (vec![1, 0, 2], false));
}

#[test]
fn concentration_holds_at_large_n() {
    let m = common::potts_mixture(3, [&[(1, 2)], &[(1, 2)]], 1.0);
    let res = concentration_check(&m, 1, 2, &[], 1_000_000, 20, 0.01, 3).unwrap();
    assert_eq!(res.pass_rate, 1.0);
    assert!(res.worst_deviation <= res.epsilon);
}

#[test]
fn concentration_with_unit_delta() {
    let m = common::potts_mixture(3, [&[(1, 2)], &[(1, 2)]], 1.0);
    let res = concentration_check(&m, 1, 2, &[], 10_000, 20, 1.0, 9).unwrap();
    assert!((res.epsilon - 0.01).abs() < 1e-15);
    assert_eq!(res.pass_rate, 1.0);
    assert!(concentration_check(&m, 1, 2, &[], 10, 1, 0.0, 0).is_err());
}

#[test]
fn diagnostics_flag_coupled_reference() {
    let edges_a: &[(usize, usize)] = &[(0, 1), (1, 2), (2, 3)];
    let edges_b: &[(usize, usize)] = &[(1, 2), (2, 3)];
    let comps = vec![
        common::potts_component(4, 3, edges_a, &[0.8, 0.0, -0.4], 1.0, 0),
        common::potts_component(4, 3, edges_b, &[-0.4, 0.0, 0.8], 1.0, 1),
    ];
    let m = MixtureModel::new_unchecked_isolation(comps, vec![0.45, 0.55], 0).unwrap();
    let report = diagnostics(&m, &DiagnosticsConfig::default()).unwrap();
    assert!(!report.flags.a7);
    assert!(report.flags.a1);
}

#[test]
fn diagnostics_on_tree_mixture() {
    let m = common::tree_mixture(6);
    let report = diagnostics(&m, &DiagnosticsConfig { eta: Some(2), ..Default::default() }).unwrap();
    assert!(report.flags.a1 && report.flags.a3 && report.flags.a6 && report.flags.a7 && report.flags.a10);
    assert!(report.rho_min.unwrap() > 0.0);
    assert!(report.k.unwrap() > report.k_prime.unwrap());
    assert!(report.k_tree.unwrap() < report.k.unwrap());
    assert!(report.n_rank.unwrap() > 0.0);
    let text = serde_json::to_string(&report).unwrap();
    assert_eq!(serde_json::from_str::<mixgraph::eval::DiagnosticsReport>(&text).unwrap().p, 8);
}
