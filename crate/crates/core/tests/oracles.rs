mod common;

use approx::assert_abs_diff_eq;
use rand::Rng;

use spkclust::geometry::DistanceMatrix;
use spkclust::hdbscan::{
    build_hierarchy, condense_tree, core_distances, hdbscan_tree, minimum_spanning_tree,
    select_clusters, selected_nodes, MutualReachability, SelectionMethod,
};

// The reference implementations are only useful if they are right on
// cases small enough to check by hand.

#[test]
fn prufer_enumerates_every_labelled_tree() {
    for n in 3..=6 {
        let d = vec![vec![1.0; n]; n];
        let (w, visited) = common::exhaustive_mst_weight(&d);
        assert_eq!(visited, (n as u64).pow(n as u32 - 2));
        assert_eq!(w, (n - 1) as f64);
    }
    // Path 0-1-2-3 decodes from [1, 2].
    let mut e = common::prufer_decode(&[1, 2], 4);
    e.iter_mut().for_each(|p| *p = (p.0.min(p.1), p.0.max(p.1)));
    e.sort();
    assert_eq!(e, vec![(0, 1), (1, 2), (2, 3)]);
}

#[test]
fn reference_single_linkage_on_a_line() {
    let xs = [0.0, 1.0, 3.0, 7.0];
    let d: Vec<Vec<f64>> = xs.iter().map(|a: &f64| xs.iter().map(|b| (a - b).abs()).collect()).collect();
    assert_eq!(common::single_linkage_heights(&d), vec![1.0, 2.0, 4.0]);
    assert_eq!(common::core_distances(&d, 1), vec![1.0, 1.0, 2.0, 4.0]);
    assert_eq!(common::core_distances(&d, 2), vec![3.0, 2.0, 3.0, 6.0]);
}

#[test]
fn reference_antichain_search_on_known_tree() {
    // Two well-separated pairs of tight groups on a line.
    let xs: Vec<[f64; 2]> = [0.0, 0.1, 0.2, 5.0, 5.1, 5.2, 50.0, 50.1, 50.2, 55.0, 55.1, 55.2]
        .iter()
        .map(|&x| [x, 0.0])
        .collect();
    let dm = DistanceMatrix::from_square(&common::euclidean_distances(&xs)).unwrap();
    let tree = hdbscan_tree(&dm, 3, 1).unwrap();
    let stab = common::stabilities_per_point(&tree);
    let (best, optimal) = common::best_antichains(&tree, &stab);
    assert!(best > 0.0);
    let chosen: std::collections::BTreeSet<usize> = selected_nodes(&tree, SelectionMethod::ExcessOfMass).into_iter().collect();
    assert!(optimal.contains(&chosen));
    // The four tight triples are far more stable than their unions.
    assert_eq!(select_clusters(&tree, SelectionMethod::ExcessOfMass).num_clusters(), 4);
}

#[test]
fn hierarchy_matches_reference_on_random_corpora() {
    let mut rng = common::rng(41);
    for _ in 0..60 {
        let n = rng.random_range(2..=10);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| common::gaussian_vec(&mut rng, 6)).collect();
        let ms = rng.random_range(1..n.max(2));
        let d = common::cosine_distances(&pts);
        let mr = common::mutual_reachability(&d, &common::core_distances(&d, ms));
        let mut expected = common::single_linkage_heights(&mr);
        expected.sort_by(f64::total_cmp);

        let dm = DistanceMatrix::from_square(&d).unwrap();
        let core = core_distances(&dm, ms).unwrap();
        let view = MutualReachability::new(&dm, &core).unwrap();
        let dendrogram = build_hierarchy(n, &minimum_spanning_tree(&view));
        let mut got = dendrogram.heights();
        got.sort_by(f64::total_cmp);
        assert_eq!(got.len(), expected.len());
        for (g, e) in got.iter().zip(&expected) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
    }
}

#[test]
fn stabilities_match_per_point_recount() {
    let mut rng = common::rng(5);
    for _ in 0..30 {
        let pts = common::nested_blobs(&mut rng, 40);
        let dm = DistanceMatrix::from_square(&common::euclidean_distances(&pts)).unwrap();
        let mcs = rng.random_range(2..=5);
        let Ok(tree) = hdbscan_tree(&dm, mcs, rng.random_range(1..=3)) else { continue };
        let a = tree.stabilities();
        let b = common::stabilities_per_point(&tree);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn condensing_rejects_tiny_min_cluster_size() {
    let dm = DistanceMatrix::from_condensed(3, vec![1.0, 2.0, 3.0]).unwrap();
    let core = core_distances(&dm, 1).unwrap();
    let view = MutualReachability::new(&dm, &core).unwrap();
    let dendrogram = build_hierarchy(3, &minimum_spanning_tree(&view));
    assert!(condense_tree(&dendrogram, 1).is_err());
}
