//! The density clusterer on its own: Excess of Mass versus leaf selection
//! on two well separated groups, one of which has two sub-blobs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use spkclust::geometry::DistanceMatrix;
use spkclust::hdbscan::{hdbscan_tree, select_clusters, SelectionMethod};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0f64, 0.15)?;
    let centres: [(f64, f64); 3] = [(0.0, 0.0), (0.7, 0.0), (10.0, 10.0)];
    let mut points = Vec::new();
    for &(x, y) in &centres {
        for _ in 0..25 {
            points.push((x + noise.sample(&mut rng), y + noise.sample(&mut rng)));
        }
    }
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|a| points.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
        .collect();
    let dm = DistanceMatrix::from_square(&rows)?;

    let tree = hdbscan_tree(&dm, 5, 3)?;
    println!("condensed tree: {} cluster nodes", tree.cluster_ids().len());
    for (node, stability) in tree.cluster_ids().zip(tree.stabilities()) {
        println!("  node {node}: children {:?}, stability {stability:.1}", tree.cluster_children(node));
    }

    for method in [SelectionMethod::ExcessOfMass, SelectionMethod::Leaf] {
        let labels = select_clusters(&tree, method);
        let (groups, noise) = labels.groups();
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        println!("{method}: {} clusters of sizes {sizes:?}, {} noise", groups.len(), noise.len());
    }
    Ok(())
}
