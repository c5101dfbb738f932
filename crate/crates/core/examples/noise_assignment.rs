//! Points the density clusterer left as noise join the most similar
//! cluster centroid, but only above the similarity threshold.

use spkclust::geometry::cosine_similarity;
use spkclust::pipeline::assign_noise;
use spkclust::{Cluster, ClusterOrigin, Corpus, Embedding, Utterance};

fn unit(angle_deg: f64) -> Embedding {
    let a = angle_deg.to_radians();
    Embedding::new(vec![a.cos(), a.sin()]).expect("unit vector")
}

fn main() -> anyhow::Result<()> {
    // Two tight clusters at 0 and 90 degrees, and three stray points.
    let angles = [-2.0, 0.0, 2.0, 88.0, 90.0, 92.0, 20.0, 45.0, 70.0];
    let corpus = Corpus::new(
        angles
            .iter()
            .enumerate()
            .map(|(i, &a)| Utterance::new(format!("u{i}"), unit(a)))
            .collect(),
    )?;
    let clusters = vec![
        Cluster::new(0, vec![0, 1, 2], &corpus, ClusterOrigin::default())?,
        Cluster::new(1, vec![3, 4, 5], &corpus, ClusterOrigin::default())?,
    ];
    for i in 6..9 {
        let sims: Vec<String> = clusters
            .iter()
            .map(|c| format!("{:.3}", cosine_similarity(corpus.embedding(i), c.centroid()).unwrap()))
            .collect();
        println!("u{i} at {:>4} deg: similarity to centroids {sims:?}", angles[i]);
    }
    let (clusters, noise) = assign_noise(&corpus, clusters, vec![6, 7, 8], 0.8)?;
    for c in &clusters {
        println!("cluster {}: {:?}", c.id, c.members());
    }
    println!("still noise: {noise:?}");
    Ok(())
}
