mod common;

use proptest::prelude::*;

use spkclust::io::{self, EmbeddingFormat, ReportTable};
use spkclust::metrics::EvaluationReport;
use spkclust::{Cluster, ClusterOrigin, ClusteringResult, Corpus, Embedding, Utterance};

fn arb_corpus() -> impl Strategy<Value = Corpus> {
    (1usize..6, 1usize..12).prop_flat_map(|(dim, n)| {
        prop::collection::vec(
            (
                prop::collection::vec(-1.0f64..1.0, dim),
                prop::option::of(0.001f64..100.0),
                prop::option::of("[a-z]{1,6}"),
            ),
            n,
        )
        .prop_filter_map("zero vector", |rows| {
            let utts: Option<Vec<Utterance>> = rows
                .into_iter()
                .enumerate()
                .map(|(i, (v, d, s))| {
                    let mut u = Utterance::new(format!("utt-{i}"), Embedding::normalized(v).ok()?);
                    if let Some(d) = d {
                        u = u.with_duration(d);
                    }
                    if let Some(s) = s {
                        u = u.with_speaker(s);
                    }
                    Some(u)
                })
                .collect();
            Corpus::new(utts?).ok()
        })
    })
}

fn arb_result(n: usize) -> impl Strategy<Value = Vec<Option<usize>>> {
    prop::collection::vec(prop::option::of(0usize..5), n)
}

fn result_from(labels: &[Option<usize>], corpus: &Corpus) -> ClusteringResult {
    let mut result = ClusteringResult::default();
    for k in 0..5 {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Some(k)).collect();
        if members.is_empty() {
            continue;
        }
        // Random members can cancel out; those go to noise instead.
        match Cluster::new(k * 10, members.clone(), corpus, ClusterOrigin::default()) {
            Ok(c) => result.clusters.push(c),
            Err(_) => result.noise.extend(members),
        }
    }
    result.noise.extend((0..labels.len()).filter(|&i| labels[i].is_none()));
    result.noise.sort_unstable();
    result
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn text_embeddings_round_trip_exactly(corpus in arb_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.tsv");
        io::save_embeddings(&corpus, &p, EmbeddingFormat::Text).unwrap();
        prop_assert_eq!(io::load_embeddings(&p, false).unwrap(), corpus);
    }

    #[test]
    fn binary_embeddings_round_trip_to_f32(corpus in arb_corpus()) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.bin");
        io::save_embeddings(&corpus, &p, EmbeddingFormat::Binary).unwrap();
        let back = io::load_embeddings(&p, true).unwrap();
        prop_assert_eq!(back.len(), corpus.len());
        for (a, b) in corpus.utterances().iter().zip(back.utterances()) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(&a.true_speaker, &b.true_speaker);
            prop_assert_eq!(a.duration_seconds.map(|d| d as f32), b.duration_seconds.map(|d| d as f32));
            for (x, y) in a.embedding.values().iter().zip(b.embedding.values()) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn assignments_round_trip((corpus, labels) in arb_corpus().prop_flat_map(|c| { let n = c.len(); (Just(c), arb_result(n)) })) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.tsv");
        let result = result_from(&labels, &corpus);
        io::save_assignments(&result, &corpus, None, &p).unwrap();
        let rows = io::load_assignments(&p).unwrap();
        prop_assert_eq!(rows.iter().map(|r| r.id.clone()).collect::<Vec<_>>(),
                        corpus.utterances().iter().map(|u| u.id.clone()).collect::<Vec<_>>());
        let back = io::result_from_assignments(&rows, &corpus).unwrap();
        prop_assert_eq!(back.assignments(corpus.len()), result.assignments(corpus.len()));
        prop_assert_eq!(back.noise, result.noise);
    }

    #[test]
    fn report_round_trips_within_formatting(
        clusters in 1usize..200, one in 0usize..200,
        purity in 0.0f64..=1.0, uniq in 0.0f64..=1.0, noise in 0.0f64..=1.0, coverage in 0.0f64..=1.0,
    ) {
        let report = EvaluationReport {
            num_utterances: 1000,
            num_clusters_total: clusters,
            num_clusters_after_filter: clusters,
            per_cluster_purity: Default::default(),
            average_purity: purity,
            average_purity_weighted: purity,
            speakers_with_one_dominant_cluster: one,
            cluster_uniqueness: uniq,
            noise_fraction: noise,
            coverage,
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.tsv");
        io::save_report(&report, &p).unwrap();
        let back = io::load_report(&p).unwrap();
        let expected = ReportTable::from(&report);
        prop_assert_eq!((back.num_clusters, back.speakers_in_one_cluster), (clusters, one));
        for (a, b) in [
            (back.average_purity, expected.average_purity),
            (back.cluster_uniqueness, expected.cluster_uniqueness),
            (back.noise_fraction, expected.noise_fraction),
            (back.coverage, expected.coverage),
        ] {
            prop_assert!((a - b).abs() <= 0.00005 + 1e-12);
        }
    }
}

#[test]
fn header_comments_are_skipped_anywhere() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.tsv");
    std::fs::write(
        &p,
        "# encoder: some-model\n# resampled to 16 kHz mono\nid\tduration\tspeaker\tembedding\n# mid-file note\na\t1\tX\t0.6,0.8\n",
    )
    .unwrap();
    let c = io::load_embeddings(&p, false).unwrap();
    assert_eq!(c.len(), 1);
    assert_eq!(c.utterances()[0].true_speaker.as_deref(), Some("X"));
}

#[test]
fn header_only_file_is_rejected_as_empty() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.tsv");
    std::fs::write(&p, format!("{}\n", io::EMBEDDINGS_HEADER)).unwrap();
    assert!(io::load_embeddings(&p, true).is_err());
}

#[test]
fn truncated_binary_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.bin");
    let corpus = Corpus::new(vec![
        Utterance::new("a", Embedding::new(vec![1.0, 0.0]).unwrap()),
        Utterance::new("b", Embedding::new(vec![0.0, 1.0]).unwrap()),
    ])
    .unwrap();
    io::save_embeddings(&corpus, &p, EmbeddingFormat::Binary).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(io::load_embeddings(&p, true), Err(spkclust::Error::Parse { .. })));
}

#[test]
fn ids_with_tabs_are_refused_on_save() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = Corpus::new(vec![Utterance::new("a\tb", Embedding::new(vec![1.0]).unwrap())]).unwrap();
    assert!(io::save_embeddings(&corpus, dir.path().join("e.tsv"), EmbeddingFormat::Text).is_err());
    assert!(!dir.path().join("e.tsv").exists());
}
