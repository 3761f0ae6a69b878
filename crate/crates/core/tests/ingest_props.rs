mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use skillgraph::artifact::{ArtifactStore, BlobMeta, MediaKind};
use skillgraph::fixture;
use skillgraph::graph::{AttributeKind, EntityKind, Graph};
use skillgraph::ingest::{self, extract_entities, import_triples, register_skill, SkillManifest};
use skillgraph::skill;

proptest! {
    #[test]
    fn report_accounts_for_every_line(lines in prop::collection::vec("[a-c \t#\u{3042}]{0,12}", 0..40)) {
        let mut g = Graph::new();
        let r = import_triples(&lines, &mut g, None);
        prop_assert_eq!(r.lines_read, r.imported + r.duplicates + r.malformed.len());
        let counted = lines.iter().filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')).count();
        prop_assert_eq!(r.lines_read, counted);
    }

    #[test]
    fn reimport_adds_nothing(lines in prop::collection::vec("[ab]{1,2}\t[pq]\t[ab]{1,2}", 0..30)) {
        let mut g = Graph::new();
        let first = import_triples(&lines, &mut g, None);
        let before = g.to_snapshot_bytes();
        let second = import_triples(&lines, &mut g, None);
        prop_assert_eq!(second.imported, 0);
        prop_assert_eq!(second.duplicates, first.imported + first.duplicates);
        prop_assert_eq!(g.to_snapshot_bytes(), before);
    }

    #[test]
    fn mentions_are_ordered_and_disjoint(text in "[a-z \u{5e73}\u{9762}]{0,60}") {
        let mut gaz = fixture::gazetteer().unwrap();
        gaz.insert("平面", "plane", EntityKind::Environment).unwrap();
        let mentions = extract_entities(&text, &gaz);
        for pair in mentions.windows(2) {
            prop_assert!(pair[0].end <= pair[1].start);
        }
        for m in &mentions {
            prop_assert!(m.start < m.end && m.end <= text.len());
            prop_assert_eq!(&gaz.resolve(&text[m.start..m.end]).unwrap().canonical, &m.canonical);
        }
    }
}

/// 1,000 random lines drawn from a small vocabulary: the number imported must
/// equal the number of distinct normalized triples, computed independently.
#[test]
fn distinct_triples_oracle() {
    let mut rng = StdRng::seed_from_u64(7);
    let names = [
        "Ant",
        "ant",
        " ant ",
        "Half Cheetah",
        "half_cheetah",
        "soil",
        "平面",
        "Plane",
    ];
    let preds = ["habitat", " habitat", "is_a", "eats"];
    let lines: Vec<String> = (0..1000)
        .map(|_| {
            if rng.random_bool(0.03) {
                return "broken line".to_string();
            }
            format!(
                "{}\t{}\t{}",
                names.choose(&mut rng).unwrap(),
                preds.choose(&mut rng).unwrap(),
                names.choose(&mut rng).unwrap()
            )
        })
        .collect();

    let fold = |s: &str| s.trim().to_lowercase().replace(' ', "_");
    let mut distinct = HashSet::new();
    let mut bad = 0;
    for l in &lines {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != 3 {
            bad += 1;
            continue;
        }
        distinct.insert((fold(f[0]), f[1].trim().to_string(), fold(f[2])));
    }

    let mut g = Graph::new();
    let r = import_triples(&lines, &mut g, None);
    assert_eq!(r.imported, distinct.len());
    assert_eq!(r.malformed.len(), bad);
    assert_eq!(g.edge_count(), distinct.len());
}

#[test]
fn gazetteer_promotes_known_surfaces() {
    let mut g = Graph::new();
    let gaz = fixture::gazetteer().unwrap();
    import_triples(
        ["humans\tmodeled_on\thuman", "Half Cheetah\tis_a\tagent"],
        &mut g,
        Some(&gaz),
    );
    let humanoid = g.lookup("humanoid", EntityKind::Agent).unwrap();
    assert_eq!(g.triplets(humanoid, None).unwrap()[0].object, "human");
    assert!(g.lookup("human", EntityKind::Fact).is_some());
    assert!(g.lookup("half_cheetah", EntityKind::Agent).is_some());
    assert!(g.lookup("half_cheetah", EntityKind::Fact).is_none());
}

#[test]
fn registered_artifacts_come_back_by_role() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::open(dir.path()).unwrap();
    let mut rng = StdRng::seed_from_u64(11);
    let mut g = Graph::new();
    let mut expected = Vec::new();
    for i in 0..20 {
        let payload: Vec<u8> = (0..rng.random_range(0..256)).map(|_| rng.random()).collect();
        let net = store.put(&payload, BlobMeta::new(MediaKind::Network)).unwrap();
        let data = store
            .put(format!("dataset {i}").as_bytes(), BlobMeta::new(MediaKind::Dataset))
            .unwrap();
        let mut m = SkillManifest::new("ant", ["plane", "stair"][i % 2], &format!("task_{i}"), net);
        m.dataset = Some(data);
        register_skill(&m, &mut g, &store).unwrap();
        expected.push((m, net, data));
    }
    for (m, net, data) in &expected {
        let id = skill::find_skill(&g, &m.agent, &m.skill, &m.environment).unwrap();
        assert_eq!(
            skill::attribute_blobs(&g, id, AttributeKind::PretrainedNetwork),
            vec![*net]
        );
        assert_eq!(
            skill::attribute_blobs(&g, id, AttributeKind::OfflineDataset),
            vec![*data]
        );
    }
    let ant = g.lookup("ant", EntityKind::Agent).unwrap();
    assert_eq!(skill::skills_of(&g, ant).len(), 20);
}

#[test]
fn manifest_with_missing_blob_leaves_graph_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::open(dir.path()).unwrap();
    let mut g = Graph::new();
    let m = SkillManifest::new(
        "ant",
        "plane",
        "walk_up",
        skillgraph::artifact::ContentId::of(b"never stored"),
    );
    assert!(matches!(
        register_skill(&m, &mut g, &store),
        Err(ingest::IngestError::DanglingArtifact(_))
    ));
    assert_eq!(g.node_count(), 0);
}
