use proptest::prelude::*;
use slm_core::corpus::{read_csv_roc, read_jsonl, write_csv_roc, write_jsonl};
use slm_core::embedding::{read_embeddings, write_embeddings};
use slm_core::rng::SeededRng;
use slm_core::{load_embeddings, shuffle_story, EmbeddedStory, Story};

fn sentence() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,\"'.!?;:éü-]{1,40}"
        .prop_map(|s| s.trim().to_string())
        .prop_filter("non-empty after trim", |s| !s.is_empty())
}

fn stories(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<Story>> {
    prop::collection::vec(prop::collection::vec(sentence(), 5), len).prop_map(|all| {
        all.into_iter()
            .enumerate()
            .map(|(i, s)| Story::new(format!("story-{i}"), s).unwrap())
            .collect()
    })
}

proptest! {
    #[test]
    fn csv_roundtrip(corpus in stories(0..12)) {
        let mut buf = Vec::new();
        write_csv_roc(&corpus, &mut buf).unwrap();
        prop_assert_eq!(read_csv_roc(buf.as_slice()).unwrap(), corpus);
    }

    #[test]
    fn jsonl_roundtrip(corpus in stories(0..12)) {
        let mut buf = Vec::new();
        write_jsonl(&corpus, &mut buf).unwrap();
        let back = read_jsonl(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &corpus);
        let mut again = Vec::new();
        write_jsonl(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn embeddings_roundtrip_bit_exact(seed in any::<u64>(), n in 1usize..7, d in 1usize..9) {
        let mut rng = SeededRng::new(seed);
        let story = EmbeddedStory::<f64> {
            story_id: format!("s{seed}"),
            encoder: "test".into(),
            sentences: (0..n).map(|i| format!("sentence {i}")).collect(),
            embeddings: (0..n)
                .map(|_| (0..d).map(|_| rng.uniform(-1e3, 1e3) * 10f64.powi(rng.below(20) as i32 - 10)).collect())
                .collect(),
            gold_perm: None,
        };
        let mut buf = Vec::new();
        write_embeddings(std::slice::from_ref(&story), None, &mut buf).unwrap();
        let back: Vec<EmbeddedStory<f64>> = read_embeddings(buf.as_slice()).unwrap();
        prop_assert_eq!(&back[0], &story);
    }
}

/// Ten stories written the way an external exporter would: a `_meta` line,
/// dim 512, shuffled presentation with `gold_perm`.
#[test]
fn exporter_style_file_loads() {
    let mut rng = SeededRng::new(3);
    let stories: Vec<EmbeddedStory<f64>> = (0..10)
        .map(|i| {
            let story = Story::new(
                format!("roc-{i:03}"),
                (0..5).map(|k| format!("Story {i} sentence {k}.")).collect(),
            )
            .unwrap();
            let shuffled = shuffle_story(&story, i);
            EmbeddedStory {
                story_id: story.story_id.clone(),
                encoder: "use".into(),
                sentences: shuffled.sentences.clone(),
                embeddings: (0..5).map(|_| (0..512).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect(),
                gold_perm: Some(shuffled.gold_perm.clone()),
            }
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("use.jsonl");
    let meta = serde_json::json!({"encoder": "use", "dim": 512});
    write_embeddings(&stories, Some(&meta), std::fs::File::create(&path).unwrap()).unwrap();

    let back: Vec<EmbeddedStory<f64>> = load_embeddings(&path).unwrap();
    assert_eq!(back, stories);
    assert!(back.iter().all(|s| s.dim() == 512));
    let ids: std::collections::BTreeSet<_> = back.iter().map(|s| s.story_id.clone()).collect();
    assert_eq!(ids.len(), 10);
}

#[test]
fn single_precision_reads_double_file() {
    let s = EmbeddedStory::<f64> {
        story_id: "a".into(),
        encoder: "t".into(),
        sentences: vec!["x".into(), "y".into()],
        embeddings: vec![vec![0.1, 0.2], vec![0.3, -0.4]],
        gold_perm: None,
    };
    let mut buf = Vec::new();
    write_embeddings(&[s], None, &mut buf).unwrap();
    let back: Vec<EmbeddedStory<f32>> = read_embeddings(buf.as_slice()).unwrap();
    assert_eq!(back[0].embeddings[1], vec![0.3f32, -0.4f32]);
}
