//! Synthetic corpora for self-contained runs and tests.

use crate::corpus::Story;
use crate::embedding::EmbeddedStory;
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Gold-ordered stories whose sentence embeddings are independent random unit
/// vectors; sentence texts are placeholders.
pub fn random_embedded_corpus<F: Scalar>(
    stories: usize,
    sentences: usize,
    d: usize,
    seed: u64,
) -> Vec<EmbeddedStory<F>> {
    let mut rng = SeededRng::new(seed);
    (0..stories)
        .map(|s| {
            let embeddings = (0..sentences)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| F::of(x / norm)).collect()
                })
                .collect();
            EmbeddedStory {
                story_id: format!("synthetic-{s:05}"),
                encoder: "random-unit".into(),
                sentences: (0..sentences).map(|i| format!("sentence {i} of story {s}")).collect(),
                embeddings,
                gold_perm: None,
            }
        })
        .collect()
}

const NAMES: [&str; 12] = [
    "Anna", "Ben", "Carla", "Dev", "Emma", "Farid", "Gina", "Hugo", "Iris", "Jonas", "Kemal", "Lena",
];

/// `(goal, place, tool, result)` per theme.
const THEMES: [(&str, &str, &str, &str); 10] = [
    ("bake a cake", "kitchen", "oven", "cake"),
    ("fix the bike", "garage", "wrench", "bike"),
    ("plant tomatoes", "garden", "shovel", "plants"),
    ("paint the fence", "yard", "brush", "fence"),
    ("write a song", "studio", "guitar", "song"),
    ("catch a fish", "lake", "rod", "fish"),
    ("build a shelf", "workshop", "saw", "shelf"),
    ("knit a scarf", "porch", "needles", "scarf"),
    ("clean the attic", "attic", "broom", "attic"),
    ("sew a dress", "studio", "machine", "dress"),
];

/// Sentence templates by stage; `{n}` name, `{g}` goal, `{p}` place, `{t}` tool,
/// `{r}` result.
const STAGES: [[&str; 3]; 5] = [
    [
        "{n} decided to {g} this weekend.",
        "One morning {n} wanted to {g}.",
        "{n} had always dreamed to {g}.",
    ],
    [
        "First {n} went to the {p} to get ready.",
        "So {n} walked over to the {p}.",
        "{n} hurried into the {p} after breakfast.",
    ],
    [
        "There {n} picked up the old {t} and began.",
        "The {t} was dusty but {n} started working with it.",
        "{n} grabbed the {t} and got to work.",
    ],
    [
        "After many hours the {r} was finally done.",
        "By evening the {r} looked almost perfect.",
        "It took all day but the {r} came out well.",
    ],
    [
        "{n} felt proud and smiled at the result.",
        "Everyone praised {n} and {n} was very happy.",
        "{n} promised to do it again next year.",
    ],
];

/// Five-sentence stories following a fixed event script (intention, place,
/// tool, result, reaction) with randomized names, themes and phrasings.
pub fn template_stories(count: usize, seed: u64) -> Vec<Story> {
    let mut rng = SeededRng::new(seed);
    (0..count)
        .map(|i| {
            let name = NAMES[rng.below(NAMES.len() as u64) as usize];
            let (goal, place, tool, result) = THEMES[rng.below(THEMES.len() as u64) as usize];
            let sentences = STAGES
                .iter()
                .map(|variants| {
                    variants[rng.below(variants.len() as u64) as usize]
                        .replace("{n}", name)
                        .replace("{g}", goal)
                        .replace("{p}", place)
                        .replace("{t}", tool)
                        .replace("{r}", result)
                })
                .collect();
            Story::new(format!("template-{i:05}"), sentences).expect("templates are non-empty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn template_stories_are_deterministic() {
        let a = template_stories(20, 4);
        assert_eq!(a, template_stories(20, 4));
        assert_ne!(a, template_stories(20, 5));
        assert!(a.iter().all(|s| s.len() == 5));
    }

    #[test]
    fn random_corpus_has_unit_vectors() {
        let c = random_embedded_corpus::<f64>(3, 4, 6, 1);
        for s in &c {
            for e in &s.embeddings {
                let norm: f64 = e.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }
}
