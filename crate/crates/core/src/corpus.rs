//! Story corpora: loading, serialization, seeded shuffling and splitting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::permutation::Permutation;
use crate::rng::SeededRng;

/// Header of the five-sentence story CSV.
pub const ROC_HEADER: [&str; 7] = [
    "storyid",
    "storytitle",
    "sentence1",
    "sentence2",
    "sentence3",
    "sentence4",
    "sentence5",
];

/// Column that marks the two-ending (cloze) variant of the story CSV.
const CLOZE_MARKER: &str = "randomfifthsentencequiz1";

/// A story with its sentences in gold order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub story_id: String,
    pub sentences: Vec<String>,
}

impl Story {
    /// Builds a story, trimming whitespace and rejecting empty sentences.
    pub fn new(story_id: impl Into<String>, sentences: Vec<String>) -> Result<Self> {
        let story_id = story_id.into();
        if sentences.is_empty() {
            return Err(Error::Empty(format!("story {story_id:?} has no sentences")));
        }
        let sentences = sentences
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let t = s.trim();
                if t.is_empty() {
                    Err(Error::EmptySentence {
                        record: story_id.clone(),
                        sentence: i + 1,
                    })
                } else {
                    Ok(t.to_string())
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Story {
            story_id,
            sentences,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// A story presented in shuffled order.
///
/// `gold_perm[k]` is the gold position of the sentence shown at shuffled index `k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffledStory {
    pub story_id: String,
    pub sentences: Vec<String>,
    pub gold_perm: Permutation,
    pub seed: u64,
}

impl ShuffledStory {
    /// Restores the gold sentence order.
    pub fn unshuffle(&self) -> Vec<String> {
        self.gold_perm
            .scatter(&self.sentences)
            .expect("gold_perm has the story's length")
    }

    /// Shuffled indices listed in gold order.
    pub fn gold_order(&self) -> Permutation {
        self.gold_perm.inverse()
    }
}

/// Fisher–Yates shuffle of a story under [`SeededRng`].
pub fn shuffle_story(story: &Story, seed: u64) -> ShuffledStory {
    let mut order: Vec<usize> = (0..story.len()).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let sentences = order.iter().map(|&i| story.sentences[i].clone()).collect();
    ShuffledStory {
        story_id: story.story_id.clone(),
        sentences,
        gold_perm: Permutation::new_unchecked(order),
        seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    #[serde(alias = "csv")]
    CsvRoc,
    Jsonl,
}

impl CorpusFormat {
    /// `.csv` selects the story CSV; anything else is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CorpusFormat::CsvRoc,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv-roc" | "csv" => Ok(CorpusFormat::CsvRoc),
            "jsonl" => Ok(CorpusFormat::Jsonl),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<Story>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        CorpusFormat::CsvRoc => read_csv_roc(file),
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file)),
    }
}

/// Reads the five-sentence story CSV; lines starting with `#` are skipped.
pub fn read_csv_roc<R: Read>(reader: R) -> Result<Vec<Story>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let cloze = header.iter().any(|h| h == CLOZE_MARKER);
    if !cloze && header != ROC_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}, expected {ROC_HEADER:?}"),
        });
    }

    let mut seen = HashSet::new();
    let mut stories = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let story_id = record.get(0).unwrap_or("").trim().to_string();
        if cloze || record.len() == ROC_HEADER.len() + 1 {
            return Err(Error::TwoChoiceStory { line, story_id });
        }
        if record.len() != ROC_HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    ROC_HEADER.len(),
                    record.len()
                ),
            });
        }
        if story_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty storyid".into(),
            });
        }
        let sentences = record.iter().skip(2).map(str::to_string).collect();
        let story = Story::new(story_id, sentences)?;
        if !seen.insert(story.story_id.clone()) {
            return Err(Error::DuplicateStoryId(story.story_id));
        }
        stories.push(story);
    }
    Ok(stories)
}

fn csv_error(e: csv::Error, fallback_line: usize) -> Error {
    let line = e
        .position()
        .map_or(fallback_line, |p| p.line() as usize);
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

/// Reads one `{"story_id", "sentences"}` object per line. Blank lines and
/// `_meta` header lines are skipped; unknown fields are ignored.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Story>> {
    #[derive(Deserialize)]
    struct Record {
        story_id: String,
        sentences: Vec<String>,
    }

    let mut seen = HashSet::new();
    let mut stories = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() || is_meta_line(&line) {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let story = Story::new(rec.story_id, rec.sentences)?;
        if !seen.insert(story.story_id.clone()) {
            return Err(Error::DuplicateStoryId(story.story_id));
        }
        stories.push(story);
    }
    Ok(stories)
}

pub(crate) fn is_meta_line(line: &str) -> bool {
    line.trim_start().starts_with("{\"_meta\"")
}

pub fn write_jsonl<W: Write>(stories: &[Story], writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for s in stories {
        let line = serde_json::to_string(s).expect("story serializes");
        writeln!(w, "{line}").map_err(|e| Error::io("<jsonl>", e))?;
    }
    w.flush().map_err(|e| Error::io("<jsonl>", e))
}

/// Writes the five-sentence CSV; every story must have exactly five sentences.
pub fn write_csv_roc<W: Write>(stories: &[Story], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Parse {
        line: 0,
        message: e.to_string(),
    };
    w.write_record(ROC_HEADER).map_err(io)?;
    for s in stories {
        if s.len() != 5 {
            return Err(Error::Config(format!(
                "story {:?} has {} sentences; csv-roc holds exactly 5",
                s.story_id,
                s.len()
            )));
        }
        let mut row = vec![s.story_id.as_str(), ""];
        row.extend(s.sentences.iter().map(String::as_str));
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

/// Exact train/validation/test fractions plus the shuffle seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Ratio<u64>,
    pub validation: Ratio<u64>,
    pub test: Ratio<u64>,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(
        train: Ratio<u64>,
        validation: Ratio<u64>,
        test: Ratio<u64>,
        seed: u64,
    ) -> Result<Self> {
        for (name, f) in [("train", train), ("validation", validation), ("test", test)] {
            if f <= Ratio::from_integer(0) || f >= Ratio::from_integer(1) {
                return Err(Error::InvalidSplit(format!(
                    "{name} fraction {f} outside (0, 1)"
                )));
            }
        }
        if train + validation + test != Ratio::from_integer(1) {
            return Err(Error::InvalidSplit(format!(
                "fractions {train} + {validation} + {test} do not sum to 1"
            )));
        }
        Ok(SplitSpec {
            train,
            validation,
            test,
            seed,
        })
    }

    /// 80% / 10% / 10%.
    pub fn standard(seed: u64) -> Self {
        SplitSpec::new(Ratio::new(4, 5), Ratio::new(1, 10), Ratio::new(1, 10), seed)
            .expect("standard fractions are valid")
    }

    /// `(train, validation, test)` sizes for `n` items: validation and test are
    /// floored, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |f: Ratio<u64>| (f * Ratio::from_integer(n as u64)).to_integer() as usize;
        let validation = floor(self.validation);
        let test = floor(self.test);
        (n - validation - test, validation, test)
    }
}

/// Parses `"0.8"`, `"4/5"`, `"80%"` or `"1"` into an exact fraction.
pub fn parse_fraction(s: &str) -> Result<Ratio<u64>> {
    let s = s.trim();
    let bad = || Error::InvalidSplit(format!("cannot parse fraction {s:?}"));
    if let Some(pct) = s.strip_suffix('%') {
        return Ok(parse_fraction(pct)? / Ratio::from_integer(100));
    }
    if s.contains('/') {
        return Ratio::from_str(s).map_err(|_| bad());
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if (int.is_empty() && frac.is_empty())
        || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
        || frac.len() > 18
    {
        return Err(bad());
    }
    let denom = 10u64.pow(frac.len() as u32);
    let whole: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let part: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    Ok(Ratio::from_integer(whole) + Ratio::new(part, denom))
}

pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle followed by the cut described in [`SplitSpec::sizes`].
pub fn split_corpus<T: Clone>(items: &[T], spec: &SplitSpec) -> Result<Split<T>> {
    if items.is_empty() {
        return Err(Error::Empty("cannot split an empty corpus".into()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    SeededRng::new(spec.seed).shuffle(&mut order);
    let (n_train, n_val, _) = spec.sizes(items.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "storyid,storytitle,sentence1,sentence2,sentence3,sentence4,sentence5\n\
        a1,Title,One.,Two.,Three.,Four.,Five.\n";

    fn story(id: &str, n: usize) -> Story {
        Story::new(id, (0..n).map(|i| format!("sentence {i} of {id}")).collect()).unwrap()
    }

    #[test]
    fn csv_single_record() {
        let stories = read_csv_roc(ONE.as_bytes()).unwrap();
        assert_eq!(stories.len(), 1);
        assert_eq!(stories[0].story_id, "a1");
        assert_eq!(stories[0].len(), 5);
        assert_eq!(stories[0].sentences[4], "Five.");
    }

    #[test]
    fn csv_quoted_fields() {
        let text = "storyid,storytitle,sentence1,sentence2,sentence3,sentence4,sentence5\n\
            q,\"A, b\",\"He said \"\"hi\"\".\",Two.,Three.,Four.,\"Five, done.\"\n";
        let s = read_csv_roc(text.as_bytes()).unwrap();
        assert_eq!(s[0].sentences[0], "He said \"hi\".");
        assert_eq!(s[0].sentences[4], "Five, done.");
    }

    #[test]
    fn csv_blank_sentence_names_record() {
        let text = "storyid,storytitle,sentence1,sentence2,sentence3,sentence4,sentence5\n\
            bad7,T,One.,Two.,   ,Four.,Five.\n";
        match read_csv_roc(text.as_bytes()) {
            Err(Error::EmptySentence { record, sentence }) => {
                assert_eq!(record, "bad7");
                assert_eq!(sentence, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_duplicate_id() {
        let text = format!("{ONE}a1,T,1.,2.,3.,4.,5.\n");
        assert!(matches!(
            read_csv_roc(text.as_bytes()),
            Err(Error::DuplicateStoryId(id)) if id == "a1"
        ));
    }

    #[test]
    fn csv_two_choice_rejected() {
        let extra = "storyid,storytitle,sentence1,sentence2,sentence3,sentence4,sentence5\n\
            c1,T,1.,2.,3.,4.,5a.,5b.\n";
        assert!(matches!(
            read_csv_roc(extra.as_bytes()),
            Err(Error::TwoChoiceStory { line: 2, .. })
        ));
        let cloze = "InputStoryid,InputSentence1,InputSentence2,InputSentence3,InputSentence4,\
            RandomFifthSentenceQuiz1,RandomFifthSentenceQuiz2,AnswerRightEnding\n\
            c2,1.,2.,3.,4.,5a.,5b.,1\n";
        assert!(matches!(
            read_csv_roc(cloze.as_bytes()),
            Err(Error::TwoChoiceStory { .. })
        ));
    }

    #[test]
    fn csv_short_record_reports_line() {
        let text = format!("{ONE}a2,T,1.,2.\n");
        assert!(matches!(
            read_csv_roc(text.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn csv_bad_header() {
        assert!(matches!(
            read_csv_roc("id,a,b\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn jsonl_parse_error_reports_line() {
        let text = "{\"story_id\":\"x\",\"sentences\":[\"a\"]}\n{oops}\n";
        assert!(matches!(
            read_jsonl(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn jsonl_skips_meta_and_blank_lines() {
        let text = "{\"_meta\":{\"tool\":\"x\"}}\n\n{\"story_id\":\"x\",\"sentences\":[\" a \",\"b\"]}\n";
        let s = read_jsonl(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].sentences, vec!["a", "b"]);
    }

    #[test]
    fn shuffle_single_sentence_is_identity() {
        let s = shuffle_story(&story("x", 1), 99);
        assert_eq!(s.gold_perm, Permutation::identity(1));
    }

    #[test]
    fn shuffle_round_trip_and_determinism() {
        let st = story("x", 5);
        let a = shuffle_story(&st, 42);
        assert_eq!(a, shuffle_story(&st, 42));
        assert_eq!(a.unshuffle(), st.sentences);
        for (k, s) in a.sentences.iter().enumerate() {
            assert_eq!(s, &st.sentences[a.gold_perm[k]]);
        }
    }

    #[test]
    fn split_sizes_ten() {
        let stories: Vec<Story> = (0..10).map(|i| story(&i.to_string(), 2)).collect();
        let spec = SplitSpec::standard(7);
        let split = split_corpus(&stories, &spec).unwrap();
        assert_eq!(
            (split.train.len(), split.validation.len(), split.test.len()),
            (8, 1, 1)
        );
        let again = split_corpus(&stories, &spec).unwrap();
        assert_eq!(split.train, again.train);
        assert_eq!(split.validation, again.validation);
        assert_eq!(split.test, again.test);
    }

    #[test]
    fn split_sizes_full_corpus() {
        // 98,162 * 4/5 = 78529.6; validation and test floor to 9816, remainder to train
        assert_eq!(SplitSpec::standard(0).sizes(98_162), (78_530, 9_816, 9_816));
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let r = |a, b| Ratio::new(a, b);
        assert!(SplitSpec::new(r(1, 2), r(1, 4), r(1, 8), 0).is_err());
        assert!(SplitSpec::new(r(1, 1), r(0, 1), r(0, 1), 0).is_err());
        assert!(SplitSpec::new(r(1, 2), r(1, 4), r(1, 4), 0).is_ok());
    }

    #[test]
    fn split_rejects_empty() {
        assert!(split_corpus::<Story>(&[], &SplitSpec::standard(0)).is_err());
    }

    #[test]
    fn fraction_parsing() {
        assert_eq!(parse_fraction("0.8").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_fraction("4/5").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_fraction("10%").unwrap(), Ratio::new(1, 10));
        assert_eq!(parse_fraction(".1").unwrap(), Ratio::new(1, 10));
        assert!(parse_fraction("x").is_err());
        assert!(parse_fraction("-0.1").is_err());
    }

    #[test]
    fn csv_write_then_load() {
        let stories = vec![story("a", 5), story("b", 5)];
        let mut buf = Vec::new();
        write_csv_roc(&stories, &mut buf).unwrap();
        assert_eq!(read_csv_roc(buf.as_slice()).unwrap(), stories);
        assert!(write_csv_roc(&[story("c", 3)], Vec::new()).is_err());
    }
}
