//! Associative retrieval tasks.
//!
//! An ART sequence interleaves `K/2` key/value pairs, then the separator
//! `??`, then a query key: `a1b2c3d4??b → 2`. mART presents the same draw
//! with all keys first and all values after: `abcd1234??b → 2`. Keys are
//! distinct letters; values are digits and may repeat.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

const SYMBOLS: [char; 37] = [
    'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', 'p', 'q', 'r', 's', 't', 'u', 'v', 'w',
    'x', 'y', 'z', '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', '?',
];

pub const SEPARATOR: char = '?';
pub const MAX_K: usize = 52;

/// Letters `a..z` (0–25), digits `0..9` (26–35), `?` (36).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary;

impl Vocabulary {
    pub const SIZE: usize = SYMBOLS.len();

    pub fn len(&self) -> usize {
        Self::SIZE
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> &'static [char] {
        &SYMBOLS
    }

    pub fn index_of(&self, symbol: char) -> Option<usize> {
        match symbol {
            'a'..='z' => Some(symbol as usize - 'a' as usize),
            '0'..='9' => Some(26 + symbol as usize - '0' as usize),
            '?' => Some(36),
            _ => None,
        }
    }

    pub fn symbol(&self, index: usize) -> Option<char> {
        SYMBOLS.get(index).copied()
    }

    pub fn encode_str(&self, s: &str) -> Result<Vec<usize>> {
        s.chars()
            .enumerate()
            .map(|(position, symbol)| self.index_of(symbol).ok_or(Error::UnknownSymbol { symbol, position }))
            .collect()
    }

    pub fn decode_indices(&self, indices: &[usize]) -> Result<String> {
        indices
            .iter()
            .map(|&i| self.symbol(i).ok_or(Error::IndexOutOfRange(i)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Art,
    Mart,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Art => "art",
            TaskKind::Mart => "mart",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "art" => Ok(TaskKind::Art),
            "mart" => Ok(TaskKind::Mart),
            other => Err(Error::Config(format!("unknown task {other:?}, expected art or mart"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Example {
    pub input: String,
    pub target: char,
}

impl Example {
    /// Lay out a fixed draw. `keys` and `values` are paired by position.
    pub fn from_draw(kind: TaskKind, keys: &[char], values: &[char], query: char) -> Result<Self> {
        if keys.len() != values.len() || keys.is_empty() {
            return Err(Error::Config("keys and values must be non-empty and paired".into()));
        }
        let target = keys
            .iter()
            .position(|k| *k == query)
            .map(|p| values[p])
            .ok_or_else(|| Error::Config(format!("query {query:?} is not a key")))?;
        let mut input = String::with_capacity(2 * keys.len() + 3);
        match kind {
            TaskKind::Art => {
                for (k, v) in keys.iter().zip(values) {
                    input.push(*k);
                    input.push(*v);
                }
            }
            TaskKind::Mart => {
                input.extend(keys);
                input.extend(values);
            }
        }
        input.push(SEPARATOR);
        input.push(SEPARATOR);
        input.push(query);
        Ok(Self { input, target })
    }

    pub fn encode(&self, vocab: &Vocabulary) -> Result<(Vec<usize>, usize)> {
        let indices = vocab.encode_str(&self.input)?;
        let target = vocab.index_of(self.target).ok_or(Error::UnknownSymbol {
            symbol: self.target,
            position: indices.len(),
        })?;
        Ok((indices, target))
    }

    pub fn decode(indices: &[usize], target: usize, vocab: &Vocabulary) -> Result<Self> {
        Ok(Self {
            input: vocab.decode_indices(indices)?,
            target: vocab.symbol(target).ok_or(Error::IndexOutOfRange(target))?,
        })
    }
}

pub fn check_k(k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) || k > MAX_K {
        return Err(Error::InvalidK(k));
    }
    Ok(())
}

/// Draw one example: `K/2` distinct keys, `K/2` digit values with
/// replacement, and a query chosen uniformly among the keys.
pub fn generate_example<R: Rng + ?Sized>(kind: TaskKind, k: usize, rng: &mut R) -> Result<Example> {
    check_k(k)?;
    let pairs = k / 2;
    let keys: Vec<char> = index::sample(rng, 26, pairs)
        .into_iter()
        .map(|i| SYMBOLS[i])
        .collect();
    let values: Vec<char> = (0..pairs).map(|_| SYMBOLS[26 + rng.random_range(0..10)]).collect();
    let query = keys[rng.random_range(0..pairs)];
    Example::from_draw(kind, &keys, &values, query)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.txt", self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    pub const FULL: SplitSizes = SplitSizes::new(100_000, 10_000, 20_000);
    pub const DESK: SplitSizes = SplitSizes::new(20_000, 2_000, 2_000);

    pub const fn new(train: usize, validation: usize, test: usize) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Test => self.test,
        }
    }
}

/// Generate one split from its own sub-stream of `seed`.
pub fn generate_split(kind: TaskKind, k: usize, n: usize, seed: u64, split: Split) -> Result<Vec<Example>> {
    check_k(k)?;
    let mut stream = rng::stream(seed, &format!("data/{}", split.as_str()));
    (0..n).map(|_| generate_example(kind, k, &mut stream)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: TaskKind,
    pub k: usize,
    pub seed: u64,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// Header line of a split file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitHeader {
    pub kind: TaskKind,
    pub k: usize,
    pub seed: u64,
    pub split: Split,
}

impl fmt::Display for SplitHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#task={} k={} seed={} split={}", self.kind, self.k, self.seed, self.split.as_str())
    }
}

impl Dataset {
    pub fn build(kind: TaskKind, k: usize, sizes: SplitSizes, seed: u64) -> Result<Self> {
        for split in Split::ALL {
            if sizes.get(split) == 0 {
                return Err(Error::Config(format!("{} split size must be positive", split.as_str())));
            }
        }
        Ok(Self {
            kind,
            k,
            seed,
            train: generate_split(kind, k, sizes.train, seed, Split::Train)?,
            validation: generate_split(kind, k, sizes.validation, seed, Split::Validation)?,
            test: generate_split(kind, k, sizes.test, seed, Split::Test)?,
        })
    }

    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    pub fn sizes(&self) -> SplitSizes {
        SplitSizes::new(self.train.len(), self.validation.len(), self.test.len())
    }

    pub fn header(&self, split: Split) -> SplitHeader {
        SplitHeader {
            kind: self.kind,
            k: self.k,
            seed: self.seed,
            split,
        }
    }

    /// Serialized form of one split, header line included.
    pub fn split_text(&self, split: Split) -> String {
        render_split(&self.header(split), self.split(split))
    }

    /// Write `train.txt`, `validation.txt`, `test.txt` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Split::ALL
            .iter()
            .map(|split| {
                let path = dir.join(split.file_name());
                let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                file.write_all(self.split_text(*split).as_bytes())
                    .map_err(|e| Error::io(&path, e))?;
                Ok(path)
            })
            .collect()
    }

    /// Hex SHA-256 over the serialized train, validation and test splits.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for split in Split::ALL {
            hasher.update(self.split_text(split).as_bytes());
        }
        hex::encode(hasher.finalize())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let (train_header, train) = read_split(&dir.join(Split::Train.file_name()))?;
        let (_, validation) = read_split(&dir.join(Split::Validation.file_name()))?;
        let (_, test) = read_split(&dir.join(Split::Test.file_name()))?;
        Ok(Self {
            kind: train_header.kind,
            k: train_header.k,
            seed: train_header.seed,
            train,
            validation,
            test,
        })
    }
}

pub fn render_split(header: &SplitHeader, examples: &[Example]) -> String {
    let mut out = String::with_capacity(examples.len() * 40 + 64);
    out.push_str(&header.to_string());
    out.push('\n');
    for e in examples {
        out.push_str(&e.input);
        out.push('\t');
        out.push(e.target);
        out.push('\n');
    }
    out
}

pub fn parse_header(line: &str) -> std::result::Result<SplitHeader, String> {
    let rest = line.strip_prefix('#').ok_or("header must start with '#'")?;
    let mut kind = None;
    let mut k = None;
    let mut seed = None;
    let mut split = None;
    for field in rest.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or(format!("malformed header field {field:?}"))?;
        match key {
            "task" => kind = Some(value.parse::<TaskKind>().map_err(|e| e.to_string())?),
            "k" => k = Some(value.parse::<usize>().map_err(|e| format!("k: {e}"))?),
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| format!("seed: {e}"))?),
            "split" => split = Some(value.parse::<Split>().map_err(|e| e.to_string())?),
            other => return Err(format!("unknown header field {other:?}")),
        }
    }
    Ok(SplitHeader {
        kind: kind.ok_or("header missing task")?,
        k: k.ok_or("header missing k")?,
        seed: seed.ok_or("header missing seed")?,
        split: split.ok_or("header missing split")?,
    })
}

/// Parse a split file. Every symbol must be in the vocabulary.
pub fn parse_split(path: &Path, text: &str) -> Result<(SplitHeader, Vec<Example>)> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let vocab = Vocabulary;
    let mut lines = text.lines();
    let header = parse_header(lines.next().ok_or_else(|| err(1, "empty file".into()))?).map_err(|m| err(1, m))?;
    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let (input, target) = line
            .split_once('\t')
            .ok_or_else(|| err(lineno, "expected <input>\\t<target>".into()))?;
        let mut chars = target.chars();
        let target = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => return Err(err(lineno, format!("target {target:?} must be one symbol"))),
        };
        let example = Example {
            input: input.to_string(),
            target,
        };
        example.encode(&vocab).map_err(|e| err(lineno, e.to_string()))?;
        examples.push(example);
    }
    Ok((header, examples))
}

pub fn read_split(path: &Path) -> Result<(SplitHeader, Vec<Example>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_split(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn vocabulary_ordering() {
        let v = Vocabulary;
        assert_eq!(v.len(), 37);
        assert_eq!(v.index_of('a'), Some(0));
        assert_eq!(v.index_of('0'), Some(26));
        assert_eq!(v.index_of('?'), Some(36));
        assert_eq!(v.encode_str("a1??a").unwrap(), vec![0, 27, 36, 36, 0]);
        for (i, s) in v.symbols().iter().enumerate() {
            assert_eq!(v.index_of(*s), Some(i));
        }
    }

    #[test]
    fn unknown_symbol_reports_position() {
        let e = Example {
            input: "a1B2??a".into(),
            target: '1',
        };
        match e.encode(&Vocabulary) {
            Err(Error::UnknownSymbol { symbol, position }) => {
                assert_eq!(symbol, 'B');
                assert_eq!(position, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn worked_examples() {
        let keys = ['a', 'b', 'c', 'd'];
        let values = ['1', '2', '3', '4'];
        let art = Example::from_draw(TaskKind::Art, &keys, &values, 'b').unwrap();
        assert_eq!(art.input, "a1b2c3d4??b");
        assert_eq!(art.target, '2');
        let mart = Example::from_draw(TaskKind::Mart, &keys, &values, 'b').unwrap();
        assert_eq!(mart.input, "abcd1234??b");
        assert_eq!(mart.target, '2');
    }

    #[test]
    fn k_validation() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(generate_example(TaskKind::Art, 7, &mut r), Err(Error::InvalidK(7))));
        assert!(matches!(generate_example(TaskKind::Art, 54, &mut r), Err(Error::InvalidK(54))));
        assert!(matches!(generate_example(TaskKind::Art, 0, &mut r), Err(Error::InvalidK(0))));
        assert_eq!(generate_example(TaskKind::Mart, 52, &mut r).unwrap().input.len(), 55);
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = Dataset::build(TaskKind::Art, 8, SplitSizes::new(100, 10, 10), 7).unwrap();
        assert_eq!(d.sizes(), SplitSizes::new(100, 10, 10));
        let again = Dataset::build(TaskKind::Art, 8, SplitSizes::new(100, 10, 10), 7).unwrap();
        assert_eq!(d, again);
        // regenerating only the test split gives the same examples
        let test_only = generate_split(TaskKind::Art, 8, 10, 7, Split::Test).unwrap();
        assert_eq!(test_only, d.test);
        assert!(Dataset::build(TaskKind::Art, 8, SplitSizes::new(0, 10, 10), 7).is_err());
    }

    #[test]
    fn text_round_trip() {
        let d = Dataset::build(TaskKind::Mart, 16, SplitSizes::new(20, 5, 5), 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        d.write_dir(dir.path()).unwrap();
        let first = fs::read(dir.path().join("test.txt")).unwrap();
        assert!(String::from_utf8_lossy(&first).starts_with("#task=mart k=16 seed=3 split=test\n"));
        let back = Dataset::read_dir(dir.path()).unwrap();
        assert_eq!(back, d);
        d.write_dir(dir.path()).unwrap();
        assert_eq!(first, fs::read(dir.path().join("test.txt")).unwrap());
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "#task=art k=2 seed=1 split=train\na1??a\t1\nA1??A\t1\n";
        let err = parse_split(Path::new("x.txt"), text).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_split(Path::new("x.txt"), "#task=art k=2 seed=1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }
}
