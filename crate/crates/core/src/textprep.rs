//! Word-level vocabulary, tokenization, multi-field merging with special
//! tokens and segment ids, and tabular-to-string rendering.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{Cell, DataTable, FeatureSchema, Modality};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;
pub const SEP: u32 = 3;
pub const N_RESERVED: usize = 4;

const RESERVED_NAMES: [&str; N_RESERVED] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

/// Default merged sequence length cap.
pub const DEFAULT_MAX_LENGTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    token_to_id: BTreeMap<String, u32>,
    max_size: usize,
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.token_to_id.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.token_to_id)?)
    }

    pub fn from_json(json: &str) -> Result<Vocab> {
        let token_to_id: BTreeMap<String, u32> = serde_json::from_str(json)?;
        for (i, name) in RESERVED_NAMES.iter().enumerate() {
            if token_to_id.get(*name) != Some(&(i as u32)) {
                return Err(Error::InvalidArgument(format!("vocab lacks reserved token {name}")));
            }
        }
        let max_size = token_to_id.len() - N_RESERVED;
        Ok(Vocab { token_to_id, max_size })
    }
}

/// Splits text into lowercased runs of letters/digits and single
/// punctuation marks.
pub fn split_tokens(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else {
            if !current.is_empty() {
                tokens.push(std::mem::take(&mut current));
            }
            if !ch.is_whitespace() {
                tokens.push(ch.to_lowercase().collect());
            }
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Keeps the `max_size` most frequent tokens of `corpus`; ties go to the
/// lexicographically smaller token.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], max_size: usize) -> Vocab {
    let mut freq: HashMap<String, usize> = HashMap::new();
    for doc in corpus {
        for tok in split_tokens(doc.as_ref()) {
            *freq.entry(tok).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = freq.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_size);
    ranked.sort_by(|a, b| a.0.cmp(&b.0));

    let mut token_to_id = BTreeMap::new();
    for (i, name) in RESERVED_NAMES.iter().enumerate() {
        token_to_id.insert(name.to_string(), i as u32);
    }
    for (i, (tok, _)) in ranked.into_iter().enumerate() {
        token_to_id.insert(tok, (N_RESERVED + i) as u32);
    }
    Vocab { token_to_id, max_size }
}

pub fn tokenize(text: &str, vocab: &Vocab) -> Vec<u32> {
    split_tokens(text).iter().map(|t| vocab.id(t)).collect()
}

/// Several token-id lists merged into one `CLS f1 SEP f2 SEP ... fk SEP`
/// sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedInput {
    pub token_ids: Vec<u32>,
    /// Field `i` (and the SEP closing it) carries segment id `i mod 2`.
    pub segment_ids: Vec<u8>,
    /// Half-open token spans of each field's surviving tokens.
    pub field_spans: Vec<(usize, usize)>,
}

impl MergedInput {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn positions(&self) -> std::ops::Range<usize> {
        0..self.token_ids.len()
    }
}

/// Final per-field lengths after greedily removing one trailing token from
/// the currently longest field (lowest index among ties) until the fields
/// fit into `budget` tokens.
pub fn truncated_lengths(lengths: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = lengths.iter().sum();
    if total <= budget {
        return lengths.to_vec();
    }
    let clipped = |level: usize| lengths.iter().map(|&l| l.min(level)).sum::<usize>();
    // largest level whose clipped total fits
    let (mut lo, mut hi) = (0usize, lengths.iter().copied().max().unwrap_or(0));
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if clipped(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let level = lo;
    let spare = budget - clipped(level);
    // fields above `level` sit at level+1 just before the last sweep; the
    // greedy loop lowers them in index order, leaving `spare` of them at level+1
    let above: Vec<usize> = (0..lengths.len()).filter(|&i| lengths[i] > level).collect();
    let lowered = above.len() - spare;
    let mut out: Vec<usize> = lengths.iter().map(|&l| l.min(level)).collect();
    for &i in above.iter().skip(lowered) {
        out[i] = level + 1;
    }
    out
}

pub fn merge_fields(fields: &[Vec<u32>], max_length: usize) -> Result<MergedInput> {
    let overhead = 1 + fields.len();
    if overhead > max_length {
        return Err(Error::InvalidArgument(format!(
            "{} fields need {overhead} special tokens, more than max length {max_length}",
            fields.len()
        )));
    }
    let lengths: Vec<usize> = fields.iter().map(Vec::len).collect();
    let kept = truncated_lengths(&lengths, max_length - overhead);
    let total = overhead + kept.iter().sum::<usize>();

    let mut token_ids = Vec::with_capacity(total);
    let mut segment_ids = Vec::with_capacity(total);
    let mut field_spans = Vec::with_capacity(fields.len());
    token_ids.push(CLS);
    segment_ids.push(0);
    for (i, (field, &keep)) in fields.iter().zip(&kept).enumerate() {
        let seg = (i % 2) as u8;
        let start = token_ids.len();
        token_ids.extend_from_slice(&field[..keep]);
        field_spans.push((start, token_ids.len()));
        token_ids.push(SEP);
        segment_ids.resize(token_ids.len(), seg);
    }
    Ok(MergedInput {
        token_ids,
        segment_ids,
        field_spans,
    })
}

/// Renders `v` with three significant digits (round half to even). Values
/// whose rounded magnitude lies in [1e-3, 1e6) use fixed notation, others
/// scientific.
pub fn format_sig3(v: f64) -> String {
    if v == 0.0 {
        return "0.00".to_string();
    }
    let sci = format!("{:.2e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if !(-3..6).contains(&exp) {
        return format!("{mantissa}e{exp}");
    }
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let body = if exp >= 2 {
        let mut s = digits.clone();
        s.extend(std::iter::repeat_n('0', (exp - 2) as usize));
        s
    } else if exp >= 0 {
        let split = (exp + 1) as usize;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        let zeros = "0".repeat((-exp - 1) as usize);
        format!("0.{zeros}{digits}")
    };
    if negative {
        format!("-{body}")
    } else {
        body
    }
}

/// Renders one table row as text fields: text passes through, categorical
/// cells keep their raw string, numbers get three significant digits and
/// missing cells become empty strings. Output follows schema column order.
pub fn stringify_row(table: &DataTable, row: usize, schema: &FeatureSchema) -> Result<Vec<String>> {
    schema
        .columns
        .iter()
        .map(|(name, modality)| {
            let cell = table
                .cell(row, name)
                .ok_or_else(|| Error::ColumnNotFound(name.clone()))?;
            Ok(render_cell(cell, *modality))
        })
        .collect()
}

pub fn render_cell(cell: &Cell, modality: Modality) -> String {
    match (cell, modality) {
        (Cell::Missing, _) => String::new(),
        (Cell::Numeric(v), _) => format_sig3(*v),
        (c, Modality::Numeric) => c.as_f64().map(format_sig3).unwrap_or_default(),
        (c, _) => c.as_string().unwrap_or_default(),
    }
}
