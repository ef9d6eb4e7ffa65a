// SPDX-License-Identifier: Apache-2.0

//! Encoding diagrams, instruction specifications and the corpus container
//! format.
//!
//! A corpus is UTF-8 text holding one record per encoding:
//!
//! ```text
//! [encoding] id=VLD4-A32 name="VLD4 (multiple)" iset=A32 width=32 tags=LoadStore
//! bits: '111101000'@31:23, D@22, '10'@21:20, Rn@19:16, ...
//! decode: <<<
//!     case type of
//!         when '0000'
//!             inc = 1;
//!     ...
//! >>>
//! execute: <<< address = R[n]; >>>
//! ```
//!
//! Lines starting with `#` outside pseudocode blocks are comments.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asl::{parse_asl_with_env, AslAst, AslError};
use crate::bits::Bits;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Iset {
    A64,
    A32,
    T32,
    T16,
}

impl Iset {
    pub const ALL: [Iset; 4] = [Iset::A64, Iset::A32, Iset::T32, Iset::T16];

    pub fn as_str(self) -> &'static str {
        match self {
            Iset::A64 => "A64",
            Iset::A32 => "A32",
            Iset::T32 => "T32",
            Iset::T16 => "T16",
        }
    }

    /// Register indices that name the frame and stack pointers.
    pub fn sp_fp_indices(self) -> [u64; 2] {
        match self {
            Iset::A64 => [29, 31],
            _ => [11, 13],
        }
    }

    pub fn general_registers(self) -> usize {
        match self {
            Iset::A64 => 32,
            _ => 16,
        }
    }
}

impl fmt::Display for Iset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Iset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Iset::ALL
            .into_iter()
            .find(|i| i.as_str() == s)
            .ok_or_else(|| format!("unknown instruction set `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymbolType {
    RegisterIndex,
    Immediate(u32),
    Condition,
    Other(u32),
}

/// Guesses a symbol's role from its name.
///
/// `R`/`V` followed by a short alphanumeric suffix (Rd, Rt2, Vd) is a
/// register index, `imm` followed by digits an immediate, `cond` a
/// condition; anything else is `Other`.
pub fn infer_symbol_type(name: &str, bit_length: u32) -> SymbolType {
    let mut chars = name.chars();
    let first = chars.next();
    let suffix = chars.as_str();
    let register_like = matches!(first, Some('R' | 'r' | 'V' | 'v'))
        && (1..=3).contains(&suffix.len())
        && suffix.starts_with(|c: char| c.is_ascii_alphabetic())
        && suffix.chars().all(|c| c.is_ascii_alphanumeric());
    if register_like {
        return SymbolType::RegisterIndex;
    }
    if let Some(digits) = name.strip_prefix("imm") {
        if !digits.is_empty() && digits.chars().all(|c| c.is_ascii_digit()) {
            return SymbolType::Immediate(bit_length);
        }
    }
    if name == "cond" {
        return SymbolType::Condition;
    }
    SymbolType::Other(bit_length)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Constant(Bits),
    Symbol(SymbolType),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    pub name: Option<String>,
    pub hi: u32,
    pub lo: u32,
    pub kind: FieldKind,
}

impl Field {
    pub fn constant(bits: Bits, hi: u32, lo: u32) -> Self {
        Self {
            name: None,
            hi,
            lo,
            kind: FieldKind::Constant(bits),
        }
    }

    pub fn symbol(name: &str, hi: u32, lo: u32) -> Self {
        Self {
            name: Some(name.to_string()),
            hi,
            lo,
            kind: FieldKind::Symbol(infer_symbol_type(name, hi - lo + 1)),
        }
    }

    pub fn len(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbol_name(&self) -> Option<&str> {
        match self.kind {
            FieldKind::Symbol(_) => self.name.as_deref(),
            FieldKind::Constant(_) => None,
        }
    }

    pub fn symbol_type(&self) -> Option<SymbolType> {
        match self.kind {
            FieldKind::Symbol(t) => Some(t),
            FieldKind::Constant(_) => None,
        }
    }

    /// This field's bits within the word.
    pub fn word_mask(&self) -> u64 {
        Bits::mask(self.len()) << self.lo
    }

    pub fn extract(&self, word: u64) -> Bits {
        Bits::new((word >> self.lo) & Bits::mask(self.len()), self.len())
            .expect("masked value fits")
    }

    pub fn place(&self, value: u64) -> u64 {
        (value & Bits::mask(self.len())) << self.lo
    }

    /// Display label: the symbol name, or the constant's bit-string.
    pub fn label(&self) -> String {
        match (&self.name, &self.kind) {
            (Some(n), _) => n.clone(),
            (None, FieldKind::Constant(b)) => format!("'{b}'"),
            (None, FieldKind::Symbol(_)) => "?".into(),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())?;
        if self.hi == self.lo {
            write!(f, "@{}", self.hi)
        } else {
            write!(f, "@{}:{}", self.hi, self.lo)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodingDiagram {
    pub encoding_id: String,
    pub instruction_name: String,
    pub iset: Iset,
    pub width: u32,
    /// From bit `width - 1` down to bit 0.
    pub fields: Vec<Field>,
}

impl EncodingDiagram {
    /// Bits fixed by constant fields.
    pub fn fixed_mask(&self) -> u64 {
        self.fields
            .iter()
            .filter(|f| matches!(f.kind, FieldKind::Constant(_)))
            .fold(0, |m, f| m | f.word_mask())
    }

    pub fn fixed_bits(&self) -> u64 {
        self.fields.iter().fold(0, |w, f| match &f.kind {
            FieldKind::Constant(b) => w | f.place(b.value()),
            FieldKind::Symbol(_) => w,
        })
    }

    /// True when `word` fits the width and carries every constant field.
    pub fn matches(&self, word: u64) -> bool {
        word <= Bits::mask(self.width) && word & self.fixed_mask() == self.fixed_bits()
    }

    pub fn symbol_fields(&self) -> impl Iterator<Item = &Field> {
        self.fields.iter().filter(|f| f.symbol_name().is_some())
    }

    pub fn symbol_field(&self, name: &str) -> Option<&Field> {
        self.symbol_fields().find(|f| f.symbol_name() == Some(name))
    }

    /// Symbol name to bit width.
    pub fn symbol_widths(&self) -> BTreeMap<String, u32> {
        self.symbol_fields()
            .map(|f| (f.name.clone().unwrap(), f.len()))
            .collect()
    }

    /// Splits a word into its symbol values. `None` if the constants do not
    /// match.
    pub fn decode_word(&self, word: u64) -> Option<BTreeMap<String, Bits>> {
        if !self.matches(word) {
            return None;
        }
        Some(
            self.symbol_fields()
                .map(|f| (f.name.clone().unwrap(), f.extract(word)))
                .collect(),
        )
    }

    /// Places constants and symbol values into a word. Missing symbols and
    /// out-of-range values are errors.
    pub fn encode(&self, assignment: &BTreeMap<String, u64>) -> Result<u64, String> {
        let mut word = self.fixed_bits();
        for f in self.symbol_fields() {
            let name = f.name.as_deref().unwrap();
            let v = *assignment
                .get(name)
                .ok_or_else(|| format!("no value for symbol `{name}`"))?;
            if v > Bits::mask(f.len()) {
                return Err(format!("value {v} does not fit {}-bit `{name}`", f.len()));
            }
            word |= f.place(v);
        }
        Ok(word)
    }

    fn validate(&self) -> Result<(), SpecError> {
        let err = |field: Option<&Field>, msg: String| SpecError::Validation {
            encoding_id: self.encoding_id.clone(),
            field: field.map(|f| f.to_string()),
            msg,
        };
        let widths_ok = match self.iset {
            Iset::A64 | Iset::A32 => self.width == 32,
            Iset::T32 => self.width == 16 || self.width == 32,
            Iset::T16 => self.width == 16,
        };
        if !widths_ok {
            return Err(err(
                None,
                format!("width {} is not valid for {}", self.width, self.iset),
            ));
        }
        let mut next_hi = self.width as i64 - 1;
        let mut names = BTreeSet::new();
        for f in &self.fields {
            if f.hi < f.lo {
                return Err(err(Some(f), "high bit below low bit".into()));
            }
            let hi = f.hi as i64;
            if hi > next_hi {
                let msg = if hi >= self.width as i64 {
                    format!("bits beyond width {}", self.width)
                } else {
                    format!("overlap at [{}:{}]", hi, next_hi + 1)
                };
                return Err(err(Some(f), msg));
            }
            if hi < next_hi {
                return Err(err(Some(f), format!("gap at [{}:{}]", next_hi, hi + 1)));
            }
            if let FieldKind::Constant(b) = &f.kind {
                if b.width() != f.len() {
                    return Err(err(
                        Some(f),
                        format!(
                            "constant has {} bits but the field spans {}",
                            b.width(),
                            f.len()
                        ),
                    ));
                }
            }
            if let Some(n) = &f.name {
                if !names.insert(n.clone()) {
                    return Err(err(Some(f), format!("duplicate field name `{n}`")));
                }
            }
            next_hi = f.lo as i64 - 1;
        }
        if next_hi >= 0 {
            return Err(err(None, format!("gap at [{}:0]", next_hi)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CategoryTag {
    Branch,
    LoadStore,
    Other,
}

impl FromStr for CategoryTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Branch" => Ok(Self::Branch),
            "LoadStore" => Ok(Self::LoadStore),
            "Other" => Ok(Self::Other),
            _ => Err(format!("unknown category tag `{s}`")),
        }
    }
}

impl fmt::Display for CategoryTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionSpec {
    pub encoding: EncodingDiagram,
    pub decode_ast: AslAst,
    pub execute_ast: AslAst,
    pub category_tags: BTreeSet<CategoryTag>,
    pub decode_text: String,
    pub execute_text: String,
}

impl InstructionSpec {
    pub fn id(&self) -> &str {
        &self.encoding.encoding_id
    }

    pub fn is_branch(&self) -> bool {
        self.category_tags.contains(&CategoryTag::Branch)
    }

    /// Decode followed by execute, with execute's statement ids shifted
    /// past decode's.
    pub fn combined_ast(&self) -> AslAst {
        self.decode_ast.chain(&self.execute_ast)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpecError {
    #[error("corpus syntax error at line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{encoding_id}: {}{msg}", field.as_ref().map(|f| format!("field {f}: ")).unwrap_or_default())]
    Validation {
        encoding_id: String,
        field: Option<String>,
        msg: String,
    },
    #[error("{encoding_id}: {block} pseudocode (line {line} of record): {source}")]
    Asl {
        encoding_id: String,
        block: &'static str,
        line: usize,
        source: AslError,
    },
}

#[derive(Default)]
struct Record {
    line: usize,
    attrs: BTreeMap<String, String>,
    bits: Option<(usize, String)>,
    decode: Option<(usize, String)>,
    execute: Option<(usize, String)>,
}

/// Parses a corpus document into validated instruction specifications.
pub fn parse_spec_file(text: &str) -> Result<Vec<InstructionSpec>, SpecError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut records: Vec<Record> = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let lineno = i + 1;
        let line = lines[i].trim();
        i += 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix("[encoding]") {
            records.push(Record {
                line: lineno,
                attrs: parse_attrs(rest, lineno)?,
                ..Record::default()
            });
            continue;
        }
        let Some(rec) = records.last_mut() else {
            return Err(SpecError::Syntax {
                line: lineno,
                msg: "content before the first [encoding] header".into(),
            });
        };
        let Some((key, value)) = line.split_once(':') else {
            return Err(SpecError::Syntax {
                line: lineno,
                msg: format!("expected `key: value`, found `{line}`"),
            });
        };
        let value = value.trim();
        let slot = match key.trim() {
            "bits" => &mut rec.bits,
            "decode" => &mut rec.decode,
            "execute" => &mut rec.execute,
            other => {
                return Err(SpecError::Syntax {
                    line: lineno,
                    msg: format!("unknown key `{other}`"),
                })
            }
        };
        if slot.is_some() {
            return Err(SpecError::Syntax {
                line: lineno,
                msg: format!("duplicate `{}`", key.trim()),
            });
        }
        if key.trim() == "bits" {
            *slot = Some((lineno, value.to_string()));
            continue;
        }
        let Some(body) = value.strip_prefix("<<<") else {
            return Err(SpecError::Syntax {
                line: lineno,
                msg: "pseudocode must be enclosed in <<< >>>".into(),
            });
        };
        if let Some(inline) = body.trim_end().strip_suffix(">>>") {
            *slot = Some((lineno, inline.trim().to_string()));
            continue;
        }
        if !body.trim().is_empty() {
            return Err(SpecError::Syntax {
                line: lineno,
                msg: "text after `<<<` on an unterminated block".into(),
            });
        }
        let start = i;
        while i < lines.len() && lines[i].trim() != ">>>" {
            i += 1;
        }
        if i == lines.len() {
            return Err(SpecError::Syntax {
                line: lineno,
                msg: "unterminated `<<<` block".into(),
            });
        }
        *slot = Some((start + 1, lines[start..i].join("\n")));
        i += 1;
    }
    let specs: Vec<InstructionSpec> = records
        .into_iter()
        .map(build_record)
        .collect::<Result<_, _>>()?;
    let mut ids = BTreeSet::new();
    for s in &specs {
        if !ids.insert(s.id().to_string()) {
            return Err(SpecError::Validation {
                encoding_id: s.id().to_string(),
                field: None,
                msg: "duplicate encoding id".into(),
            });
        }
    }
    Ok(specs)
}

fn parse_attrs(text: &str, line: usize) -> Result<BTreeMap<String, String>, SpecError> {
    let mut out = BTreeMap::new();
    let mut chars = text.trim().chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            return Ok(out);
        }
        let key: String =
            std::iter::from_fn(|| chars.next_if(|c| *c != '=' && !c.is_whitespace())).collect();
        if chars.next() != Some('=') {
            return Err(SpecError::Syntax {
                line,
                msg: format!("expected `=` after `{key}`"),
            });
        }
        let value = if chars.next_if_eq(&'"').is_some() {
            let v: String = std::iter::from_fn(|| chars.next_if(|c| *c != '"')).collect();
            if chars.next() != Some('"') {
                return Err(SpecError::Syntax {
                    line,
                    msg: "unterminated quoted value".into(),
                });
            }
            v
        } else {
            std::iter::from_fn(|| chars.next_if(|c| !c.is_whitespace())).collect()
        };
        if out.insert(key.clone(), value).is_some() {
            return Err(SpecError::Syntax {
                line,
                msg: format!("duplicate attribute `{key}`"),
            });
        }
    }
}

fn parse_field(text: &str, line: usize) -> Result<Field, SpecError> {
    let syntax = |msg: String| SpecError::Syntax { line, msg };
    let (label, span) = text
        .rsplit_once('@')
        .ok_or_else(|| syntax(format!("field `{text}` lacks `@hi:lo`")))?;
    let parse_bit = |s: &str| {
        s.trim()
            .parse::<u32>()
            .map_err(|_| syntax(format!("bad bit offset `{s}` in `{text}`")))
    };
    let (hi, lo) = match span.split_once(':') {
        Some((h, l)) => (parse_bit(h)?, parse_bit(l)?),
        None => {
            let b = parse_bit(span)?;
            (b, b)
        }
    };
    if hi < lo || hi >= 64 {
        return Err(syntax(format!("bad bit span in `{text}`")));
    }
    let label = label.trim();
    if let Some(lit) = label.strip_prefix('\'') {
        let lit = lit
            .strip_suffix('\'')
            .ok_or_else(|| syntax(format!("unterminated bit-string in `{text}`")))?;
        let bits = lit
            .parse::<Bits>()
            .map_err(|_| syntax(format!("bad bit-string in `{text}`")))?;
        return Ok(Field::constant(bits, hi, lo));
    }
    let ident_ok = label.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_')
        && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !ident_ok {
        return Err(syntax(format!("bad field name in `{text}`")));
    }
    Ok(Field::symbol(label, hi, lo))
}

fn build_record(rec: Record) -> Result<InstructionSpec, SpecError> {
    let line = rec.line;
    let attr = |k: &str| {
        rec.attrs.get(k).ok_or_else(|| SpecError::Syntax {
            line,
            msg: format!("missing attribute `{k}`"),
        })
    };
    let encoding_id = attr("id")?.clone();
    let instruction_name = attr("name")?.clone();
    let iset: Iset = attr("iset")?
        .parse()
        .map_err(|msg| SpecError::Syntax { line, msg })?;
    let width: u32 = attr("width")?.parse().map_err(|_| SpecError::Syntax {
        line,
        msg: "width must be an integer".into(),
    })?;
    let category_tags = match rec.attrs.get("tags") {
        None => BTreeSet::new(),
        Some(t) => t
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|msg| SpecError::Syntax { line, msg }))
            .collect::<Result<_, _>>()?,
    };
    if let Some(k) = rec
        .attrs
        .keys()
        .find(|k| !["id", "name", "iset", "width", "tags"].contains(&k.as_str()))
    {
        return Err(SpecError::Syntax {
            line,
            msg: format!("unknown attribute `{k}`"),
        });
    }
    let (bits_line, bits) = rec.bits.ok_or_else(|| SpecError::Syntax {
        line,
        msg: format!("{encoding_id}: missing `bits:`"),
    })?;
    let fields = bits
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|f| parse_field(f, bits_line))
        .collect::<Result<Vec<_>, _>>()?;
    let encoding = EncodingDiagram {
        encoding_id: encoding_id.clone(),
        instruction_name,
        iset,
        width,
        fields,
    };
    encoding.validate()?;

    let symbols = encoding.symbol_widths();
    let (decode_line, decode_text) = rec.decode.unwrap_or((line, String::new()));
    let (execute_line, execute_text) = rec.execute.unwrap_or((line, String::new()));
    let asl_err = |block, base: usize| {
        let id = encoding_id.clone();
        move |source: AslError| {
            let rel = match &source {
                AslError::Syntax { line, .. }
                | AslError::UnknownIdentifier { line, .. }
                | AslError::Validation { line, .. } => *line,
            };
            SpecError::Asl {
                encoding_id: id,
                block,
                line: base + rel - 1,
                source,
            }
        }
    };
    let (decode_ast, defined) = parse_asl_with_env(&decode_text, &symbols, &BTreeSet::new())
        .map_err(asl_err("decode", decode_line))?;
    let (execute_ast, _) =
        parse_asl_with_env(&execute_text, &symbols, &defined.unwrap_or_default())
            .map_err(asl_err("execute", execute_line))?;
    Ok(InstructionSpec {
        encoding,
        decode_ast,
        execute_ast,
        category_tags,
        decode_text,
        execute_text,
    })
}

/// Renders specifications back into the corpus format.
pub fn serialize_specs(specs: &[InstructionSpec]) -> String {
    let mut out = String::new();
    for s in specs {
        let e = &s.encoding;
        let tags: Vec<String> = s.category_tags.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!(
            "[encoding] id={} name=\"{}\" iset={} width={} tags={}\n",
            e.encoding_id,
            e.instruction_name,
            e.iset,
            e.width,
            tags.join(",")
        ));
        let fields: Vec<String> = e.fields.iter().map(|f| f.to_string()).collect();
        out.push_str(&format!("bits: {}\n", fields.join(", ")));
        for (key, text) in [("decode", &s.decode_text), ("execute", &s.execute_text)] {
            out.push_str(&format!("{key}: <<<\n"));
            if !text.is_empty() {
                out.push_str(text);
                out.push('\n');
            }
            out.push_str(">>>\n");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_types_from_names() {
        assert_eq!(infer_symbol_type("Rn", 4), SymbolType::RegisterIndex);
        assert_eq!(infer_symbol_type("Rt2", 4), SymbolType::RegisterIndex);
        assert_eq!(infer_symbol_type("Vd", 4), SymbolType::RegisterIndex);
        assert_eq!(infer_symbol_type("Rdn", 3), SymbolType::RegisterIndex);
        assert_eq!(infer_symbol_type("imm8", 8), SymbolType::Immediate(8));
        assert_eq!(infer_symbol_type("imm26", 26), SymbolType::Immediate(26));
        assert_eq!(infer_symbol_type("cond", 4), SymbolType::Condition);
        assert_eq!(infer_symbol_type("size", 2), SymbolType::Other(2));
        assert_eq!(infer_symbol_type("D", 1), SymbolType::Other(1));
        assert_eq!(infer_symbol_type("R", 1), SymbolType::Other(1));
        assert_eq!(infer_symbol_type("imm", 4), SymbolType::Other(4));
        assert_eq!(infer_symbol_type("Rsomething", 4), SymbolType::Other(4));
    }

    fn record(bits: &str) -> String {
        format!("[encoding] id=X name=X iset=A32 width=32\nbits: {bits}\n")
    }

    #[test]
    fn gap_is_reported() {
        let err = parse_spec_file(&record("'111101000'@31:23, D@22, Rn@21:8")).unwrap_err();
        match err {
            SpecError::Validation { msg, .. } => assert_eq!(msg, "gap at [7:0]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlap_and_length_mismatch() {
        let err = parse_spec_file(&record("A@31:16, B@16:0")).unwrap_err();
        assert!(matches!(err, SpecError::Validation { ref msg, .. } if msg.starts_with("overlap")));
        let err = parse_spec_file(&record("'101'@31:30, B@29:0")).unwrap_err();
        assert!(
            matches!(err, SpecError::Validation { ref field, .. } if field.as_deref() == Some("'101'@31:30"))
        );
    }

    #[test]
    fn width_must_suit_iset() {
        let text = "[encoding] id=X name=X iset=T16 width=32\nbits: A@31:0\n";
        assert!(matches!(
            parse_spec_file(text),
            Err(SpecError::Validation { .. })
        ));
    }

    #[test]
    fn unknown_symbol_in_pseudocode() {
        let text = format!("{}decode: <<< x = UInt(Rm); >>>\n", record("Rn@31:0"));
        match parse_spec_file(&text).unwrap_err() {
            SpecError::Asl { source, .. } => {
                assert!(
                    matches!(source, AslError::UnknownIdentifier { ref name, .. } if name == "Rm")
                )
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn execute_sees_decode_variables() {
        let text = format!(
            "{}decode: <<<\n    n = UInt(Rn);\n>>>\nexecute: <<<\n    m = n + 1;\n>>>\n",
            record("Rn@31:0")
        );
        let specs = parse_spec_file(&text).unwrap();
        assert_eq!(specs[0].execute_ast.statements.len(), 1);
        assert_eq!(specs[0].combined_ast().ids(), vec![0, 1]);
    }

    #[test]
    fn syntax_errors_carry_lines() {
        assert!(matches!(
            parse_spec_file("bits: A@31:0\n"),
            Err(SpecError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_spec_file(
                "[encoding] id=X name=X iset=A32 width=32\nbits: A@31:0\ndecode: <<<\n  x = 1;\n"
            ),
            Err(SpecError::Syntax { line: 3, .. })
        ));
        assert!(matches!(
            parse_spec_file("[encoding] id=X iset=A32 width=32\nbits: A@31:0\n"),
            Err(SpecError::Syntax { .. })
        ));
    }

    #[test]
    fn encode_and_decode_word() {
        let text = record("'1110'@31:28, Rn@27:24, imm24@23:0");
        let spec = &parse_spec_file(&text).unwrap()[0];
        let enc = &spec.encoding;
        let word = enc
            .encode(&BTreeMap::from([
                ("Rn".into(), 5),
                ("imm24".into(), 0xabcdef),
            ]))
            .unwrap();
        assert_eq!(word, 0xe5ab_cdef);
        assert!(enc.matches(word));
        assert!(!enc.matches(0x05ab_cdef));
        let back = enc.decode_word(word).unwrap();
        assert_eq!(back["Rn"].value(), 5);
        assert_eq!(back["imm24"].value(), 0xabcdef);
        assert!(enc
            .encode(&BTreeMap::from([("Rn".into(), 16), ("imm24".into(), 0)]))
            .is_err());
    }
}
