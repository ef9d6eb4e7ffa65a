// SPDX-License-Identifier: Apache-2.0

//! Per-field mutation sets, their Cartesian product, and the stream file
//! format.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::asl::eval::EvalError;
use crate::asl::symbolic::{AuxSymbol, CmpOp, Constraint, SymExpr};
use crate::asl::{eval_decode, DecodeTag};
use crate::bits::Bits;
use crate::solver::{Solver, SymbolDomain, Witness};
use crate::spec::{EncodingDiagram, Field, FieldKind, InstructionSpec, Iset, SymbolType};

/// Attempts per random draw before giving up on a distinct value.
pub const MAX_DRAW_ATTEMPTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueOrigin {
    InitRule,
    Solved,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutationSet {
    pub field: Field,
    pub values: Vec<u64>,
    pub origins: Vec<ValueOrigin>,
}

impl MutationSet {
    fn empty(field: &Field) -> Self {
        Self {
            field: field.clone(),
            values: Vec::new(),
            origins: Vec::new(),
        }
    }

    /// Adds `value` unless present or out of range. True if added.
    pub fn insert(&mut self, value: u64, origin: ValueOrigin) -> bool {
        if value > Bits::mask(self.field.len()) || self.values.contains(&value) {
            return false;
        }
        self.values.push(value);
        self.origins.push(origin);
        true
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values rendered as bit-strings of the field's width.
    pub fn bit_strings(&self) -> Vec<String> {
        let w = self.field.len();
        self.values
            .iter()
            .map(|v| Bits::new(*v, w).unwrap().to_string())
            .collect()
    }
}

/// A PRNG stream that depends only on the seed, encoding and field name.
pub fn field_rng(seed: u64, encoding_id: &str, field: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(encoding_id.as_bytes());
    h.update([0]);
    h.update(field.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(key)
}

fn draw_distinct(set: &mut MutationSet, rng: &mut ChaCha8Rng, count: usize, excluded: &[u64]) {
    let max = Bits::mask(set.field.len());
    for _ in 0..count {
        for _ in 0..MAX_DRAW_ATTEMPTS {
            let v = rng.gen_range(0..=max);
            if !excluded.contains(&v) && set.insert(v, ValueOrigin::InitRule) {
                break;
            }
        }
    }
}

/// Initial values for one field by its symbol type:
///
/// * register index: 0, 1, 15 (or the top index for narrower fields) and
///   one random index that is neither SP nor FP;
/// * N-bit immediate: 2^N-1, 0 and N-2 random values;
/// * condition: `1110`;
/// * other 1-bit: 0 and 1; other N-bit: N random values;
/// * constant: its value.
pub fn init_mutation_set(field: &Field, encoding: &EncodingDiagram, rng_seed: u64) -> MutationSet {
    let mut set = MutationSet::empty(field);
    let ty = match field.kind {
        FieldKind::Constant(b) => {
            set.insert(b.value(), ValueOrigin::Constant);
            return set;
        }
        FieldKind::Symbol(t) => t,
    };
    let w = field.len();
    let max = Bits::mask(w);
    let mut rng = field_rng(rng_seed, &encoding.encoding_id, &field.label());
    match ty {
        SymbolType::RegisterIndex => {
            for v in [0, 1, max.min(15)] {
                set.insert(v, ValueOrigin::InitRule);
            }
            draw_distinct(&mut set, &mut rng, 1, &encoding.iset.sp_fp_indices());
        }
        SymbolType::Immediate(n) => {
            set.insert(max, ValueOrigin::InitRule);
            set.insert(0, ValueOrigin::InitRule);
            draw_distinct(&mut set, &mut rng, n.saturating_sub(2) as usize, &[]);
        }
        SymbolType::Condition => {
            set.insert(0b1110 & max, ValueOrigin::InitRule);
        }
        SymbolType::Other(1) => {
            set.insert(0, ValueOrigin::InitRule);
            set.insert(1, ValueOrigin::InitRule);
        }
        SymbolType::Other(n) => draw_distinct(&mut set, &mut rng, n as usize, &[]),
    }
    set
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OverrideError {
    #[error("init overrides line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("init override for {encoding_id}.{field}: {msg}")]
    Invalid {
        encoding_id: String,
        field: String,
        msg: String,
    },
}

/// Replacement initial sets, keyed by encoding id and field name.
///
/// Text form, one field per line: `<encoding_id>.<field>=<bits>,<bits>,...`
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InitOverrides {
    sets: BTreeMap<(String, String), Vec<Bits>>,
}

impl InitOverrides {
    pub fn parse(text: &str) -> Result<Self, OverrideError> {
        let mut sets = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: &str| OverrideError::Syntax {
                line: i + 1,
                msg: msg.into(),
            };
            let (key, values) = line.split_once('=').ok_or_else(|| err("expected `=`"))?;
            let (enc, field) = key
                .trim()
                .rsplit_once('.')
                .ok_or_else(|| err("expected `<encoding_id>.<field>`"))?;
            let values = values
                .split(',')
                .map(|v| v.trim().parse::<Bits>().map_err(|_| err("bad bit-string")))
                .collect::<Result<Vec<_>, _>>()?;
            sets.insert((enc.to_string(), field.to_string()), values);
        }
        Ok(Self { sets })
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    fn get(&self, encoding_id: &str, field: &str) -> Option<&Vec<Bits>> {
        self.sets.get(&(encoding_id.to_string(), field.to_string()))
    }

    /// Checks that each override names a symbol field of a known encoding
    /// and that every value has the field's width.
    pub fn validate(&self, specs: &[InstructionSpec]) -> Result<(), OverrideError> {
        for ((enc, field), values) in &self.sets {
            let invalid = |msg: String| OverrideError::Invalid {
                encoding_id: enc.clone(),
                field: field.clone(),
                msg,
            };
            let spec = specs
                .iter()
                .find(|s| s.id() == enc)
                .ok_or_else(|| invalid("unknown encoding".into()))?;
            let f = spec
                .encoding
                .symbol_field(field)
                .ok_or_else(|| invalid("unknown symbol field".into()))?;
            if let Some(b) = values.iter().find(|b| b.width() != f.len()) {
                return Err(invalid(format!("`{b}` is not {} bits wide", f.len())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MappingError {
    #[error("{encoding_id}: auxiliary symbol `{symbol}` = {value} has no inducing case arm")]
    NoArm {
        encoding_id: String,
        symbol: String,
        value: i128,
    },
}

/// A symbolized constraint with its witnesses for both polarities.
#[derive(Clone, Debug)]
pub struct SolvedConstraint {
    pub constraint: Constraint,
    pub assert: Option<Witness>,
    pub negate: Option<Witness>,
}

impl SolvedConstraint {
    pub fn witnesses(&self) -> impl Iterator<Item = &Witness> {
        self.assert.iter().chain(self.negate.iter())
    }
}

/// Encoding-symbol values that make `aux` take `value`, found by solving
/// the scrutinee against the first arm that assigns it.
fn map_aux(
    aux: &AuxSymbol,
    value: i128,
    encoding_id: &str,
) -> Result<BTreeMap<String, i128>, MappingError> {
    let no_arm = || MappingError::NoArm {
        encoding_id: encoding_id.to_string(),
        symbol: aux.name.clone(),
        value,
    };
    let (pattern, _) = aux
        .arms
        .iter()
        .find(|(_, v)| *v == value)
        .ok_or_else(no_arm)?;
    let goal = SymExpr::cmp(
        CmpOp::Eq,
        aux.scrutinee.clone(),
        SymExpr::Const(pattern.value() as i128),
    );
    let domains: Vec<SymbolDomain> = goal
        .symbols()
        .into_iter()
        .map(|(s, w)| SymbolDomain::new(s, w))
        .collect();
    match Solver::default().solve_formula(&goal, &domains) {
        Ok(Some(a)) => Ok(a),
        _ => Err(no_arm()),
    }
}

/// Initial sets (or their overrides) augmented with every witness value
/// not already present. Auxiliary-symbol values are replaced by the
/// encoding-symbol values of the case arm that induces them.
pub fn build_mutation_sets(
    spec: &InstructionSpec,
    solved: &[SolvedConstraint],
    overrides: &InitOverrides,
    rng_seed: u64,
) -> Result<Vec<MutationSet>, MappingError> {
    let enc = &spec.encoding;
    let mut sets: Vec<MutationSet> = enc
        .fields
        .iter()
        .map(|f| {
            match f
                .symbol_name()
                .and_then(|n| overrides.get(&enc.encoding_id, n))
            {
                Some(values) => {
                    let mut s = MutationSet::empty(f);
                    for b in values {
                        s.insert(b.value(), ValueOrigin::InitRule);
                    }
                    s
                }
                None => init_mutation_set(f, enc, rng_seed),
            }
        })
        .collect();
    for sc in solved {
        let c = &sc.constraint;
        let guard_symbols = c.expr.symbols();
        for w in sc.witnesses() {
            let mut values: Vec<(String, i128)> = Vec::new();
            for (name, v) in &w.assignment {
                match c.aux.iter().find(|a| &a.name == name) {
                    Some(aux) => values.extend(map_aux(aux, *v, &enc.encoding_id)?),
                    None => values.push((name.clone(), *v)),
                }
            }
            for (name, v) in values {
                let Some(set) = sets
                    .iter_mut()
                    .find(|s| s.field.symbol_name() == Some(&name))
                else {
                    continue;
                };
                // Condition fields stay fixed unless the guard itself
                // tests them.
                if set.field.symbol_type() == Some(SymbolType::Condition)
                    && !guard_symbols.contains_key(&name)
                {
                    continue;
                }
                if let Ok(v) = u64::try_from(v) {
                    set.insert(v, ValueOrigin::Solved);
                }
            }
        }
    }
    Ok(sets)
}

/// One concrete test case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstructionStream {
    pub encoding_id: String,
    pub iset: Iset,
    pub width: u32,
    pub word: u64,
    /// Symbol values in field order.
    pub assignment: Vec<(String, u64)>,
    pub decode_tag: DecodeTag,
}

impl InstructionStream {
    pub fn hex(&self) -> String {
        format!("{:0w$x}", self.word, w = (self.width / 4) as usize)
    }

    /// Bytes as laid out in memory: A32/A64 little-endian words, T16
    /// little-endian halfwords, T32 as two little-endian halfwords with the
    /// leading halfword first.
    pub fn bytes(&self) -> Vec<u8> {
        match (self.iset, self.width) {
            (_, 16) => (self.word as u16).to_le_bytes().to_vec(),
            (Iset::T32, _) => {
                let mut out = ((self.word >> 16) as u16).to_le_bytes().to_vec();
                out.extend((self.word as u16).to_le_bytes());
                out
            }
            _ => (self.word as u32).to_le_bytes().to_vec(),
        }
    }

    pub fn symbol_map(&self) -> BTreeMap<String, i128> {
        self.assignment
            .iter()
            .map(|(n, v)| (n.clone(), *v as i128))
            .collect()
    }

    pub fn value(&self, symbol: &str) -> Option<u64> {
        self.assignment
            .iter()
            .find(|(n, _)| n == symbol)
            .map(|(_, v)| *v)
    }
}

impl fmt::Display for InstructionStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let syms: Vec<String> = self
            .assignment
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect();
        write!(
            f,
            "{}\t{}\t{}\t{}\t{}",
            self.encoding_id,
            self.iset,
            self.hex(),
            self.decode_tag,
            syms.join(";")
        )
    }
}

/// Assignment of one Cartesian-product row, in field order.
fn symbol_assignment(
    enc: &EncodingDiagram,
    sets: &[MutationSet],
    idx: &[usize],
) -> Vec<(String, u64)> {
    enc.fields
        .iter()
        .zip(sets)
        .zip(idx)
        .filter_map(|((f, s), i)| f.symbol_name().map(|n| (n.to_string(), s.values[*i])))
        .collect()
}

/// Encodes and tags one stream from a symbol assignment.
pub fn make_stream(
    spec: &InstructionSpec,
    assignment: Vec<(String, u64)>,
) -> Result<InstructionStream, EvalError> {
    let enc = &spec.encoding;
    let map: BTreeMap<String, u64> = assignment.iter().cloned().collect();
    let word = enc.encode(&map).map_err(EvalError::TypeMismatch)?;
    let bits: BTreeMap<String, Bits> = enc
        .symbol_fields()
        .map(|f| {
            let n = f.name.clone().unwrap();
            let b = Bits::new(map[&n], f.len()).unwrap();
            (n, b)
        })
        .collect();
    let decode_tag = eval_decode(&spec.decode_ast, &bits)?.tag();
    Ok(InstructionStream {
        encoding_id: enc.encoding_id.clone(),
        iset: enc.iset,
        width: enc.width,
        word,
        assignment,
        decode_tag,
    })
}

/// Every combination of set values, first field varying slowest.
pub fn cartesian_generate(
    sets: &[MutationSet],
    spec: &InstructionSpec,
) -> Result<Vec<InstructionStream>, EvalError> {
    if sets.iter().any(MutationSet::is_empty) {
        return Ok(Vec::new());
    }
    let total: usize = sets.iter().map(MutationSet::len).product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; sets.len()];
    loop {
        out.push(make_stream(
            spec,
            symbol_assignment(&spec.encoding, sets, &idx),
        )?);
        let mut i = sets.len();
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            idx[i] += 1;
            if idx[i] < sets[i].len() {
                break;
            }
            idx[i] = 0;
        }
    }
}

/// Writes a header carrying the seed, then one line per stream.
pub fn emit_streams<W: Write>(
    streams: &[InstructionStream],
    seed: u64,
    sink: &mut W,
) -> io::Result<usize> {
    writeln!(sink, "# isadiff streams seed={seed}")?;
    for s in streams {
        writeln!(sink, "{s}")?;
    }
    sink.flush()?;
    Ok(streams.len())
}

#[derive(Debug, Error)]
pub enum StreamFileError {
    #[error("stream file line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Streams read back from a stream file, with the header's seed if any.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StreamFile {
    pub seed: Option<u64>,
    pub streams: Vec<InstructionStream>,
}

/// Parses one stream line. An empty tag column is allowed and yields
/// `None` for the tag.
pub fn parse_stream_line(line: &str) -> Result<(InstructionStream, bool), String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 5 {
        return Err(format!(
            "expected 5 tab-separated columns, found {}",
            cols.len()
        ));
    }
    let iset: Iset = cols[1].parse()?;
    let hex = cols[2];
    let width = (hex.len() * 4) as u32;
    if width != 16 && width != 32 {
        return Err(format!("word `{hex}` is neither 16 nor 32 bits"));
    }
    let word = u64::from_str_radix(hex, 16).map_err(|_| format!("bad word `{hex}`"))?;
    let (tag, tagged) = if cols[3].is_empty() {
        (DecodeTag::Ok, false)
    } else {
        (
            DecodeTag::parse(cols[3]).ok_or_else(|| format!("bad decode tag `{}`", cols[3]))?,
            true,
        )
    };
    let assignment = cols[4]
        .split(';')
        .filter(|s| !s.is_empty())
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("bad symbol value `{kv}`"))?;
            let v = v
                .parse::<u64>()
                .map_err(|_| format!("bad symbol value `{kv}`"))?;
            Ok((k.to_string(), v))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok((
        InstructionStream {
            encoding_id: cols[0].to_string(),
            iset,
            width,
            word,
            assignment,
            decode_tag: tag,
        },
        tagged,
    ))
}

/// Reads a stream file. Untagged lines are rejected; see
/// [`parse_stream_line`] for reading them leniently.
pub fn read_streams<R: BufRead>(reader: R) -> Result<StreamFile, StreamFileError> {
    let mut out = StreamFile::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if let Some(header) = line.strip_prefix('#') {
            if let Some(seed) = header
                .split_whitespace()
                .find_map(|t| t.strip_prefix("seed="))
            {
                out.seed = seed.parse().ok();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let syntax = |msg: String| StreamFileError::Syntax { line: i + 1, msg };
        let (stream, tagged) = parse_stream_line(&line).map_err(syntax)?;
        if !tagged {
            return Err(syntax("missing decode tag".into()));
        }
        out.streams.push(stream);
    }
    Ok(out)
}
