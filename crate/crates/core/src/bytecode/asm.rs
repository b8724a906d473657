//! Line-oriented assembly text for batches.
//!
//! ```text
//! # vvmasm 1
//! .base 1 float64 25
//! .base 2 float64 9
//! ADD v1{base=2,off=0,shape=(3,3),strides=(3,1)}, v2{base=1,off=1,shape=(3,3),strides=(5,1)}, 0.2
//! ADD_REDUCE v3{base=2,off=0,shape=(3),strides=(1)}, v1 axis=1
//! SYNC v4{base=2,off=0,shape=(9),strides=(1)}
//! ```
//!
//! Bases are declared with `.base <id> <dtype> <nelem>`. A view operand is defined
//! once as `v<n>{...}` and referenced afterwards as `v<n>`. Constants are bare
//! literals (`3` is int64, `0.5` float64, `true` bool) or carry an explicit
//! dtype suffix such as `0.5:float32`. NaN constants are written with their
//! bits, `nan(0x7ff8000000000000)`.

use std::collections::HashMap;
use std::fmt::Write;
use std::sync::Arc;

use thiserror::Error;

use super::{Attr, Batch, Instruction, OpKind, Opcode, Operand, UserFuncId};
use crate::model::{ArrayBase, ArrayView, BaseId, Constant, DType};

pub const ASM_HEADER: &str = "# vvmasm 1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct AsmError {
    pub line: usize,
    pub kind: AsmErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown mnemonic `{0}`")]
    UnknownMnemonic(String),
    #[error("{opcode} takes {expected} operands, got {found}")]
    Arity { opcode: Opcode, expected: usize, found: usize },
    #[error("malformed operand `{0}`")]
    MalformedOperand(String),
    #[error("unsupported assembly version `{0}`")]
    Version(String),
}

fn err(line: usize, kind: AsmErrorKind) -> AsmError {
    AsmError { line, kind }
}

/// Splits on `sep` outside of `{}` / `()` nesting.
fn split_top_level(text: &str, sep: impl Fn(char) -> bool) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '{' | '(' => depth += 1,
            '}' | ')' => depth -= 1,
            c if depth == 0 && sep(c) => {
                parts.push(&text[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

fn parse_list<T: std::str::FromStr>(text: &str) -> Option<Vec<T>> {
    let inner = text.strip_prefix('(')?.strip_suffix(')')?;
    inner
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().ok())
        .collect()
}

/// Bits of a `nan(0x...)` literal.
fn nan_bits(lit: &str) -> Option<u64> {
    let hex = lit.strip_prefix("nan(0x")?.strip_suffix(')')?;
    u64::from_str_radix(hex, 16).ok()
}

fn parse_f64(lit: &str) -> Option<f64> {
    match nan_bits(lit) {
        Some(bits) => Some(f64::from_bits(bits)).filter(|v| v.is_nan()),
        None => lit.parse().ok(),
    }
}

fn parse_f32(lit: &str) -> Option<f32> {
    match nan_bits(lit) {
        Some(bits) => Some(f32::from_bits(u32::try_from(bits).ok()?)).filter(|v| v.is_nan()),
        None => lit.parse().ok(),
    }
}

fn parse_constant(text: &str) -> Option<Constant> {
    if let Some((lit, dtype)) = text.rsplit_once(':') {
        let dtype: DType = dtype.trim().parse().ok()?;
        let lit = lit.trim();
        return Some(match dtype {
            DType::Float64 => Constant::Float64(parse_f64(lit)?),
            DType::Float32 => Constant::Float32(parse_f32(lit)?),
            DType::Int64 => Constant::Int64(lit.parse().ok()?),
            DType::Bool => Constant::Bool(lit.parse().ok()?),
        });
    }
    match text {
        "true" => return Some(Constant::Bool(true)),
        "false" => return Some(Constant::Bool(false)),
        _ => {}
    }
    if let Ok(i) = text.parse::<i64>() {
        return Some(Constant::Int64(i));
    }
    parse_f64(text).map(Constant::Float64)
}

fn format_constant(c: &Constant) -> String {
    match c {
        Constant::Float64(v) if v.is_nan() => format!("nan({:#x})", v.to_bits()),
        Constant::Float64(v) => format!("{v:?}"),
        Constant::Float32(v) if v.is_nan() => format!("nan({:#x}):float32", v.to_bits()),
        Constant::Float32(v) => format!("{v:?}:float32"),
        Constant::Int64(v) => v.to_string(),
        Constant::Bool(v) => v.to_string(),
    }
}

struct Parser {
    bases: HashMap<BaseId, Arc<ArrayBase>>,
    views: HashMap<u64, ArrayView>,
}

impl Parser {
    fn view_descriptor(&self, body: &str) -> Option<ArrayView> {
        let mut fields: HashMap<&str, &str> = HashMap::new();
        for part in split_top_level(body, |c| c == ',') {
            let (k, v) = part.split_once('=')?;
            fields.insert(k.trim(), v.trim());
        }
        if fields.len() != 4 {
            return None;
        }
        let base_id = BaseId(fields.get("base")?.parse().ok()?);
        let offset: usize = fields.get("off")?.parse().ok()?;
        let shape: Vec<usize> = parse_list(fields.get("shape")?)?;
        let strides: Vec<isize> = parse_list(fields.get("strides")?)?;
        let base = self.bases.get(&base_id)?.clone();
        ArrayView::new(base, offset, &shape, &strides).ok()
    }

    fn operand(&mut self, text: &str) -> Option<Operand> {
        let text = text.trim();
        if let Some(rest) = text.strip_prefix('v') {
            let (num, body) = match rest.find('{') {
                Some(i) => (&rest[..i], Some(&rest[i..])),
                None => (rest, None),
            };
            if let Ok(id) = num.parse::<u64>() {
                return match body {
                    None => self.views.get(&id).cloned().map(Operand::View),
                    Some(body) => {
                        let inner = body.strip_prefix('{')?.strip_suffix('}')?;
                        let view = self.view_descriptor(inner)?;
                        match self.views.get(&id) {
                            Some(prev) if *prev != view => None,
                            _ => {
                                self.views.insert(id, view.clone());
                                Some(Operand::View(view))
                            }
                        }
                    }
                };
            }
        }
        parse_constant(text).map(Operand::Constant)
    }
}

fn parse_attr(text: &str) -> Option<Attr> {
    let (key, value) = text.split_once('=')?;
    match key.trim() {
        "axis" => value.trim().parse().ok().map(Attr::Axis),
        "seed" => value.trim().parse().ok().map(Attr::Seed),
        "func" => value.trim().parse().ok().map(|f| Attr::Func(UserFuncId(f))),
        _ => None,
    }
}

/// Parses assembly text into a batch. Bases are created from the `.base`
/// declarations with their declared ids.
pub fn parse_asm(text: &str) -> Result<Batch, AsmError> {
    let mut parser = Parser { bases: HashMap::new(), views: HashMap::new() };
    let mut batch = Batch::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(version) = comment.trim().strip_prefix("vvmasm") {
                if version.trim() != "1" {
                    return Err(err(line_no, AsmErrorKind::Version(version.trim().to_string())));
                }
            }
            continue;
        }
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(decl) = line.strip_prefix(".base") {
            let fields: Vec<&str> = decl.split_whitespace().collect();
            let syntax = || err(line_no, AsmErrorKind::Syntax("expected `.base <id> <dtype> <nelem>`".into()));
            let [id, dtype, nelem] = fields.as_slice() else {
                return Err(syntax());
            };
            let id = BaseId(id.parse().map_err(|_| syntax())?);
            let dtype: DType = dtype.parse().map_err(|_| syntax())?;
            let nelem: usize = nelem.parse().map_err(|_| syntax())?;
            if parser.bases.contains_key(&id) {
                return Err(err(line_no, AsmErrorKind::Syntax(format!("base {id} declared twice"))));
            }
            parser.bases.insert(id, ArrayBase::with_id(id, dtype, nelem));
            continue;
        }
        let (mnemonic, rest) = match line.find(char::is_whitespace) {
            Some(i) => (&line[..i], line[i..].trim()),
            None => (line, ""),
        };
        let opcode = Opcode::from_mnemonic(mnemonic)
            .map_err(|_| err(line_no, AsmErrorKind::UnknownMnemonic(mnemonic.to_string())))?;
        let mut items: Vec<&str> =
            if rest.is_empty() { Vec::new() } else { split_top_level(rest, |c| c == ',') };
        let mut attr = None;
        if let Some(last) = items.pop() {
            let mut words = split_top_level(last.trim(), char::is_whitespace).into_iter().filter(|w| !w.is_empty());
            if let Some(first) = words.next() {
                items.push(first);
            }
            for word in words {
                if attr.is_some() {
                    return Err(err(line_no, AsmErrorKind::Syntax("more than one attribute".into())));
                }
                attr = Some(
                    parse_attr(word).ok_or_else(|| err(line_no, AsmErrorKind::Syntax(format!("bad attribute `{word}`"))))?,
                );
            }
        }
        if let Some(expected) = opcode.arity() {
            if items.len() != expected {
                return Err(err(line_no, AsmErrorKind::Arity { opcode, expected, found: items.len() }));
            }
        } else if items.is_empty() {
            return Err(err(line_no, AsmErrorKind::Arity { opcode, expected: 1, found: 0 }));
        }
        let mut operands = Vec::with_capacity(items.len());
        for item in &items {
            let op = parser
                .operand(item)
                .ok_or_else(|| err(line_no, AsmErrorKind::MalformedOperand(item.trim().to_string())))?;
            operands.push(op);
        }
        let instr = if opcode.kind() == OpKind::System {
            Instruction { opcode, out: None, inputs: operands, attr }
        } else {
            let mut it = operands.into_iter();
            let out = match it.next() {
                Some(Operand::View(v)) => v,
                _ => return Err(err(line_no, AsmErrorKind::MalformedOperand(items[0].trim().to_string()))),
            };
            Instruction { opcode, out: Some(out), inputs: it.collect(), attr }
        };
        batch.push(instr);
    }
    Ok(batch)
}

/// Canonical text of a batch; `parse_asm` inverts it.
pub fn emit_asm(batch: &Batch) -> String {
    let mut out = String::new();
    out.push_str(ASM_HEADER);
    out.push('\n');
    for base in batch.bases() {
        let _ = writeln!(out, ".base {} {} {}", base.id(), base.dtype(), base.nelem());
    }
    let mut named: Vec<ArrayView> = Vec::new();
    let mut operand_text = |view: &ArrayView| -> String {
        match named.iter().position(|v| v == view) {
            Some(i) => format!("v{}", i + 1),
            None => {
                named.push(view.clone());
                format!("v{}{}", named.len(), view)
            }
        }
    };
    for instr in batch {
        let mut parts = Vec::with_capacity(instr.operand_count());
        if let Some(v) = &instr.out {
            parts.push(operand_text(v));
        }
        for input in &instr.inputs {
            parts.push(match input {
                Operand::View(v) => operand_text(v),
                Operand::Constant(c) => format_constant(c),
            });
        }
        let _ = write!(out, "{} {}", instr.opcode.mnemonic(), parts.join(", "));
        match instr.attr {
            Some(Attr::Axis(a)) => {
                let _ = write!(out, " axis={a}");
            }
            Some(Attr::Seed(s)) => {
                let _ = write!(out, " seed={s}");
            }
            Some(Attr::Func(f)) => {
                let _ = write!(out, " func={}", f.0);
            }
            None => {}
        }
        out.push('\n');
    }
    out
}
