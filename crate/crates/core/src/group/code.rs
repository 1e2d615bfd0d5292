//! Flat integer encodings of canonical forms and the group laws on them.
//!
//! Layout per family:
//! - free: the reduced word, letter `+j` for generator `j`, `-j` for its inverse;
//! - free-abelian: the exponent vector;
//! - cyclic: a single residue in `0..order`;
//! - lamplighter: `[position, lamp_0, value_0, lamp_1, value_1, ...]` with lamp
//!   positions strictly increasing and values in `1..lamps`;
//! - product: each factor code prefixed by its length.

use smallvec::SmallVec;

use super::spec::{GroupSpec, FREE_LETTERS};
use crate::error::{Error, Result};

pub(crate) type Code = SmallVec<[i32; 14]>;

fn checked(a: i32, b: i32) -> i32 {
    a.checked_add(b).expect("coordinate overflow in group arithmetic")
}

/// Iterates the factor slices of a product code.
pub(crate) fn factors(code: &[i32]) -> impl Iterator<Item = &[i32]> {
    let mut pos = 0;
    std::iter::from_fn(move || {
        if pos >= code.len() {
            return None;
        }
        let len = code[pos] as usize;
        let slice = &code[pos + 1..pos + 1 + len];
        pos += 1 + len;
        Some(slice)
    })
}

pub(crate) fn push_identity(spec: &GroupSpec, out: &mut Code) {
    match spec {
        GroupSpec::Free { .. } => {}
        GroupSpec::FreeAbelian { rank } => out.extend(std::iter::repeat_n(0, *rank as usize)),
        GroupSpec::Cyclic { .. } | GroupSpec::Lamplighter { .. } => out.push(0),
        GroupSpec::Product(fs) => {
            for f in fs {
                let slot = out.len();
                out.push(0);
                push_identity(f, out);
                out[slot] = (out.len() - slot - 1) as i32;
            }
        }
    }
}

pub(crate) fn mul_into(spec: &GroupSpec, x: &[i32], y: &[i32], out: &mut Code) {
    match spec {
        GroupSpec::Free { .. } => {
            // length of the cancelling overlap between the tail of x and the head of y
            let mut k = 0;
            while k < x.len() && k < y.len() && x[x.len() - 1 - k] == -y[k] {
                k += 1;
            }
            out.extend_from_slice(&x[..x.len() - k]);
            out.extend_from_slice(&y[k..]);
        }
        GroupSpec::FreeAbelian { .. } => {
            out.extend(x.iter().zip(y).map(|(a, b)| checked(*a, *b)));
        }
        GroupSpec::Cyclic { order } => {
            let n = *order as i64;
            out.push(((x[0] as i64 + y[0] as i64) % n) as i32);
        }
        GroupSpec::Lamplighter { lamps } => {
            let m = *lamps as i32;
            let shift = x[0];
            out.push(checked(x[0], y[0]));
            let (mut i, mut j) = (1, 1);
            while i < x.len() || j < y.len() {
                let xi = if i < x.len() { Some(x[i]) } else { None };
                let yj = if j < y.len() { Some(checked(y[j], shift)) } else { None };
                match (xi, yj) {
                    (Some(a), Some(b)) if a == b => {
                        let v = (x[i + 1] + y[j + 1]) % m;
                        if v != 0 {
                            out.push(a);
                            out.push(v);
                        }
                        i += 2;
                        j += 2;
                    }
                    (Some(a), Some(b)) if a < b => {
                        out.extend_from_slice(&x[i..i + 2]);
                        i += 2;
                    }
                    (Some(_), None) => {
                        out.extend_from_slice(&x[i..i + 2]);
                        i += 2;
                    }
                    (_, Some(b)) => {
                        out.push(b);
                        out.push(y[j + 1]);
                        j += 2;
                    }
                    (None, None) => unreachable!(),
                }
            }
        }
        GroupSpec::Product(fs) => {
            for ((f, xf), yf) in fs.iter().zip(factors(x)).zip(factors(y)) {
                let slot = out.len();
                out.push(0);
                mul_into(f, xf, yf, out);
                out[slot] = (out.len() - slot - 1) as i32;
            }
        }
    }
}

pub(crate) fn inv_into(spec: &GroupSpec, x: &[i32], out: &mut Code) {
    match spec {
        GroupSpec::Free { .. } => out.extend(x.iter().rev().map(|l| -l)),
        GroupSpec::FreeAbelian { .. } => out.extend(x.iter().map(|a| -a)),
        GroupSpec::Cyclic { order } => out.push((*order as i32 - x[0]) % *order as i32),
        GroupSpec::Lamplighter { lamps } => {
            let m = *lamps as i32;
            let p = x[0];
            out.push(-p);
            for pair in x[1..].chunks_exact(2) {
                out.push(checked(pair[0], -p));
                out.push((m - pair[1]) % m);
            }
        }
        GroupSpec::Product(fs) => {
            for (f, xf) in fs.iter().zip(factors(x)) {
                let slot = out.len();
                out.push(0);
                inv_into(f, xf, out);
                out[slot] = (out.len() - slot - 1) as i32;
            }
        }
    }
}

/// Word length with respect to the declared generators.
pub(crate) fn word_len(spec: &GroupSpec, x: &[i32]) -> u64 {
    match spec {
        GroupSpec::Free { .. } => x.len() as u64,
        GroupSpec::FreeAbelian { .. } => x.iter().map(|a| a.unsigned_abs() as u64).sum(),
        GroupSpec::Cyclic { order } => {
            let v = x[0] as u64;
            v.min(*order as u64 - v)
        }
        GroupSpec::Lamplighter { lamps } => {
            let m = *lamps as u64;
            let p = x[0] as i64;
            let mut toggles = 0u64;
            let (mut lo, mut hi) = (0i64, 0i64);
            for pair in x[1..].chunks_exact(2) {
                let v = pair[1] as u64;
                toggles += v.min(m - v);
                lo = lo.min(pair[0] as i64);
                hi = hi.max(pair[0] as i64);
            }
            // walk 0 -> lo -> hi -> p or 0 -> hi -> lo -> p
            let span = (hi - lo) as u64;
            let left_first = (-lo) as u64 + span + (hi - p).unsigned_abs();
            let right_first = hi as u64 + span + (p - lo).unsigned_abs();
            toggles + left_first.min(right_first)
        }
        GroupSpec::Product(fs) => fs.iter().zip(factors(x)).map(|(f, xf)| word_len(f, xf)).sum(),
    }
}

/// Checks that `x` is a well-formed canonical form for `spec`.
pub(crate) fn is_valid(spec: &GroupSpec, x: &[i32]) -> bool {
    match spec {
        GroupSpec::Free { rank } => {
            let r = *rank as i32;
            x.iter().all(|&l| l != 0 && l.abs() <= r) && x.windows(2).all(|w| w[0] != -w[1])
        }
        GroupSpec::FreeAbelian { rank } => x.len() == *rank as usize,
        GroupSpec::Cyclic { order } => x.len() == 1 && x[0] >= 0 && (x[0] as u32) < *order,
        GroupSpec::Lamplighter { lamps } => {
            if x.is_empty() || x.len().is_multiple_of(2) {
                return false;
            }
            let pairs: Vec<_> = x[1..].chunks_exact(2).collect();
            pairs.iter().all(|p| p[1] >= 1 && (p[1] as u32) < *lamps)
                && pairs.windows(2).all(|w| w[0][0] < w[1][0])
        }
        GroupSpec::Product(fs) => {
            let mut pos = 0;
            for f in fs {
                let Some(&len) = x.get(pos) else { return false };
                if len < 0 || pos + 1 + len as usize > x.len() {
                    return false;
                }
                if !is_valid(f, &x[pos + 1..pos + 1 + len as usize]) {
                    return false;
                }
                pos += 1 + len as usize;
            }
            pos == x.len()
        }
    }
}

/// Codes of the declared symmetric generating set, in declaration order.
pub(crate) fn generators(spec: &GroupSpec) -> Vec<Code> {
    match spec {
        GroupSpec::Free { rank } => (1..=*rank as i32)
            .flat_map(|j| [Code::from_slice(&[j]), Code::from_slice(&[-j])])
            .collect(),
        GroupSpec::FreeAbelian { rank } => {
            let d = *rank as usize;
            let mut gens = Vec::with_capacity(2 * d);
            for j in 0..d {
                for sign in [1, -1] {
                    let mut c = Code::from_elem(0, d);
                    c[j] = sign;
                    gens.push(c);
                }
            }
            gens
        }
        GroupSpec::Cyclic { order } => {
            let mut gens = vec![Code::from_slice(&[1])];
            if *order > 2 {
                gens.push(Code::from_slice(&[*order as i32 - 1]));
            }
            gens
        }
        GroupSpec::Lamplighter { lamps } => {
            let mut gens = vec![Code::from_slice(&[0, 0, 1])];
            if *lamps > 2 {
                gens.push(Code::from_slice(&[0, 0, *lamps as i32 - 1]));
            }
            gens.push(Code::from_slice(&[1]));
            gens.push(Code::from_slice(&[-1]));
            gens
        }
        GroupSpec::Product(fs) => {
            let mut gens = Vec::new();
            for (i, f) in fs.iter().enumerate() {
                for g in generators(f) {
                    let mut c = Code::new();
                    for (j, h) in fs.iter().enumerate() {
                        let slot = c.len();
                        c.push(0);
                        if i == j {
                            c.extend_from_slice(&g);
                        } else {
                            push_identity(h, &mut c);
                        }
                        c[slot] = (c.len() - slot - 1) as i32;
                    }
                    gens.push(c);
                }
            }
            gens
        }
    }
}

pub(crate) fn format_into(spec: &GroupSpec, x: &[i32], out: &mut String) {
    use std::fmt::Write;
    match spec {
        GroupSpec::Free { .. } => {
            if x.is_empty() {
                out.push('e');
            }
            for &l in x {
                let c = FREE_LETTERS[l.unsigned_abs() as usize - 1] as char;
                out.push(if l > 0 { c } else { c.to_ascii_uppercase() });
            }
        }
        GroupSpec::FreeAbelian { .. } => {
            out.push('(');
            for (i, a) in x.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{a}");
            }
            out.push(')');
        }
        GroupSpec::Cyclic { .. } => {
            let _ = write!(out, "{}", x[0]);
        }
        GroupSpec::Lamplighter { .. } => {
            out.push('{');
            for (i, pair) in x[1..].chunks_exact(2).enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}:{}", pair[0], pair[1]);
            }
            let _ = write!(out, "}}@{}", x[0]);
        }
        GroupSpec::Product(fs) => {
            out.push('<');
            for (i, (f, xf)) in fs.iter().zip(factors(x)).enumerate() {
                if i > 0 {
                    out.push(';');
                }
                format_into(f, xf, out);
            }
            out.push('>');
        }
    }
}

/// Recursive-descent reader for element text, guided by the spec.
pub(crate) struct ElementParser<'a> {
    src: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> ElementParser<'a> {
    pub(crate) fn new(src: &'a str) -> Self {
        ElementParser { src: src.as_bytes(), pos: 0 }
    }

    pub(crate) fn at_end(&self) -> bool {
        self.pos == self.src.len()
    }

    fn err(&self, what: &str) -> Error {
        Error::Parse(format!(
            "{what} at offset {} in element {:?}",
            self.pos,
            String::from_utf8_lossy(self.src)
        ))
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, b: u8) -> Result<()> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", b as char)))
        }
    }

    fn int(&mut self) -> Result<i32> {
        let start = self.pos;
        if matches!(self.peek(), Some(b'-') | Some(b'+')) {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err("expected integer"))
    }

    pub(crate) fn parse(&mut self, spec: &GroupSpec, out: &mut Code) -> Result<()> {
        match spec {
            GroupSpec::Free { rank } => {
                if self.peek() == Some(b'e') {
                    self.pos += 1;
                    return Ok(());
                }
                let start = out.len();
                while let Some(c) = self.peek() {
                    let Some(idx) = FREE_LETTERS.iter().position(|&l| l == c.to_ascii_lowercase())
                    else {
                        break;
                    };
                    if idx as u32 >= *rank {
                        return Err(self.err("generator outside the free rank"));
                    }
                    let letter = if c.is_ascii_lowercase() { idx as i32 + 1 } else { -(idx as i32 + 1) };
                    self.pos += 1;
                    if out.len() > start && out[out.len() - 1] == -letter {
                        out.pop();
                    } else {
                        out.push(letter);
                    }
                }
                Ok(())
            }
            GroupSpec::FreeAbelian { rank } => {
                self.expect(b'(')?;
                for i in 0..*rank {
                    if i > 0 {
                        self.expect(b',')?;
                    }
                    out.push(self.int()?);
                }
                self.expect(b')')
            }
            GroupSpec::Cyclic { order } => {
                let v = self.int()?;
                out.push(v.rem_euclid(*order as i32));
                Ok(())
            }
            GroupSpec::Lamplighter { lamps } => {
                self.expect(b'{')?;
                let mut pairs: Vec<(i32, i32)> = Vec::new();
                while self.peek() != Some(b'}') {
                    if !pairs.is_empty() {
                        self.expect(b',')?;
                    }
                    let at = self.int()?;
                    self.expect(b':')?;
                    let v = self.int()?;
                    pairs.push((at, v));
                }
                self.expect(b'}')?;
                self.expect(b'@')?;
                let pos = self.int()?;
                pairs.sort_by_key(|p| p.0);
                let m = *lamps as i32;
                let mut merged: Vec<(i32, i32)> = Vec::new();
                for (at, v) in pairs {
                    match merged.last_mut() {
                        Some(last) if last.0 == at => last.1 = (last.1 + v).rem_euclid(m),
                        _ => merged.push((at, v.rem_euclid(m))),
                    }
                }
                out.push(pos);
                for (at, v) in merged.into_iter().filter(|p| p.1 != 0) {
                    out.push(at);
                    out.push(v);
                }
                Ok(())
            }
            GroupSpec::Product(fs) => {
                self.expect(b'<')?;
                for (i, f) in fs.iter().enumerate() {
                    if i > 0 {
                        self.expect(b';')?;
                    }
                    let slot = out.len();
                    out.push(0);
                    self.parse(f, out)?;
                    out[slot] = (out.len() - slot - 1) as i32;
                }
                self.expect(b'>')
            }
        }
    }
}
