use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Declarative description of a computable group family.
///
/// Text form: `free(2)`, `free-abelian(1)`, `cyclic(5)`, `lamplighter(2)`,
/// `product(free(2), free-abelian(1))`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum GroupSpec {
    Free { rank: u32 },
    FreeAbelian { rank: u32 },
    Cyclic { order: u32 },
    Product(Vec<GroupSpec>),
    /// `Z/lamps wr Z`.
    Lamplighter { lamps: u32 },
}

impl GroupSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            GroupSpec::Free { rank } | GroupSpec::FreeAbelian { rank } if *rank == 0 => {
                Err(Error::InvalidSpec(format!("{self}: rank must be at least 1")))
            }
            GroupSpec::Free { rank } if *rank as usize > FREE_LETTERS.len() => Err(
                Error::InvalidSpec(format!("{self}: at most {} free generators", FREE_LETTERS.len())),
            ),
            GroupSpec::Cyclic { order } if *order < 2 => {
                Err(Error::InvalidSpec(format!("{self}: order must be at least 2")))
            }
            GroupSpec::Lamplighter { lamps } if *lamps < 2 => {
                Err(Error::InvalidSpec(format!("{self}: lamp order must be at least 2")))
            }
            GroupSpec::Product(factors) => {
                if factors.len() < 2 {
                    return Err(Error::InvalidSpec("product needs at least two factors".into()));
                }
                factors.iter().try_for_each(GroupSpec::validate)
            }
            _ => Ok(()),
        }
    }

    /// Whether the family is amenable (no non-abelian free factor).
    pub fn is_amenable(&self) -> bool {
        match self {
            GroupSpec::Free { rank } => *rank == 1,
            GroupSpec::Product(factors) => factors.iter().all(GroupSpec::is_amenable),
            _ => true,
        }
    }

    /// Whether the group is abelian.
    pub fn is_abelian(&self) -> bool {
        match self {
            GroupSpec::Free { rank } => *rank == 1,
            GroupSpec::FreeAbelian { .. } | GroupSpec::Cyclic { .. } => true,
            GroupSpec::Product(factors) => factors.iter().all(GroupSpec::is_abelian),
            GroupSpec::Lamplighter { .. } => false,
        }
    }

    /// Group order, `None` when infinite.
    pub fn order(&self) -> Option<u64> {
        match self {
            GroupSpec::Cyclic { order } => Some(*order as u64),
            GroupSpec::Product(factors) => factors
                .iter()
                .try_fold(1u64, |acc, f| f.order().and_then(|o| acc.checked_mul(o))),
            _ => None,
        }
    }
}

/// Letters used for free generators; `e` is reserved for the identity.
pub(crate) const FREE_LETTERS: &[u8] = b"abcdfghijklmnopqrstuvwxyz";

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupSpec::Free { rank } => write!(f, "free({rank})"),
            GroupSpec::FreeAbelian { rank } => write!(f, "free-abelian({rank})"),
            GroupSpec::Cyclic { order } => write!(f, "cyclic({order})"),
            GroupSpec::Lamplighter { lamps } => write!(f, "lamplighter({lamps})"),
            GroupSpec::Product(factors) => {
                write!(f, "product(")?;
                for (i, factor) in factors.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{factor}")?;
                }
                write!(f, ")")
            }
        }
    }
}

impl FromStr for GroupSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parser = SpecParser { src: s.as_bytes(), pos: 0 };
        let spec = parser.spec()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(Error::Parse(format!("trailing input in group spec {s:?}")));
        }
        spec.validate()?;
        Ok(spec)
    }
}

struct SpecParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl SpecParser<'_> {
    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn expect(&mut self, byte: u8) -> Result<()> {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&byte) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Parse(format!(
                "expected '{}' at offset {} in group spec",
                byte as char, self.pos
            )))
        }
    }

    fn ident(&mut self) -> Result<String> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphabetic() || self.src[self.pos] == b'-')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!("expected family name at offset {start}")));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).to_ascii_lowercase())
    }

    fn number(&mut self) -> Result<u32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("expected integer at offset {start}")))
    }

    fn spec(&mut self) -> Result<GroupSpec> {
        let name = self.ident()?;
        self.expect(b'(')?;
        let spec = match name.as_str() {
            "free" => GroupSpec::Free { rank: self.number()? },
            "free-abelian" | "abelian" => GroupSpec::FreeAbelian { rank: self.number()? },
            "cyclic" => GroupSpec::Cyclic { order: self.number()? },
            "lamplighter" => GroupSpec::Lamplighter { lamps: self.number()? },
            "product" => {
                let mut factors = vec![self.spec()?];
                loop {
                    self.skip_ws();
                    if self.src.get(self.pos) == Some(&b',') {
                        self.pos += 1;
                        factors.push(self.spec()?);
                    } else {
                        break;
                    }
                }
                GroupSpec::Product(factors)
            }
            other => return Err(Error::Parse(format!("unknown group family {other:?}"))),
        };
        self.expect(b')')?;
        Ok(spec)
    }
}
