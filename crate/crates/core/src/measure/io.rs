//! Plain-text measure files.
//!
//! ```text
//! # any number of comment lines
//! lost 1/33
//! (0) 1/2
//! (1) 1/4
//! ```

use std::io::{BufRead, Write};

use super::{SparseMeasure, Weight};
use crate::error::{Error, Result};
use crate::group::Group;

pub fn write_measure<W: Weight>(
    out: &mut impl Write,
    group: &Group,
    mu: &SparseMeasure<W>,
    header: &[String],
) -> Result<()> {
    for line in header {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "lost {}", mu.lost_mass().format())?;
    for (x, w) in mu.atoms() {
        writeln!(out, "{} {}", group.format(x), w.format())?;
    }
    Ok(())
}

pub fn read_measure<W: Weight>(input: impl BufRead, group: &Group) -> Result<SparseMeasure<W>> {
    let mut lost = None;
    let mut atoms = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, mass) = line
            .rsplit_once(char::is_whitespace)
            .ok_or_else(|| Error::Parse(format!("line {}: expected `<element> <mass>`", n + 1)))?;
        let mass = W::parse(mass)?;
        if head.trim() == "lost" && lost.is_none() && atoms.is_empty() {
            lost = Some(mass);
        } else {
            atoms.push((group.parse_element(head.trim())?, mass));
        }
    }
    Ok(SparseMeasure::from_atoms(atoms).with_lost(lost.unwrap_or_else(W::zero)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Exact;

    #[test]
    fn round_trip() {
        let g = Group::parse("product(free(2), free-abelian(1))").unwrap();
        let mu = SparseMeasure::from_atoms([
            (g.parse_element("<aB;(3)>").unwrap(), Exact::new(1, 3)),
            (g.identity(), Exact::new(1, 2)),
        ])
        .with_lost(Exact::new(1, 6));
        let mut buf = Vec::new();
        write_measure(&mut buf, &g, &mu, &["seed 7".into()]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# seed 7\nlost 1/6\n"));
        let back: SparseMeasure<Exact> = read_measure(&buf[..], &g).unwrap();
        assert_eq!(back, mu);
        assert!(read_measure::<Exact>(&b"zzz"[..], &g).is_err());
    }
}
