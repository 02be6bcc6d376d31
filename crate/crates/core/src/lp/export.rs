//! CPLEX LP text format.

use std::io::{self, Write};

use super::{LpInstance, Sense};

const TERMS_PER_LINE: usize = 6;

fn write_terms<W: Write>(w: &mut W, names: &[String], terms: &[(usize, f64)]) -> io::Result<()> {
    if terms.is_empty() {
        // An empty expression is written as a zero multiple of the first variable.
        return match names.first() {
            Some(n) => write!(w, " 0 {n}"),
            None => write!(w, " 0"),
        };
    }
    for (idx, &(j, v)) in terms.iter().enumerate() {
        if idx > 0 && idx % TERMS_PER_LINE == 0 {
            write!(w, "\n   ")?;
        }
        let sign = if v < 0.0 { '-' } else { '+' };
        if idx == 0 && sign == '+' {
            write!(w, " {} {}", v.abs(), names[j])?;
        } else {
            write!(w, " {sign} {} {}", v.abs(), names[j])?;
        }
    }
    Ok(())
}

/// Writes `inst` so external solvers can cross-check it.
pub fn write_lp_format<W: Write>(inst: &LpInstance, mut w: W) -> io::Result<()> {
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    let obj: Vec<(usize, f64)> = inst
        .objective
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    write_terms(&mut w, &inst.var_names, &obj)?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for c in &inst.constraints {
        write!(w, " {}:", c.name)?;
        write_terms(&mut w, &inst.var_names, &c.coeffs)?;
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        writeln!(w, " {op} {}", c.rhs)?;
    }
    // Every variable is non-negative, which is the format's default bound.
    writeln!(w, "End")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_instance_text() {
        let mut lp = LpInstance::new();
        let x = lp.add_var("x", 2.0);
        let y = lp.add_var("y", 0.0);
        lp.add_constraint("r", vec![(x, 1.0), (y, -3.0)], Sense::Ge, 4.0);
        let mut out = Vec::new();
        write_lp_format(&lp, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "Minimize\n obj: 2 x\nSubject To\n r: 1 x - 3 y >= 4\nEnd\n"
        );
    }

    #[test]
    fn long_rows_wrap() {
        let mut lp = LpInstance::new();
        let vars: Vec<_> = (0..13).map(|i| lp.add_var(&format!("v{i}"), 1.0)).collect();
        lp.add_constraint(
            "big",
            vars.iter().map(|&v| (v, 1.0)).collect(),
            Sense::Le,
            1.0,
        );
        let mut out = Vec::new();
        write_lp_format(&lp, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.lines().all(|l| l.len() < 120));
        assert!(text.contains("v12"));
    }
}
