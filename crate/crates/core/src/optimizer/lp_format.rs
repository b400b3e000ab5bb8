use std::io::{self, Write};

use super::{MilpInstance, Sense, VarRole};

const TERMS_PER_LINE: usize = 6;

fn write_terms<W: Write>(w: &mut W, inst: &MilpInstance, terms: &[(usize, f64)]) -> io::Result<()> {
    if terms.is_empty() {
        return write!(w, " 0");
    }
    for (k, &(j, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            write!(w, "\n   ")?;
        }
        let sign = if c < 0.0 { '-' } else { '+' };
        if k == 0 && c >= 0.0 {
            write!(w, " {} {}", c, inst.vars[j].name)?;
        } else {
            write!(w, " {} {} {}", sign, c.abs(), inst.vars[j].name)?;
        }
    }
    Ok(())
}

/// Writes the model in CPLEX LP format.
pub fn write_lp<W: Write>(inst: &MilpInstance, mut w: W) -> io::Result<()> {
    writeln!(
        w,
        "\\ routing model: {} demands, {} variables, {} rows",
        inst.demands.len(),
        inst.vars.len(),
        inst.rows.len()
    )?;
    writeln!(w, "Minimize")?;
    let obj: Vec<(usize, f64)> =
        inst.vars.iter().enumerate().filter(|(_, v)| v.cost != 0.0).map(|(j, v)| (j, v.cost)).collect();
    write!(w, " obj:")?;
    write_terms(&mut w, inst, &obj)?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for r in &inst.rows {
        write!(w, " {}:", r.name)?;
        write_terms(&mut w, inst, &r.coeffs)?;
        let op = match r.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        writeln!(w, " {op} {}", r.rhs)?;
    }
    writeln!(w, "Bounds")?;
    for v in &inst.vars {
        writeln!(w, " {} <= {} <= {}", v.lower, v.name, v.upper)?;
    }
    writeln!(w, "Binaries")?;
    for v in &inst.vars {
        if matches!(v.role, VarRole::Select { .. } | VarRole::Activate { .. }) {
            writeln!(w, " {}", v.name)?;
        }
    }
    writeln!(w, "End")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{build_milp, ModelParams};
    use crate::topology::{build_cell, CellParams, DEFAULT_HOP_LIMIT};
    use crate::traffic::{generate, TrafficParams};

    #[test]
    fn dump_lists_every_row_and_variable() {
        let t = build_cell(&CellParams::default()).unwrap();
        let m = generate(&t, &TrafficParams { count: 4, ..Default::default() }, 3).unwrap();
        let i = build_milp(&t, &m, &ModelParams::default(), DEFAULT_HOP_LIMIT).unwrap();
        let mut buf = Vec::new();
        write_lp(&i, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("\\ routing model"));
        assert!(text.trim_end().ends_with("End"));
        for r in &i.rows {
            assert!(text.contains(&format!(" {}:", r.name)), "missing row {}", r.name);
        }
        let binaries = text.split("Binaries\n").nth(1).unwrap();
        assert_eq!(binaries.lines().count(), i.vars.len() + 1);
    }
}
