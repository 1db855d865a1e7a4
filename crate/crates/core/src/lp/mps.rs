//! Fixed-column MPS export for cross-checking with external solvers.
//!
//! Layout: name fields start at columns 5 and 15 and are 8 characters wide,
//! numeric fields are right-aligned in 12 characters starting at column 25.
//! Rows are named `R0000001`-style by index and variables `X0000001`-style.
//! An `OBJSENSE MAX` section marks the maximization.

use std::fmt::Write;

use super::{LinearProgram, Relation};

fn number(v: f64) -> String {
    let plain = format!("{v}");
    if plain.len() <= 12 {
        plain
    } else {
        format!("{v:.5e}")
    }
}

fn row_name(i: usize) -> String {
    format!("R{i:07}")
}

fn col_name(j: usize) -> String {
    format!("X{j:07}")
}

fn entry(out: &mut String, first: &str, second: &str, value: f64) {
    writeln!(out, "    {first:<8}  {second:<8}  {:>12}", number(value)).unwrap();
}

pub fn write_mps(lp: &LinearProgram, name: &str) -> String {
    let mut out = String::new();
    writeln!(out, "NAME          {name}").unwrap();
    out.push_str("OBJSENSE\n    MAX\nROWS\n N  OBJ\n");
    for (i, c) in lp.constraints().iter().enumerate() {
        let kind = match c.relation {
            Relation::Le => 'L',
            Relation::Eq => 'E',
            Relation::Ge => 'G',
        };
        writeln!(out, " {kind}  {}", row_name(i)).unwrap();
    }

    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); lp.num_vars()];
    for (i, c) in lp.constraints().iter().enumerate() {
        for &(j, a) in &c.coeffs {
            columns[j].push((i, a));
        }
    }
    out.push_str("COLUMNS\n");
    for (j, col) in columns.iter().enumerate() {
        let name = col_name(j);
        let c = lp.objective()[j];
        if c != 0.0 || col.is_empty() {
            entry(&mut out, &name, "OBJ", c);
        }
        for &(i, a) in col {
            entry(&mut out, &name, &row_name(i), a);
        }
    }

    out.push_str("RHS\n");
    for (i, c) in lp.constraints().iter().enumerate() {
        if c.rhs != 0.0 {
            entry(&mut out, "RHS", &row_name(i), c.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for (j, &(lo, hi)) in lp.bounds().iter().enumerate() {
        let name = col_name(j);
        let bound = |out: &mut String, kind: &str, v: Option<f64>| match v {
            Some(v) => writeln!(out, " {kind} BND       {name:<8}  {:>12}", number(v)).unwrap(),
            None => writeln!(out, " {kind} BND       {name}").unwrap(),
        };
        match (lo.is_finite(), hi.is_finite()) {
            _ if lo == hi => bound(&mut out, "FX", Some(lo)),
            (false, false) => bound(&mut out, "FR", None),
            (false, true) => {
                bound(&mut out, "MI", None);
                bound(&mut out, "UP", Some(hi));
            }
            (true, finite_upper) => {
                if lo != 0.0 || (finite_upper && hi < 0.0) {
                    bound(&mut out, "LO", Some(lo));
                }
                if finite_upper {
                    bound(&mut out, "UP", Some(hi));
                }
            }
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program_layout() {
        let mut lp = LinearProgram::new(2);
        lp.set_objective(0, 3.0);
        lp.set_objective(1, 2.0);
        lp.set_bounds(1, -1.0, 4.0);
        lp.add_constraint([(0, 1.0), (1, 1.0)], Relation::Le, 4.0);
        lp.add_constraint([(0, 1.0)], Relation::Eq, 0.5);
        let text = write_mps(&lp, "demo");
        let expected = "\
NAME          demo
OBJSENSE
    MAX
ROWS
 N  OBJ
 L  R0000000
 E  R0000001
COLUMNS
    X0000000  OBJ                  3
    X0000000  R0000000             1
    X0000000  R0000001             1
    X0000001  OBJ                  2
    X0000001  R0000000             1
RHS
    RHS       R0000000             4
    RHS       R0000001           0.5
BOUNDS
 LO BND       X0000001            -1
 UP BND       X0000001             4
ENDATA
";
        assert_eq!(text, expected);
    }

    #[test]
    fn long_numbers_fit_field() {
        assert!(number(1.0 / 3.0).len() <= 12);
        assert!(number(-123456.789012345).len() <= 12);
    }
}
