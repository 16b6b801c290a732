use std::fmt::Write;

use super::{LinearProgram, Relation};

/// Render a program in CPLEX LP text format for cross-checking with
/// third-party solvers. Names are sanitised to `[A-Za-z0-9_]`.
pub fn write_lp(lp: &LinearProgram) -> String {
    let names: Vec<String> = lp
        .variables()
        .iter()
        .enumerate()
        .map(|(i, v)| sanitize(&v.name, 'x', i))
        .collect();
    let mut out = String::new();
    out.push_str("\\ objective offset ");
    let _ = writeln!(out, "{}", lp.objective_offset());
    out.push_str("Minimize\n obj:");
    let terms: Vec<(usize, f64)> = lp
        .objective()
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, c)| *c != 0.0)
        .collect();
    write_terms(&mut out, terms.into_iter(), &names);
    out.push_str("\nSubject To\n");
    for (r, c) in lp.constraints().iter().enumerate() {
        let _ = write!(out, " {}:", sanitize(&c.name, 'c', r));
        write_terms(
            &mut out,
            c.coeffs.iter().map(|&(v, a)| (v.index(), a)),
            &names,
        );
        let op = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in lp.variables().iter().zip(&names) {
        if v.binary {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", v.lower, v.upper);
            }
            (true, false) => {
                let _ = writeln!(out, " {name} >= {}", v.lower);
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", v.upper);
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    let binaries: Vec<&String> = lp
        .variables()
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.binary)
        .map(|(_, n)| n)
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for name in binaries {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    out
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (usize, f64)>, names: &[String]) {
    let mut any = false;
    for (v, a) in terms {
        let sign = if a < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", a.abs(), names[v]);
        any = true;
    }
    if !any {
        out.push_str(" 0");
    }
}

fn sanitize(name: &str, prefix: char, index: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit()) {
        format!("{prefix}{index}_{cleaned}")
    } else {
        // Names are not required to be unique; suffix the index to make them so.
        format!("{cleaned}_{index}")
    }
}
