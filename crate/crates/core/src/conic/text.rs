//! Sparse text dump of a [`ConicProgram`], one constraint block per line.
//!
//! ```text
//! vars <n>
//! obj <i>:<c> <i>:<c> ...
//! eq <const> <i>:<c> ...
//! nonneg <rows> | <row> | <row> ...
//! soc <rows> | <row> | ...
//! psd <order> | <row> | ...
//! ```
//!
//! Each `<row>` is `<const> <i>:<c> ...`. Numbers use Rust's shortest
//! round-trip formatting, so the dump is lossless.

use std::fmt::Write;

use super::{ConeKind, ConicProgram, LinExpr};

fn write_expr(out: &mut String, e: &LinExpr) {
    let _ = write!(out, "{:e}", e.constant);
    for (i, c) in &e.terms {
        let _ = write!(out, " {i}:{c:e}");
    }
}

pub fn to_text(p: &ConicProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "vars {}", p.num_vars);
    out.push_str("obj");
    for (i, c) in p.objective.iter().enumerate().filter(|(_, c)| **c != 0.0) {
        let _ = write!(out, " {i}:{c:e}");
    }
    out.push('\n');
    for e in &p.equalities {
        out.push_str("eq ");
        write_expr(&mut out, e);
        out.push('\n');
    }
    for block in &p.cones {
        let size = match block.kind {
            ConeKind::Psd { order } => order,
            _ => block.rows.len(),
        };
        let _ = write!(out, "{} {}", block.kind.label(), size);
        for row in &block.rows {
            out.push_str(" | ");
            write_expr(&mut out, row);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_has_one_line_per_block() {
        let mut p = ConicProgram::new();
        let t = p.add_var();
        p.set_objective(t, 1.0);
        p.add_soc(vec![LinExpr::var(t), LinExpr::constant(3.0), LinExpr::constant(4.0)]);
        p.add_nonneg(vec![LinExpr::var(t)]);
        let text = to_text(&p);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "vars 1");
        assert_eq!(lines[1], "obj 0:1e0");
        assert!(lines[2].starts_with("soc 3 | 0e0 0:1e0 | 3e0"));
        assert!(lines[3].starts_with("nonneg 1"));
    }
}
