use std::fmt::Write;

use super::ast::{Expr, MwRotation, Placement, SequenceProgram, Statement};

/// Canonical text form. Reparsing the output yields an equal program.
pub fn print_program(p: &SequenceProgram) -> String {
    let mut out = String::from("trigger\n");
    for s in &p.statements {
        print_statement(&mut out, s);
        out.push('\n');
    }
    out
}

fn print_statement(out: &mut String, s: &Statement) {
    match s {
        Statement::Param { name, value } => {
            let _ = write!(out, "param {name} = {}", expr(value));
        }
        Statement::Wait { duration } => {
            let _ = write!(out, "wait {}", expr(duration));
        }
        Statement::Laser { duration, placement } => {
            let _ = write!(out, "laser for {}", expr(duration));
            print_placement(out, placement);
        }
        Statement::Mw {
            rotation,
            placement,
            phase,
            detune,
        } => {
            out.push_str("mw ");
            match rotation {
                MwRotation::Pi => out.push_str("pi"),
                MwRotation::HalfPi => out.push_str("pi/2"),
                MwRotation::Duration(d) => {
                    let _ = write!(out, "for {}", expr(d));
                }
            }
            print_placement(out, placement);
            if let Some(e) = phase {
                let _ = write!(out, " phase {}", expr(e));
            }
            if let Some(e) = detune {
                let _ = write!(out, " detune {}", expr(e));
            }
        }
    }
}

fn print_placement(out: &mut String, p: &Option<Placement>) {
    if let Some(p) = p {
        let _ = write!(out, " {} {}", p.anchor.keyword(), expr(&p.time));
    }
}

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Add(..) | Expr::Sub(..) => 1,
        Expr::Mul(..) | Expr::Div(..) => 2,
        Expr::Neg(..) => 3,
        _ => 4,
    }
}

fn expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0);
    s
}

fn write_expr(out: &mut String, e: &Expr, min: u8) {
    let p = prec(e);
    if p < min {
        out.push('(');
    }
    match e {
        Expr::Quantity(v, u) => {
            let _ = write!(out, "{v}{}", u.as_str());
        }
        Expr::Number(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Ident(n) => out.push_str(n),
        Expr::Neg(x) => {
            out.push('-');
            write_expr(out, x, 3);
        }
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            write_expr(out, a, 1);
            out.push_str(if matches!(e, Expr::Add(..)) { " + " } else { " - " });
            write_expr(out, b, 2);
        }
        Expr::Mul(a, b) | Expr::Div(a, b) => {
            write_expr(out, a, 2);
            out.push_str(if matches!(e, Expr::Mul(..)) { " * " } else { " / " });
            write_expr(out, b, 3);
        }
    }
    if p < min {
        out.push(')');
    }
}
