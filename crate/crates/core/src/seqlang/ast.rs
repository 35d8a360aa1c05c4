use std::collections::HashMap;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Ns,
    Us,
    Ms,
    MHz,
    Deg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Time,
    Frequency,
    Angle,
    /// Bare number.
    Scalar,
}

impl Unit {
    pub fn parse(s: &str) -> Option<Unit> {
        Some(match s {
            "ns" => Unit::Ns,
            "us" => Unit::Us,
            "ms" => Unit::Ms,
            "MHz" => Unit::MHz,
            "deg" => Unit::Deg,
            _ => return None,
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Unit::Ns => "ns",
            Unit::Us => "us",
            Unit::Ms => "ms",
            Unit::MHz => "MHz",
            Unit::Deg => "deg",
        }
    }

    pub fn dimension(&self) -> Dimension {
        match self {
            Unit::Ns | Unit::Us | Unit::Ms => Dimension::Time,
            Unit::MHz => Dimension::Frequency,
            Unit::Deg => Dimension::Angle,
        }
    }

    /// Factor to the canonical unit of the dimension (µs, MHz, deg).
    pub fn scale(&self) -> f64 {
        match self {
            Unit::Ns => 1e-3,
            Unit::Us => 1.0,
            Unit::Ms => 1e3,
            Unit::MHz | Unit::Deg => 1.0,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Time => "time",
            Dimension::Frequency => "frequency",
            Dimension::Angle => "angle",
            Dimension::Scalar => "number",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Quantity(f64, Unit),
    Number(f64),
    Ident(String),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
}

/// Value of an expression in canonical units, with its dimension.
pub(crate) type Value = (f64, Dimension);

impl Expr {
    /// Evaluate against a parameter environment. Unknown identifiers yield
    /// `Err(name)`.
    pub(crate) fn eval(&self, env: &HashMap<String, Value>) -> Result<Value, EvalError> {
        use Dimension::Scalar;
        Ok(match self {
            Expr::Quantity(v, u) => (v * u.scale(), u.dimension()),
            Expr::Number(v) => (*v, Scalar),
            Expr::Ident(name) => *env.get(name).ok_or_else(|| EvalError::Unknown(name.clone()))?,
            Expr::Neg(e) => {
                let (v, d) = e.eval(env)?;
                (-v, d)
            }
            Expr::Add(a, b) | Expr::Sub(a, b) => {
                let (x, dx) = a.eval(env)?;
                let (y, dy) = b.eval(env)?;
                if dx != dy {
                    return Err(EvalError::Mismatch(dx, dy));
                }
                let v = if matches!(self, Expr::Add(..)) { x + y } else { x - y };
                (v, dx)
            }
            Expr::Mul(a, b) => {
                let (x, dx) = a.eval(env)?;
                let (y, dy) = b.eval(env)?;
                match (dx, dy) {
                    (d, Scalar) | (Scalar, d) => (x * y, d),
                    _ => return Err(EvalError::Mismatch(dx, dy)),
                }
            }
            Expr::Div(a, b) => {
                let (x, dx) = a.eval(env)?;
                let (y, dy) = b.eval(env)?;
                if dy != Scalar {
                    return Err(EvalError::Mismatch(dx, dy));
                }
                if y == 0.0 {
                    return Err(EvalError::DivZero);
                }
                (x / y, dx)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum EvalError {
    Unknown(String),
    Mismatch(Dimension, Dimension),
    DivZero,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Unknown(n) => write!(f, "undefined identifier '{n}'"),
            EvalError::Mismatch(a, b) => write!(f, "dimension mismatch: {a} vs {b}"),
            EvalError::DivZero => f.write_str("division by zero"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Anchor {
    /// Event starts at the time.
    At,
    /// Event ends at the time.
    Until,
    /// Event is centred on the time.
    Center,
}

impl Anchor {
    pub fn keyword(&self) -> &'static str {
        match self {
            Anchor::At => "at",
            Anchor::Until => "until",
            Anchor::Center => "center",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub anchor: Anchor,
    pub time: Expr,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MwRotation {
    Pi,
    HalfPi,
    Duration(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Param {
        name: String,
        value: Expr,
    },
    Laser {
        duration: Expr,
        placement: Option<Placement>,
    },
    Mw {
        rotation: MwRotation,
        placement: Option<Placement>,
        phase: Option<Expr>,
        detune: Option<Expr>,
    },
    Wait {
        duration: Expr,
    },
}

/// A parsed program. Equality ignores source positions.
#[derive(Debug, Clone)]
pub struct SequenceProgram {
    pub statements: Vec<Statement>,
    /// Source line of each statement.
    pub lines: Vec<usize>,
}

impl PartialEq for SequenceProgram {
    fn eq(&self, other: &Self) -> bool {
        self.statements == other.statements
    }
}

impl SequenceProgram {
    pub fn params(&self) -> impl Iterator<Item = (&str, &Expr)> {
        self.statements.iter().filter_map(|s| match s {
            Statement::Param { name, value } => Some((name.as_str(), value)),
            _ => None,
        })
    }

    /// Number of laser and microwave statements.
    pub fn event_count(&self) -> usize {
        self.statements
            .iter()
            .filter(|s| matches!(s, Statement::Laser { .. } | Statement::Mw { .. }))
            .count()
    }
}
