use crate::expr::{BinOp, UnOp};

/// Arithmetic shared by plain and dual evaluation.
pub trait Num: Copy {
    fn from_f64(x: f64) -> Self;
    fn bin(op: BinOp, a: Self, b: Self) -> Self;
    fn un(op: UnOp, a: Self) -> Self;
}

impl Num for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn bin(op: BinOp, a: Self, b: Self) -> Self {
        op.apply(a, b)
    }
    fn un(op: UnOp, a: Self) -> Self {
        op.apply(a)
    }
}

/// First-order dual number for forward-mode differentiation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn constant(v: f64) -> Dual {
        Dual { v, d: 0.0 }
    }

    pub fn seeded(v: f64) -> Dual {
        Dual { v, d: 1.0 }
    }
}

impl Num for Dual {
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }

    fn bin(op: BinOp, a: Self, b: Self) -> Self {
        match op {
            BinOp::Add => Dual {
                v: a.v + b.v,
                d: a.d + b.d,
            },
            BinOp::Sub => Dual {
                v: a.v - b.v,
                d: a.d - b.d,
            },
            BinOp::Mul => Dual {
                v: a.v * b.v,
                d: a.d * b.v + a.v * b.d,
            },
            BinOp::Div => Dual {
                v: a.v / b.v,
                d: (a.d * b.v - a.v * b.d) / (b.v * b.v),
            },
        }
    }

    fn un(op: UnOp, a: Self) -> Self {
        match op {
            UnOp::Sin => Dual {
                v: a.v.sin(),
                d: a.d * a.v.cos(),
            },
            UnOp::Cos => Dual {
                v: a.v.cos(),
                d: -a.d * a.v.sin(),
            },
            UnOp::Exp => {
                let e = a.v.exp();
                Dual { v: e, d: a.d * e }
            }
            UnOp::Log => Dual {
                v: a.v.ln(),
                d: a.d / a.v,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_rule() {
        let a = Dual { v: 3.0, d: 1.0 };
        let b = Dual { v: 5.0, d: 0.0 };
        let p = Dual::bin(BinOp::Mul, a, b);
        assert_eq!(p.v, 15.0);
        assert_eq!(p.d, 5.0);
    }

    #[test]
    fn chain_rule_through_exp() {
        let x = Dual::seeded(0.3);
        let y = Dual::un(UnOp::Exp, Dual::bin(BinOp::Mul, x, x));
        let expect = (0.3f64 * 0.3).exp();
        assert!((y.v - expect).abs() < 1e-15);
        assert!((y.d - 2.0 * 0.3 * expect).abs() < 1e-15);
    }
}
