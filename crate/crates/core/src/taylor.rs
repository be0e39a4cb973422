//! Truncated Taylor-series (jet) arithmetic.
//!
//! A [`Jet`] holds the coefficients of a truncated expansion
//! `f(x0 + e) = c[0] + c[1] e + ... + c[m] e^m`. Applying a first-order
//! differential operator to a jet of order `m` yields a jet of order
//! `m - 1`, so iterating an operator `n` times needs a starting order of
//! `n` to keep the value coefficient exact.

#[derive(Clone, Debug)]
pub(crate) struct Jet {
    c: Vec<f64>,
}

impl Jet {
    pub fn constant(v: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = v;
        Jet { c }
    }

    /// The identity function `x` expanded at `x0`.
    pub fn var(x0: f64, order: usize) -> Self {
        let mut c = vec![0.0; order + 1];
        c[0] = x0;
        if order >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    /// `sinh x` expanded at `x0`.
    pub fn sinh_at(x0: f64, order: usize) -> Self {
        let (s, co) = (x0.sinh(), x0.cosh());
        let mut c = vec![0.0; order + 1];
        let mut fact = 1.0;
        for (k, ck) in c.iter_mut().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            *ck = if k % 2 == 0 { s } else { co } / fact;
        }
        Jet { c }
    }

    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c.get(k).copied().unwrap_or(0.0)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let mut c = self.c.clone();
        c.truncate(order + 1);
        c.resize(order + 1, 0.0);
        Jet { c }
    }

    /// Derivative; drops one order.
    pub fn deriv(&self) -> Jet {
        if self.c.len() == 1 {
            return Jet::constant(0.0, 0);
        }
        let c = (1..self.c.len()).map(|k| k as f64 * self.c[k]).collect();
        Jet { c }
    }

    pub fn scale(&self, f: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|x| x * f).collect(),
        }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        let m = self.c.len().min(other.c.len());
        let c = (0..m).map(|k| self.c[k] - other.c[k]).collect();
        Jet { c }
    }

    /// Product truncated to the shorter operand's order.
    pub fn mul(&self, other: &Jet) -> Jet {
        let m = self.c.len().min(other.c.len());
        let mut c = vec![0.0; m];
        for i in 0..m {
            for j in 0..m - i {
                c[i + j] += self.c[i] * other.c[j];
            }
        }
        Jet { c }
    }

    /// Power-series division, truncated to the shorter operand's order.
    /// Requires `other.c[0] != 0`.
    pub fn div(&self, other: &Jet) -> Jet {
        let m = self.c.len().min(other.c.len());
        let mut c = vec![0.0; m];
        for k in 0..m {
            let mut acc = self.coeff(k);
            for j in 1..=k {
                acc -= other.c[j] * c[k - j];
            }
            c[k] = acc / other.c[0];
        }
        Jet { c }
    }

    /// Division of two series that both vanish at the expansion point:
    /// computes `(self/x) / (other/x)` by shifting each down one power.
    /// Requires `other.c[1] != 0`; `c[0]` of both operands is ignored.
    pub fn div_shifted(&self, other: &Jet) -> Jet {
        let num = Jet {
            c: self.c[1..].to_vec(),
        };
        let den = Jet {
            c: other.c[1..].to_vec(),
        };
        num.div(&den)
    }

    /// Horner evaluation of the expansion at offset `e` from the center.
    pub fn eval(&self, e: f64) -> f64 {
        let mut acc = 0.0;
        for &ck in self.c.iter().rev() {
            acc = acc * e + ck;
        }
        acc
    }
}
