use std::fmt;
use std::str::FromStr;

use super::LmmError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    AdamsBashforth,
    AdamsMoulton,
    Bdf,
}

impl Family {
    pub fn is_implicit(self) -> bool {
        !matches!(self, Family::AdamsBashforth)
    }

    fn tag(self) -> &'static str {
        match self {
            Family::AdamsBashforth => "ab",
            Family::AdamsMoulton => "am",
            Family::Bdf => "bdf",
        }
    }
}

/// A k-step linear multistep method written as
///
/// ```text
/// x_{n+1} = Σ_i alpha[i] x_{n-i} + h Σ_i beta[i] f_{n+1-i}
/// ```
///
/// so `beta[0]` is the implicit weight (zero for Adams-Bashforth).
/// `error_const` is the leading coefficient `C` of the local truncation
/// error `x(t_{n+1}) - x_{n+1} ≈ C h^{p+1} x^{(p+1)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmScheme {
    family: Family,
    order: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    error_const: f64,
}

impl LmmScheme {
    pub fn family(&self) -> Family {
        self.family
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn error_const(&self) -> f64 {
        self.error_const
    }

    pub fn is_implicit(&self) -> bool {
        self.beta[0] != 0.0
    }

    /// Past states needed: `x_n, ..., x_{n-k+1}`.
    pub fn states_needed(&self) -> usize {
        self.alpha.len()
    }

    /// Past derivative values needed: `f_n, f_{n-1}, ...`.
    pub fn fvals_needed(&self) -> usize {
        self.beta.len() - 1
    }

    /// Same family at a lower order, used while the history ramps up.
    pub fn with_order(&self, order: usize) -> LmmScheme {
        scheme_coefficients(self.family, order).expect("orders 1..=3 are always available")
    }
}

impl fmt::Display for LmmScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.family.tag(), self.order)
    }
}

impl FromStr for LmmScheme {
    type Err = LmmError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        let (family, rest) = if let Some(r) = lower.strip_prefix("bdf") {
            (Family::Bdf, r)
        } else if let Some(r) = lower.strip_prefix("ab") {
            (Family::AdamsBashforth, r)
        } else if let Some(r) = lower.strip_prefix("am") {
            (Family::AdamsMoulton, r)
        } else {
            return Err(LmmError::Config(format!("unknown integrator '{s}'")));
        };
        let order: usize = rest.parse().map_err(|_| LmmError::Config(format!("unknown integrator '{s}'")))?;
        scheme_coefficients(family, order)
    }
}

/// Textbook coefficients for orders 1 to 3.
pub fn scheme_coefficients(family: Family, order: usize) -> Result<LmmScheme, LmmError> {
    if !(1..=3).contains(&order) {
        return Err(LmmError::UnsupportedOrder(order));
    }
    let (alpha, beta, error_const): (Vec<f64>, Vec<f64>, f64) = match family {
        Family::AdamsBashforth => {
            let mut beta = vec![0.0];
            beta.extend_from_slice(adams_bashforth_weights(order));
            (vec![1.0], beta, ab_error_const(order))
        }
        Family::AdamsMoulton => match order {
            1 => (vec![1.0], vec![1.0], -1.0 / 2.0),
            2 => (vec![1.0], vec![1.0 / 2.0, 1.0 / 2.0], -1.0 / 12.0),
            _ => (vec![1.0], vec![5.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0], -1.0 / 24.0),
        },
        Family::Bdf => match order {
            1 => (vec![1.0], vec![1.0], -1.0 / 2.0),
            2 => (vec![4.0 / 3.0, -1.0 / 3.0], vec![2.0 / 3.0], -2.0 / 9.0),
            _ => (vec![18.0 / 11.0, -9.0 / 11.0, 2.0 / 11.0], vec![6.0 / 11.0], -3.0 / 22.0),
        },
    };
    Ok(LmmScheme { family, order, alpha, beta, error_const })
}

/// Adams-Bashforth weights on `f_n, f_{n-1}, ...` for orders 1 to 4.
pub(crate) fn adams_bashforth_weights(order: usize) -> &'static [f64] {
    const AB1: [f64; 1] = [1.0];
    const AB2: [f64; 2] = [3.0 / 2.0, -1.0 / 2.0];
    const AB3: [f64; 3] = [23.0 / 12.0, -16.0 / 12.0, 5.0 / 12.0];
    const AB4: [f64; 4] = [55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0];
    match order {
        1 => &AB1,
        2 => &AB2,
        3 => &AB3,
        4 => &AB4,
        _ => panic!("Adams-Bashforth order {order} not tabulated"),
    }
}

pub(crate) fn ab_error_const(order: usize) -> f64 {
    match order {
        1 => 1.0 / 2.0,
        2 => 5.0 / 12.0,
        3 => 3.0 / 8.0,
        4 => 251.0 / 720.0,
        _ => panic!("Adams-Bashforth order {order} not tabulated"),
    }
}

/// Weights on `x_n, x_{n-1}, ...` of the degree-`order` polynomial
/// extrapolation to `t_{n+1}` on an equispaced grid. Its error constant is 1.
pub(crate) fn extrapolation_weights(order: usize) -> &'static [f64] {
    const E1: [f64; 2] = [2.0, -1.0];
    const E2: [f64; 3] = [3.0, -3.0, 1.0];
    const E3: [f64; 4] = [4.0, -6.0, 4.0, -1.0];
    match order {
        1 => &E1,
        2 => &E2,
        3 => &E3,
        _ => panic!("extrapolation order {order} not tabulated"),
    }
}
