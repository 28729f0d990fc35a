//! Numeric tolerances shared by the LP, condition checks and schedulers.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Agreement between two routes computing the same quantity.
    pub equality: f64,
    /// Slack allowed when verifying a constraint set.
    pub feasibility: f64,
    /// Pivots, determinants and denominators below this are treated as zero.
    pub singularity: f64,
    /// Matrices with a larger 2-norm condition number are treated as singular.
    pub max_condition: f64,
    /// Energies within this relative distance of the maximum count as tied.
    pub tie_relative: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances =
        Tolerances { equality: 1e-8, feasibility: 1e-9, singularity: 1e-12, max_condition: 1e12, tie_relative: 1e-9 };
}

pub const TOL: Tolerances = Tolerances::DEFAULT;
