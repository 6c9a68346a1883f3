use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numcore::{sigmoid, softplus};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum ConsistencyVariant {
    /// Mean absolute gap between measured and predicted deviation.
    Abs,
    /// Mean over lengths of softplus of the per-length mean gap.
    #[default]
    Softplus,
}

impl ConsistencyVariant {
    pub fn name(self) -> &'static str {
        match self {
            Self::Abs => "abs",
            Self::Softplus => "softplus",
        }
    }
}

impl fmt::Display for ConsistencyVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConsistencyVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(Self::Abs),
            "softplus" => Ok(Self::Softplus),
            other => Err(Error::input(format!(
                "unknown consistency variant '{other}' (expected abs or softplus)"
            ))),
        }
    }
}

/// Measured deviations Ω and predictions g for one composite length.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationGroup<T> {
    pub length: usize,
    pub omega: Vec<T>,
    pub predicted: Vec<T>,
}

impl<T: Scalar> DeviationGroup<T> {
    pub fn new(length: usize, omega: Vec<T>, predicted: Vec<T>) -> Result<Self> {
        if omega.len() != predicted.len() {
            return Err(Error::dim(format!(
                "length {length}: {} deviations but {} predictions",
                omega.len(),
                predicted.len()
            )));
        }
        if omega.is_empty() {
            return Err(Error::input(format!("length {length}: empty deviation group")));
        }
        Ok(Self {
            length,
            omega,
            predicted,
        })
    }

    /// Group mean of Ω − g.
    pub fn mean_gap(&self) -> T {
        let sum: T = self
            .omega
            .iter()
            .zip(&self.predicted)
            .map(|(&o, &g)| o - g)
            .sum();
        sum / T::from_count(self.omega.len())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyOutput<T> {
    pub loss: T,
    /// ∂loss/∂Ω, one vector per group.
    pub grad_omega: Vec<Vec<T>>,
    /// ∂loss/∂g, one vector per group; always the negation of `grad_omega`.
    pub grad_predicted: Vec<Vec<T>>,
    /// Per-group mean of Ω − g.
    pub k: Vec<T>,
    /// Mean Ω over every pair of every group.
    pub simi: T,
}

fn check_groups<T: Scalar>(groups: &[DeviationGroup<T>]) -> Result<()> {
    if groups.is_empty() {
        return Err(Error::input("consistency loss needs at least one length group"));
    }
    for g in groups {
        if g.omega.is_empty() || g.omega.len() != g.predicted.len() {
            return Err(Error::input(format!("length {}: empty or ragged group", g.length)));
        }
    }
    Ok(())
}

fn simi<T: Scalar>(groups: &[DeviationGroup<T>]) -> T {
    let n: usize = groups.iter().map(|g| g.omega.len()).sum();
    let s: T = groups.iter().flat_map(|g| g.omega.iter().copied()).sum();
    s / T::from_count(n)
}

/// Mean |Ω − g| over all pairs, with subgradient 0 at exact ties.
pub fn consistency_loss_abs<T: Scalar>(groups: &[DeviationGroup<T>]) -> Result<ConsistencyOutput<T>> {
    check_groups(groups)?;
    let n = T::from_count(groups.iter().map(|g| g.omega.len()).sum());
    let mut loss = T::zero();
    let mut grad_omega = Vec::with_capacity(groups.len());
    for g in groups {
        let mut grad = Vec::with_capacity(g.omega.len());
        for (&o, &p) in g.omega.iter().zip(&g.predicted) {
            let d = o - p;
            loss += d.abs();
            let s = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            grad.push(s / n);
        }
        grad_omega.push(grad);
    }
    Ok(finish(loss / n, grad_omega, groups))
}

/// Mean over groups of softplus(k_l), where k_l is the group mean of Ω − g.
pub fn consistency_loss_softplus<T: Scalar>(groups: &[DeviationGroup<T>]) -> Result<ConsistencyOutput<T>> {
    check_groups(groups)?;
    let lengths = T::from_count(groups.len());
    let mut loss = T::zero();
    let mut grad_omega = Vec::with_capacity(groups.len());
    for g in groups {
        let k = g.mean_gap();
        loss += softplus(k);
        let coeff = sigmoid(k) / (lengths * T::from_count(g.omega.len()));
        grad_omega.push(vec![coeff; g.omega.len()]);
    }
    Ok(finish(loss / lengths, grad_omega, groups))
}

pub fn consistency_loss<T: Scalar>(
    variant: ConsistencyVariant,
    groups: &[DeviationGroup<T>],
) -> Result<ConsistencyOutput<T>> {
    match variant {
        ConsistencyVariant::Abs => consistency_loss_abs(groups),
        ConsistencyVariant::Softplus => consistency_loss_softplus(groups),
    }
}

fn finish<T: Scalar>(loss: T, grad_omega: Vec<Vec<T>>, groups: &[DeviationGroup<T>]) -> ConsistencyOutput<T> {
    let grad_predicted = grad_omega
        .iter()
        .map(|v| v.iter().map(|&x| -x).collect())
        .collect();
    ConsistencyOutput {
        loss,
        grad_omega,
        grad_predicted,
        k: groups.iter().map(DeviationGroup::mean_gap).collect(),
        simi: simi(groups),
    }
}
