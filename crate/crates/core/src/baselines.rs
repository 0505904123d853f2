//! Reference mixture-weight baselines.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::simplex::MixtureWeights;

/// Uniform 1/K weights.
pub fn balanced_weights(group_count: usize) -> Result<MixtureWeights> {
    MixtureWeights::uniform(group_count)
}

/// All mass on one group.
pub fn single_group_weights(group_count: usize, group: usize) -> Result<MixtureWeights> {
    if group_count == 0 {
        return Err(Error::InvalidDimension("group count must be >= 1".into()));
    }
    if group >= group_count {
        return Err(Error::InvalidParameter(format!(
            "group index {group} out of range for {group_count} groups"
        )));
    }
    let mut weights = vec![0.0; group_count];
    weights[group] = 1.0;
    MixtureWeights::new(weights)
}

/// Weighting methods named in experiment configs: `balanced`,
/// `vertex:<index>`, `mixmax`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Baseline {
    Balanced,
    Vertex(usize),
    MixMax,
}

impl Baseline {
    pub fn weights(self, group_count: usize) -> Result<MixtureWeights> {
        match self {
            Baseline::Balanced => balanced_weights(group_count),
            Baseline::Vertex(index) => single_group_weights(group_count, index),
            Baseline::MixMax => Err(Error::InvalidParameter(
                "mixmax weights come from the solver, not a closed form".into(),
            )),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Baseline::Balanced => f.write_str("balanced"),
            Baseline::Vertex(index) => write!(f, "vertex:{index}"),
            Baseline::MixMax => f.write_str("mixmax"),
        }
    }
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" => Ok(Baseline::Balanced),
            "mixmax" => Ok(Baseline::MixMax),
            other => match other.strip_prefix("vertex:") {
                Some(index) => index
                    .parse::<usize>()
                    .map(Baseline::Vertex)
                    .map_err(|_| Error::UnknownName(format!("baseline '{other}'"))),
                None => Err(Error::UnknownName(format!("baseline '{other}'"))),
            },
        }
    }
}
