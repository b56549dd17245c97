//! Mapping raw dataset fields onto model inputs.

use crate::approx::Input;
use crate::dataset::index_of;
use crate::error::{Error, Result};

/// How states and actions become model inputs.
///
/// Tabular spaces use one-hot encodings (state inputs of width `S`, pair
/// inputs of width `S·A`), so a linear model over them is exactly a table.
/// Continuous spaces feed the raw vectors, concatenated for pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceEncoding {
    Tabular { num_states: usize, num_actions: usize },
    Continuous { state_dim: usize, action_dim: usize },
}

/// An owned model input.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    OneHot { index: usize, dim: usize },
    Dense(Vec<f64>),
}

impl Encoded {
    pub fn as_input(&self) -> Input<'_> {
        match self {
            Encoded::OneHot { index, dim } => Input::OneHot {
                index: *index,
                dim: *dim,
            },
            Encoded::Dense(x) => Input::Dense(x),
        }
    }
}

fn bounded(raw: &[f64], n: usize, what: &str) -> Result<usize> {
    let i = index_of(raw)?;
    if i >= n {
        return Err(Error::shape(format!("{what} index {i} out of range {n}")));
    }
    Ok(i)
}

impl SpaceEncoding {
    pub fn is_tabular(&self) -> bool {
        matches!(self, SpaceEncoding::Tabular { .. })
    }

    pub fn state_input_dim(&self) -> usize {
        match *self {
            SpaceEncoding::Tabular { num_states, .. } => num_states,
            SpaceEncoding::Continuous { state_dim, .. } => state_dim,
        }
    }

    pub fn pair_input_dim(&self) -> usize {
        match *self {
            SpaceEncoding::Tabular {
                num_states,
                num_actions,
            } => num_states * num_actions,
            SpaceEncoding::Continuous { state_dim, action_dim } => state_dim + action_dim,
        }
    }

    pub fn state(&self, raw: &[f64]) -> Result<Encoded> {
        match *self {
            SpaceEncoding::Tabular { num_states, .. } => Ok(Encoded::OneHot {
                index: bounded(raw, num_states, "state")?,
                dim: num_states,
            }),
            SpaceEncoding::Continuous { state_dim, .. } => {
                if raw.len() != state_dim {
                    return Err(Error::shape(format!(
                        "state has {} fields, expected {state_dim}",
                        raw.len()
                    )));
                }
                Ok(Encoded::Dense(raw.to_vec()))
            }
        }
    }

    pub fn pair(&self, state: &[f64], action: &[f64]) -> Result<Encoded> {
        match *self {
            SpaceEncoding::Tabular {
                num_states,
                num_actions,
            } => {
                let s = bounded(state, num_states, "state")?;
                let a = bounded(action, num_actions, "action")?;
                Ok(Encoded::OneHot {
                    index: s * num_actions + a,
                    dim: num_states * num_actions,
                })
            }
            SpaceEncoding::Continuous { state_dim, action_dim } => {
                if state.len() != state_dim || action.len() != action_dim {
                    return Err(Error::shape("pair fields do not match the continuous encoding"));
                }
                let mut x = state.to_vec();
                x.extend_from_slice(action);
                Ok(Encoded::Dense(x))
            }
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            SpaceEncoding::Tabular {
                num_states,
                num_actions,
            } => format!("tabular {num_states} {num_actions}"),
            SpaceEncoding::Continuous { state_dim, action_dim } => format!("continuous {state_dim} {action_dim}"),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split_whitespace().collect();
        let num = |x: &str| {
            x.parse::<usize>()
                .map_err(|_| Error::parse(format!("bad encoding `{s}`")))
        };
        match parts[..] {
            ["tabular", a, b] => Ok(SpaceEncoding::Tabular {
                num_states: num(a)?,
                num_actions: num(b)?,
            }),
            ["continuous", a, b] => Ok(SpaceEncoding::Continuous {
                state_dim: num(a)?,
                action_dim: num(b)?,
            }),
            _ => Err(Error::parse(format!("bad encoding `{s}`"))),
        }
    }
}
