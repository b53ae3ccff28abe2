use ndarray::Array2;

use crate::buffers::{SequenceWindow, Transition};
use crate::error::{Error, Result};

/// A training batch in matrix form. Observation sequences hold one matrix per
/// window position (oldest first); plain transitions give length-1 sequences.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub size: usize,
    pub state: Array2<f64>,
    pub next_state: Array2<f64>,
    /// `[agent][window position]`, each `size x obs_len`.
    pub obs: Vec<Vec<Array2<f64>>>,
    pub next_obs: Vec<Vec<Array2<f64>>>,
    /// `[agent]`, each `size x 2`.
    pub actions: Vec<Array2<f64>>,
    /// `[agent]`, each `size x 1`.
    pub rewards: Vec<Array2<f64>>,
    /// `1 - terminal`, `size x 1`.
    pub not_done: Array2<f64>,
}

fn rows(items: &[&[f64]]) -> Result<Array2<f64>> {
    let cols = items.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((items.len(), cols));
    for (r, item) in items.iter().enumerate() {
        if item.len() != cols {
            return Err(Error::Shape("ragged rows in batch".into()));
        }
        out.row_mut(r)
            .iter_mut()
            .zip(item.iter())
            .for_each(|(d, s)| *d = *s);
    }
    Ok(out)
}

impl Batch {
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Input("empty batch".into()))?;
        let n = first.n_agents();
        let obs = (0..n)
            .map(|a| {
                rows(
                    &items
                        .iter()
                        .map(|t| t.obs[a].as_slice())
                        .collect::<Vec<_>>(),
                )
                .map(|m| vec![m])
            })
            .collect::<Result<Vec<_>>>()?;
        let next_obs = (0..n)
            .map(|a| {
                rows(
                    &items
                        .iter()
                        .map(|t| t.next_obs[a].as_slice())
                        .collect::<Vec<_>>(),
                )
                .map(|m| vec![m])
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(items, obs, next_obs)
    }

    pub fn from_windows(items: &[&SequenceWindow]) -> Result<Self> {
        let first = items
            .first()
            .and_then(|w| w.last())
            .ok_or_else(|| Error::Input("empty window batch".into()))?;
        if items.iter().any(|w| w.is_empty()) {
            return Err(Error::Input("window shorter than 1".into()));
        }
        let n = first.n_agents();
        let len = items[0].capacity();
        let sequences = |next: bool| -> Result<Vec<Vec<Array2<f64>>>> {
            (0..n)
                .map(|a| {
                    let per_item: Vec<Vec<&[f64]>> = items
                        .iter()
                        .map(|w| {
                            if next {
                                w.next_observation_window(a)
                            } else {
                                w.observation_window(a)
                            }
                        })
                        .collect();
                    (0..len)
                        .map(|k| rows(&per_item.iter().map(|win| win[k]).collect::<Vec<_>>()))
                        .collect()
                })
                .collect()
        };
        let (obs, next_obs) = (sequences(false)?, sequences(true)?);
        let finals: Vec<&Transition> = items.iter().map(|w| w.last().unwrap()).collect();
        Self::assemble(&finals, obs, next_obs)
    }

    fn assemble(
        items: &[&Transition],
        obs: Vec<Vec<Array2<f64>>>,
        next_obs: Vec<Vec<Array2<f64>>>,
    ) -> Result<Self> {
        let n = obs.len();
        let state = rows(&items.iter().map(|t| t.state.as_slice()).collect::<Vec<_>>())?;
        let next_state = rows(
            &items
                .iter()
                .map(|t| t.next_state.as_slice())
                .collect::<Vec<_>>(),
        )?;
        let actions = (0..n)
            .map(|a| {
                Array2::from_shape_fn((items.len(), 2), |(r, c)| {
                    let u = items[r].actions[a];
                    if c == 0 {
                        u.x
                    } else {
                        u.y
                    }
                })
            })
            .collect();
        let rewards = (0..n)
            .map(|a| Array2::from_shape_fn((items.len(), 1), |(r, _)| items[r].rewards[a]))
            .collect();
        let not_done =
            Array2::from_shape_fn(
                (items.len(), 1),
                |(r, _)| {
                    if items[r].terminal {
                        0.0
                    } else {
                        1.0
                    }
                },
            );
        Ok(Batch {
            size: items.len(),
            state,
            next_state,
            obs,
            next_obs,
            actions,
            rewards,
            not_done,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.obs.len()
    }

    /// Most recent observation of `agent`.
    pub fn current_obs(&self, agent: usize) -> &Array2<f64> {
        self.obs[agent].last().expect("non-empty window")
    }

    pub fn next_current_obs(&self, agent: usize) -> &Array2<f64> {
        self.next_obs[agent].last().expect("non-empty window")
    }
}
