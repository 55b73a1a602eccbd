//! Incremental word classifiers.
//!
//! Sweeps evaluate many words that share prefixes, so the interface exposes the
//! running state instead of taking whole words.

use crate::cells::{CellError, Recognizer, Runner};
use crate::numerics::Precision;
use crate::Error;

pub trait Acceptor {
    type State: Clone;

    fn start(&self) -> Self::State;

    fn advance(&self, state: &mut Self::State, symbol: char) -> Result<(), Error>;

    fn decide(&self, state: &Self::State) -> Result<bool, Error>;

    fn accepts(&self, word: &[char]) -> Result<bool, Error> {
        let mut s = self.start();
        for &c in word {
            self.advance(&mut s, c)?;
        }
        self.decide(&s)
    }

    /// Continue each state with repeated `symbol`, deciding after every
    /// count in `checkpoints[i]` (ascending). After an error the remaining
    /// checkpoints of that run report it too.
    fn decide_runs(
        &self,
        starts: &[Self::State],
        symbol: char,
        checkpoints: &[Vec<usize>],
    ) -> Vec<Vec<Result<bool, Error>>> {
        decide_runs_sequential(self, starts, symbol, checkpoints)
    }
}

/// One run at a time; the default for [`Acceptor::decide_runs`].
pub fn decide_runs_sequential<A: Acceptor + ?Sized>(
    acceptor: &A,
    starts: &[A::State],
    symbol: char,
    checkpoints: &[Vec<usize>],
) -> Vec<Vec<Result<bool, Error>>> {
    starts
        .iter()
        .zip(checkpoints)
        .map(|(start, checks)| {
            let mut state = start.clone();
            let mut len = 0;
            let mut failed: Option<Error> = None;
            checks
                .iter()
                .map(|&c| {
                    while failed.is_none() && len < c {
                        if let Err(e) = acceptor.advance(&mut state, symbol) {
                            failed = Some(e);
                        }
                        len += 1;
                    }
                    match &failed {
                        Some(e) => Err(e.clone()),
                        None => acceptor.decide(&state),
                    }
                })
                .collect()
        })
        .collect()
}

/// A recognizer evaluated at a fixed precision.
#[derive(Debug, Clone, Copy)]
pub struct AtPrecision<'a> {
    pub recognizer: &'a Recognizer,
    pub precision: Precision,
}

impl<'a> AtPrecision<'a> {
    pub fn new(recognizer: &'a Recognizer, precision: Precision) -> Self {
        AtPrecision { recognizer, precision }
    }
}

impl<'a> Acceptor for AtPrecision<'a> {
    type State = Runner<'a>;

    fn start(&self) -> Runner<'a> {
        Runner::new(self.recognizer, self.precision)
    }

    fn advance(&self, state: &mut Runner<'a>, symbol: char) -> Result<(), Error> {
        Ok(state.push(symbol)?)
    }

    fn decide(&self, state: &Runner<'a>) -> Result<bool, Error> {
        Ok(state.accepts()?)
    }

    fn decide_runs(&self, starts: &[Runner<'a>], symbol: char, checkpoints: &[Vec<usize>]) -> Vec<Vec<Result<bool, Error>>> {
        match Runner::decide_runs_lockstep(starts, symbol, checkpoints) {
            Some(out) => out
                .into_iter()
                .map(|lane| {
                    lane.into_iter()
                        .map(|v| v.ok_or_else(|| Error::from(CellError::NonFinite { step: 0 })))
                        .collect()
                })
                .collect(),
            None => decide_runs_sequential(self, starts, symbol, checkpoints),
        }
    }
}

/// Any whole-word predicate, buffered symbol by symbol.
#[derive(Debug, Clone, Copy)]
pub struct FnAcceptor<F>(pub F);

impl<F> Acceptor for FnAcceptor<F>
where
    F: Fn(&[char]) -> Result<bool, Error>,
{
    type State = Vec<char>;

    fn start(&self) -> Vec<char> {
        Vec::new()
    }

    fn advance(&self, state: &mut Vec<char>, symbol: char) -> Result<(), Error> {
        state.push(symbol);
        Ok(())
    }

    fn decide(&self, state: &Vec<char>) -> Result<bool, Error> {
        (self.0)(state)
    }
}
