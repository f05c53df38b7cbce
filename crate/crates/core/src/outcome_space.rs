//! Halting predicates and symmetric outcome spaces.
//!
//! A predicate `P(r, l)` fires on a digest `x` when `x mod l == r`, with the
//! digest read as a big-endian unsigned integer. An outcome is one predicate
//! per round boundary; the stopping time of an outcome on a digest chain is
//! the first slot whose predicate fires, or `n` when none does.
//!
//! Building the space from one modulus per slot and letting each slot range
//! over every residue makes the space symmetric: for any digest chain the
//! number of outcomes with stopping time `j` is the same `O_j`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CashError, Result};

/// Upper bound on `|O|` for the enumeration helpers.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// A 256-bit hash output.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s.trim()).map_err(|e| CashError::Record(e.to_string()))?;
        let arr: [u8; 32] = bytes
            .try_into()
            .map_err(|_| CashError::Record("digest must be 32 bytes".into()))?;
        Ok(Digest(arr))
    }

    /// Digest whose integer value is `value` (big-endian, zero padded).
    pub fn from_u64(value: u64) -> Self {
        let mut out = [0u8; 32];
        out[24..].copy_from_slice(&value.to_be_bytes());
        Digest(out)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// `bytes` as a big-endian integer, reduced mod `modulus` one byte at a time.
pub fn reduce_digest(bytes: &[u8], modulus: u64) -> u64 {
    debug_assert!(modulus >= 2);
    let m = modulus as u128;
    bytes
        .iter()
        .fold(0u128, |acc, &b| (acc * 256 + b as u128) % m) as u64
}

/// Residue test `x ≡ residue (mod modulus)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    residue: u64,
    modulus: u64,
}

impl Predicate {
    pub fn new(residue: u64, modulus: u64) -> Result<Self> {
        if modulus < 2 {
            return Err(CashError::InvalidModulus(modulus));
        }
        if residue >= modulus {
            return Err(CashError::InvalidResidue { residue, modulus });
        }
        Ok(Self { residue, modulus })
    }

    pub fn residue(&self) -> u64 {
        self.residue
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    pub fn eval(&self, digest: &[u8]) -> bool {
        reduce_digest(digest, self.modulus) == self.residue
    }
}

/// Evaluates `pred` on `digest`, returning 1 when it fires and 0 otherwise.
pub fn predicate_eval(pred: &Predicate, digest: &[u8]) -> u8 {
    pred.eval(digest) as u8
}

/// One predicate per slot, `n - 1` in total.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Outcome {
    predicates: Vec<Predicate>,
}

impl Outcome {
    /// Builds an outcome and checks it against the moduli of `space`.
    pub fn new(space: &OutcomeSpace, predicates: Vec<Predicate>) -> Result<Self> {
        if predicates.len() != space.slots() {
            return Err(CashError::LengthMismatch {
                expected: space.slots(),
                actual: predicates.len(),
            });
        }
        for (p, &l) in predicates.iter().zip(space.moduli()) {
            if p.modulus() != l {
                return Err(CashError::InvalidParameter(format!(
                    "predicate modulus {} does not match slot modulus {l}",
                    p.modulus()
                )));
            }
        }
        Ok(Self { predicates })
    }

    /// Outcome with the given residues under the moduli of `space`.
    pub fn from_residues(space: &OutcomeSpace, residues: &[u64]) -> Result<Self> {
        if residues.len() != space.slots() {
            return Err(CashError::LengthMismatch {
                expected: space.slots(),
                actual: residues.len(),
            });
        }
        let predicates = residues
            .iter()
            .zip(space.moduli())
            .map(|(&r, &l)| Predicate::new(r, l))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { predicates })
    }

    pub fn predicates(&self) -> &[Predicate] {
        &self.predicates
    }

    pub fn rounds(&self) -> usize {
        self.predicates.len() + 1
    }
}

/// The symmetric outcome space generated by a list of slot moduli.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSpace {
    moduli: Vec<u64>,
    class_sizes: Vec<u64>,
}

impl OutcomeSpace {
    pub fn new(moduli: Vec<u64>) -> Result<Self> {
        if moduli.is_empty() {
            return Err(CashError::EmptySpace);
        }
        if let Some(&bad) = moduli.iter().find(|&&l| l < 2) {
            return Err(CashError::InvalidModulus(bad));
        }
        let overflow = || CashError::InvalidParameter("outcome space size overflows u64".into());
        let slots = moduli.len();
        let mut class_sizes = Vec::with_capacity(slots + 1);
        for j in 0..slots {
            let mut size: u64 = 1;
            for (i, &l) in moduli.iter().enumerate() {
                let factor = match i.cmp(&j) {
                    std::cmp::Ordering::Less => l - 1,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Greater => l,
                };
                size = size.checked_mul(factor).ok_or_else(overflow)?;
            }
            class_sizes.push(size);
        }
        let last = moduli
            .iter()
            .try_fold(1u64, |acc, &l| acc.checked_mul(l - 1))
            .ok_or_else(overflow)?;
        class_sizes.push(last);
        moduli
            .iter()
            .try_fold(1u64, |acc, &l| acc.checked_mul(l))
            .ok_or_else(overflow)?;
        Ok(Self {
            moduli,
            class_sizes,
        })
    }

    /// `n` rounds with every modulus equal to `n`.
    pub fn uniform(rounds: usize) -> Result<Self> {
        if rounds < 2 {
            return Err(CashError::EmptySpace);
        }
        Self::new(vec![rounds as u64; rounds - 1])
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    /// Number of predicate slots, `n - 1`.
    pub fn slots(&self) -> usize {
        self.moduli.len()
    }

    /// Maximum number of hashing rounds `n`.
    pub fn rounds(&self) -> usize {
        self.moduli.len() + 1
    }

    /// `(O_1, ..., O_n)`.
    pub fn class_sizes(&self) -> &[u64] {
        &self.class_sizes
    }

    pub fn total_outcomes(&self) -> u64 {
        self.moduli.iter().product()
    }

    /// Decodes a mixed-radix index (slot 1 most significant) into an outcome.
    pub fn outcome_at(&self, mut index: u64) -> Outcome {
        let mut residues = vec![0u64; self.slots()];
        for (slot, &l) in self.moduli.iter().enumerate().rev() {
            residues[slot] = index % l;
            index /= l;
        }
        let predicates = residues
            .iter()
            .zip(&self.moduli)
            .map(|(&residue, &modulus)| Predicate { residue, modulus })
            .collect();
        Outcome { predicates }
    }

    /// Every outcome of the space, guarded by [`ENUMERATION_LIMIT`].
    pub fn enumerate(&self) -> Result<impl Iterator<Item = Outcome> + '_> {
        let size = self.total_outcomes() as u128;
        if size > ENUMERATION_LIMIT {
            return Err(CashError::EnumerationGuard {
                size,
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok((0..self.total_outcomes()).map(move |i| self.outcome_at(i)))
    }
}

/// Builds the outcome space for the given slot moduli.
pub fn build_outcome_space(moduli: &[u64]) -> Result<OutcomeSpace> {
    OutcomeSpace::new(moduli.to_vec())
}

/// Digests `H_k^1(pwd, s), ..., H_k^n(pwd, s)` for one password and salt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestChain {
    digests: Vec<Digest>,
}

impl DigestChain {
    pub fn new(digests: Vec<Digest>) -> Self {
        Self { digests }
    }

    pub fn digests(&self) -> &[Digest] {
        &self.digests
    }

    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }

    /// Digest produced after `round` rounds (1-based).
    pub fn at(&self, round: usize) -> &Digest {
        &self.digests[round - 1]
    }

    /// For each slot, the residue that fires on this chain.
    pub fn firing_residues(&self, space: &OutcomeSpace) -> Vec<u64> {
        space
            .moduli()
            .iter()
            .zip(&self.digests)
            .map(|(&l, d)| reduce_digest(d.as_bytes(), l))
            .collect()
    }
}

/// First slot whose predicate fires on its digest, or `n` when none fires.
pub fn stopping_time(outcome: &Outcome, chain: &DigestChain) -> usize {
    debug_assert!(chain.len() + 1 >= outcome.rounds());
    outcome
        .predicates()
        .iter()
        .zip(chain.digests())
        .position(|(p, d)| p.eval(d.as_bytes()))
        .map_or(outcome.rounds(), |slot| slot + 1)
}

/// Stopping time from precomputed firing residues.
pub fn stopping_time_from_residues(outcome: &Outcome, firing: &[u64]) -> usize {
    outcome
        .predicates()
        .iter()
        .zip(firing)
        .position(|(p, &r)| p.residue() == r)
        .map_or(outcome.rounds(), |slot| slot + 1)
}

/// Partitions every outcome of `space` by its stopping time on `chain`.
/// Entry `j - 1` of the result holds class `j`.
pub fn classify_outcomes(chain: &DigestChain, space: &OutcomeSpace) -> Result<Vec<Vec<Outcome>>> {
    if chain.len() < space.slots() {
        return Err(CashError::LengthMismatch {
            expected: space.slots(),
            actual: chain.len(),
        });
    }
    let firing = chain.firing_residues(space);
    let mut classes = vec![Vec::new(); space.rounds()];
    for outcome in space.enumerate()? {
        let j = stopping_time_from_residues(&outcome, &firing);
        classes[j - 1].push(outcome);
    }
    Ok(classes)
}
