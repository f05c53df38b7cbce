//! Iterated hashing, account creation and password re-derivation.
//!
//! Round `m` of the derivation applies the underlying hash `k` times to the
//! output of round `m - 1`; round 1 starts from the framed `(pwd, salt)`
//! input. Derivation halts after the first round whose digest satisfies the
//! corresponding predicate of the stored outcome, or after `n` rounds.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use subtle::ConstantTimeEq;

use crate::error::{CashError, Result};
use crate::mechanism::{sample_outcome, StoppingDistribution};
use crate::outcome_space::{Digest, DigestChain, Outcome, OutcomeSpace, Predicate};

pub const SHA256_ID: &str = "sha256";
pub const DEFAULT_SALT_BITS: u32 = 128;

/// A 32-byte-output hash used as the unit of work.
pub trait RoundHash {
    fn id(&self) -> &str;
    fn hash(&self, input: &[u8]) -> Digest;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Hash;

impl RoundHash for Sha256Hash {
    fn id(&self) -> &str {
        SHA256_ID
    }

    fn hash(&self, input: &[u8]) -> Digest {
        Digest(Sha256::digest(input).into())
    }
}

/// Wraps a hash and counts invocations.
#[derive(Debug, Default)]
pub struct CountingHash<H> {
    inner: H,
    calls: AtomicU64,
}

impl<H: RoundHash> CountingHash<H> {
    pub fn new(inner: H) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<H: RoundHash> RoundHash for CountingHash<H> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn hash(&self, input: &[u8]) -> Digest {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.hash(input)
    }
}

/// Resolves a hash identifier stored in a record.
pub fn hasher_for(hash_id: &str) -> Result<Sha256Hash> {
    match hash_id {
        SHA256_ID => Ok(Sha256Hash),
        other => Err(CashError::UnsupportedHash(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KdfParams {
    /// Underlying-hash invocations per round.
    pub k: u64,
    /// Maximum number of rounds `n`.
    pub rounds: usize,
    pub salt_bits: u32,
    pub hash_id: String,
}

impl KdfParams {
    pub fn new(k: u64, rounds: usize) -> Result<Self> {
        let params = Self {
            k,
            rounds,
            salt_bits: DEFAULT_SALT_BITS,
            hash_id: SHA256_ID.to_string(),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_salt_bits(mut self, salt_bits: u32) -> Result<Self> {
        self.salt_bits = salt_bits;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(CashError::InvalidParameter("k must be at least 1".into()));
        }
        if self.rounds < 2 {
            return Err(CashError::InvalidParameter("at least two rounds are required".into()));
        }
        // salt length is framed by a single byte
        if self.salt_bits < 64 || !self.salt_bits.is_multiple_of(8) || self.salt_bits > 255 * 8 {
            return Err(CashError::InvalidParameter(format!(
                "salt length {} bits must be a multiple of 8 in [64, 2040]",
                self.salt_bits
            )));
        }
        hasher_for(&self.hash_id)?;
        Ok(())
    }

    pub fn salt_bytes(&self) -> usize {
        (self.salt_bits / 8) as usize
    }
}

/// `k` sequential applications of `hasher`, starting from `input`.
pub fn hash_round_with<H: RoundHash + ?Sized>(hasher: &H, input: &[u8], k: u64) -> Digest {
    assert!(k >= 1, "k must be at least 1");
    let mut digest = hasher.hash(input);
    for _ in 1..k {
        digest = hasher.hash(digest.as_bytes());
    }
    digest
}

pub fn hash_round(input: &[u8], k: u64) -> Digest {
    hash_round_with(&Sha256Hash, input, k)
}

/// Password bytes, then the salt length as one byte, then the salt.
pub fn frame_input(pwd: &[u8], salt: &[u8]) -> Vec<u8> {
    assert!(salt.len() <= u8::MAX as usize, "salt longer than 255 bytes");
    let mut buf = Vec::with_capacity(pwd.len() + 1 + salt.len());
    buf.extend_from_slice(pwd);
    buf.push(salt.len() as u8);
    buf.extend_from_slice(salt);
    buf
}

pub fn digest_chain_with<H: RoundHash + ?Sized>(
    hasher: &H,
    pwd: &[u8],
    salt: &[u8],
    k: u64,
    rounds: usize,
) -> DigestChain {
    let mut digests = Vec::with_capacity(rounds);
    let mut current = hash_round_with(hasher, &frame_input(pwd, salt), k);
    digests.push(current);
    for _ in 1..rounds {
        current = hash_round_with(hasher, current.as_bytes(), k);
        digests.push(current);
    }
    DigestChain::new(digests)
}

/// All `n` round digests of `pwd` under `salt`.
pub fn digest_chain(pwd: &[u8], salt: &[u8], params: &KdfParams) -> DigestChain {
    digest_chain_with(&Sha256Hash, pwd, salt, params.k, params.rounds)
}

/// State kept on the client for one account.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRecord {
    pub user: String,
    pub account: String,
    pub salt: Vec<u8>,
    pub outcome: Outcome,
    pub params: KdfParams,
    pub epsilon: f64,
}

/// What the authentication server keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerRecord {
    pub user: String,
    pub derived_hash: Digest,
}

#[derive(Serialize, Deserialize)]
struct PredicateJson {
    residue: u64,
    modulus: u64,
}

#[derive(Serialize, Deserialize)]
struct ClientRecordJson {
    user: String,
    account: String,
    salt_hex: String,
    n: usize,
    epsilon: f64,
    k: u64,
    hash_id: String,
    predicates: Vec<PredicateJson>,
}

#[derive(Serialize, Deserialize)]
struct ServerRecordJson {
    user: String,
    hash_hex: String,
}

impl ClientRecord {
    pub fn space(&self) -> OutcomeSpace {
        let moduli = self.outcome.predicates().iter().map(Predicate::modulus).collect();
        OutcomeSpace::new(moduli).expect("outcome moduli were validated")
    }

    pub fn to_json(&self) -> Result<String> {
        let wire = ClientRecordJson {
            user: self.user.clone(),
            account: self.account.clone(),
            salt_hex: hex::encode(&self.salt),
            n: self.params.rounds,
            epsilon: self.epsilon,
            k: self.params.k,
            hash_id: self.params.hash_id.clone(),
            predicates: self
                .outcome
                .predicates()
                .iter()
                .map(|p| PredicateJson {
                    residue: p.residue(),
                    modulus: p.modulus(),
                })
                .collect(),
        };
        let mut out = serde_json::to_string_pretty(&wire)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: ClientRecordJson = serde_json::from_str(text)?;
        let salt = hex::decode(&wire.salt_hex).map_err(|e| CashError::Record(e.to_string()))?;
        if wire.predicates.len() + 1 != wire.n {
            return Err(CashError::Record(format!(
                "n = {} but {} predicates stored",
                wire.n,
                wire.predicates.len()
            )));
        }
        if !(wire.epsilon.is_finite() && wire.epsilon >= 0.0) {
            return Err(CashError::Record("epsilon must be a finite non-negative number".into()));
        }
        let params = KdfParams {
            k: wire.k,
            rounds: wire.n,
            salt_bits: (salt.len() * 8) as u32,
            hash_id: wire.hash_id,
        };
        params.validate().map_err(|e| CashError::Record(e.to_string()))?;
        let predicates = wire
            .predicates
            .iter()
            .map(|p| Predicate::new(p.residue, p.modulus))
            .collect::<Result<Vec<_>>>()?;
        let moduli = predicates.iter().map(Predicate::modulus).collect();
        let space = OutcomeSpace::new(moduli)?;
        let outcome = Outcome::new(&space, predicates)?;
        Ok(Self {
            user: wire.user,
            account: wire.account,
            salt,
            outcome,
            params,
            epsilon: wire.epsilon,
        })
    }
}

impl ServerRecord {
    pub fn to_json(&self) -> Result<String> {
        let wire = ServerRecordJson {
            user: self.user.clone(),
            hash_hex: self.derived_hash.to_hex(),
        };
        let mut out = serde_json::to_string_pretty(&wire)?;
        out.push('\n');
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: ServerRecordJson = serde_json::from_str(text)?;
        Ok(Self {
            user: wire.user,
            derived_hash: Digest::from_hex(&wire.hash_hex)?,
        })
    }
}

/// Creates an account: draws a salt, selects predicates with `dist`, and
/// derives the hash sent to the server.
pub fn create_account<R: RngCore + ?Sized>(
    user: &str,
    account: &str,
    pwd: &str,
    dist: &StoppingDistribution,
    params: &KdfParams,
    rng: &mut R,
) -> Result<(ClientRecord, ServerRecord)> {
    create_account_with(&Sha256Hash, user, account, pwd, dist, params, rng)
}

pub fn create_account_with<H: RoundHash, R: RngCore + ?Sized>(
    hasher: &H,
    user: &str,
    account: &str,
    pwd: &str,
    dist: &StoppingDistribution,
    params: &KdfParams,
    rng: &mut R,
) -> Result<(ClientRecord, ServerRecord)> {
    params.validate()?;
    if hasher.id() != params.hash_id {
        return Err(CashError::UnsupportedHash(params.hash_id.clone()));
    }
    if dist.space().rounds() != params.rounds {
        return Err(CashError::LengthMismatch {
            expected: params.rounds,
            actual: dist.space().rounds(),
        });
    }
    let epsilon = dist.privacy_level();
    if !epsilon.is_finite() {
        return Err(CashError::InvalidParameter(
            "distribution assigns zero probability to some stopping time".into(),
        ));
    }
    let mut salt = vec![0u8; params.salt_bytes()];
    rng.try_fill_bytes(&mut salt)?;

    // only the digests that predicates inspect are needed for selection
    let chain = digest_chain_with(hasher, pwd.as_bytes(), &salt, params.k, params.rounds - 1);
    let outcome = sample_outcome(dist, &chain, rng);

    let client = ClientRecord {
        user: user.to_string(),
        account: account.to_string(),
        salt,
        outcome,
        params: params.clone(),
        epsilon,
    };
    let derived_hash = reproduce_with(hasher, &client, pwd);
    let server = ServerRecord {
        user: user.to_string(),
        derived_hash,
    };
    Ok((client, server))
}

/// Derives the password hash for `pwd_guess`, hashing only as many rounds as
/// the stored predicates require.
pub fn reproduce(record: &ClientRecord, pwd_guess: &str) -> Digest {
    reproduce_with(&Sha256Hash, record, pwd_guess)
}

pub fn reproduce_with<H: RoundHash + ?Sized>(
    hasher: &H,
    record: &ClientRecord,
    pwd_guess: &str,
) -> Digest {
    let k = record.params.k;
    let mut current = hash_round_with(hasher, &frame_input(pwd_guess.as_bytes(), &record.salt), k);
    for predicate in record.outcome.predicates() {
        if predicate.eval(current.as_bytes()) {
            return current;
        }
        current = hash_round_with(hasher, current.as_bytes(), k);
    }
    current
}

/// Constant-time comparison of a derived hash against the server record.
pub fn verify(server: &ServerRecord, derived: &Digest) -> bool {
    server.derived_hash.0.ct_eq(&derived.0).into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanism::exponential_distribution;
    use crate::outcome_space::stopping_time;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hash_round_definitions() {
        let x = b"some input";
        let once = Digest(Sha256::digest(x).into());
        assert_eq!(hash_round(x, 1), once);
        let twice = Digest(Sha256::digest(once.0).into());
        assert_eq!(hash_round(x, 2), twice);

        let mut input = b"pwd".to_vec();
        input.extend_from_slice(&[0u8; 16]);
        let mut reference: [u8; 32] = Sha256::digest(&input).into();
        for _ in 0..2 {
            reference = Sha256::digest(reference).into();
        }
        assert_eq!(hash_round(&input, 3).0, reference);
    }

    #[test]
    fn chain_recurrence_and_length() {
        let params = KdfParams::new(3, 2).unwrap();
        let chain = digest_chain(b"pw", &[1u8; 16], &params);
        assert_eq!(chain.len(), 2);
        assert_eq!(*chain.at(2), hash_round(chain.at(1).as_bytes(), 3));
    }

    #[test]
    fn chain_matches_plain_loop() {
        let params = KdfParams::new(4, 3).unwrap();
        let salt = [0u8; 16];
        let chain = digest_chain(b"correct horse", &salt, &params);

        let mut buf = b"correct horse".to_vec();
        buf.push(16);
        buf.extend_from_slice(&salt);
        let mut expected = Vec::new();
        let mut cur: Vec<u8> = buf;
        for _ in 0..3 {
            for _ in 0..4 {
                cur = Sha256::digest(&cur).to_vec();
            }
            expected.push(cur.clone());
        }
        let got: Vec<Vec<u8>> = chain.digests().iter().map(|d| d.0.to_vec()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn params_validation() {
        assert!(KdfParams::new(0, 3).is_err());
        assert!(KdfParams::new(1, 1).is_err());
        assert!(KdfParams::new(1, 3).unwrap().with_salt_bits(60).is_err());
        assert!(KdfParams::new(1, 3).unwrap().with_salt_bits(100).is_err());
        assert!(KdfParams::new(1, 3).unwrap().with_salt_bits(64).is_ok());
    }

    #[test]
    fn create_is_reproducible_and_consistent() {
        let space = OutcomeSpace::uniform(3).unwrap();
        let dist = exponential_distribution(1.0, &space).unwrap();
        let params = KdfParams::new(5, 3).unwrap();
        let a = create_account("alice", "site", "hunter2", &dist, &params, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        let b = create_account("alice", "site", "hunter2", &dist, &params, &mut ChaCha8Rng::seed_from_u64(1))
            .unwrap();
        assert_eq!(a, b);
        let (client, server) = a;
        assert_eq!(client.params.rounds, 3);
        assert_eq!(client.outcome.rounds(), 3);
        assert_eq!(client.salt.len(), 16);
        let derived = reproduce(&client, "hunter2");
        assert_eq!(derived, server.derived_hash);
        assert_eq!(derived, reproduce(&client, "hunter2"));
        assert!(verify(&server, &derived));
        assert!(!verify(&server, &reproduce(&client, "hunter3")));
    }

    #[test]
    fn flipped_bit_rejected() {
        let server = ServerRecord {
            user: "u".into(),
            derived_hash: hash_round(b"x", 1),
        };
        assert!(verify(&server, &server.derived_hash));
        for byte in 0..32 {
            for bit in 0..8 {
                let mut d = server.derived_hash;
                d.0[byte] ^= 1 << bit;
                assert!(!verify(&server, &d));
            }
        }
    }

    #[test]
    fn reproduce_hashes_k_times_stopping_time() {
        let space = OutcomeSpace::uniform(3).unwrap();
        let dist = exponential_distribution(0.5, &space).unwrap();
        let params = KdfParams::new(7, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let counter = CountingHash::new(Sha256Hash);
        for i in 0..50 {
            let pwd = format!("pw{i}");
            let (client, _) = create_account("u", "a", &pwd, &dist, &params, &mut rng).unwrap();
            for guess in [pwd.as_str(), "other"] {
                counter.reset();
                reproduce_with(&counter, &client, guess);
                let chain = digest_chain(guess.as_bytes(), &client.salt, &client.params);
                let stop = stopping_time(&client.outcome, &chain) as u64;
                assert_eq!(counter.calls(), 7 * stop);
            }
        }
    }

    #[test]
    fn record_json_round_trip() {
        let space = OutcomeSpace::uniform(3).unwrap();
        let dist = exponential_distribution(1.609, &space).unwrap();
        let params = KdfParams::new(2, 3).unwrap();
        let (client, server) =
            create_account("bob", "mail", "pw", &dist, &params, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let text = client.to_json().unwrap();
        assert!(text.ends_with('\n'));
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["user", "account", "salt_hex", "n", "epsilon", "k", "hash_id", "predicates"] {
            assert!(value.get(key).is_some(), "missing {key}");
        }
        assert_eq!(ClientRecord::from_json(&text).unwrap(), client);
        let stext = server.to_json().unwrap();
        assert_eq!(ServerRecord::from_json(&stext).unwrap(), server);
    }

    #[test]
    fn malformed_records_rejected() {
        let bad_n = r#"{"user":"u","account":"a","salt_hex":"00000000000000000000000000000000","n":4,"epsilon":1.0,"k":1,"hash_id":"sha256","predicates":[{"residue":0,"modulus":3},{"residue":1,"modulus":3}]}"#;
        assert!(ClientRecord::from_json(bad_n).is_err());
        let bad_hash = bad_n.replace("\"n\":4", "\"n\":3").replace("sha256", "md5");
        assert!(matches!(
            ClientRecord::from_json(&bad_hash),
            Err(CashError::Record(_))
        ));
        let bad_residue = bad_n.replace("\"n\":4", "\"n\":3").replace("\"residue\":1", "\"residue\":3");
        assert!(ClientRecord::from_json(&bad_residue).is_err());
    }
}
