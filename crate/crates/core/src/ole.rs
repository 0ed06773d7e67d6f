//! Oblivious linear function evaluation.
//!
//! [`f_ole`] is the ideal functionality: a trusted broker that hands `a*c + b`
//! to the receiver. [`ole_plus`] builds the enhanced protocol from two calls to
//! that broker:
//!
//! 1. the receiver, holding `c`, picks a mask `r` and feeds `(c^-1, r)` into the
//!    first call; the sender feeds a random `u` and learns `t = c^-1 * u + r`;
//! 2. the sender feeds `(t + a, b - u)` into the second call, the receiver
//!    feeds `c` and learns `k = a*c + b + r*c`, then outputs `k - r*c`.
//!
//! The sender sees only `t`, which is uniform for a uniform `r`.

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldElement, PrimeField};
use crate::wire;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OleError {
    #[error("sender and receiver inputs live in different fields")]
    FieldMismatch,
    #[error("the receiver input must be nonzero")]
    ReceiverInputZero,
    #[error("functionality aborted in session {session}: {reason}")]
    ProtocolAbort { session: u64, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OleSenderInput {
    a: FieldElement,
    b: FieldElement,
}

impl OleSenderInput {
    pub fn new(a: FieldElement, b: FieldElement) -> Result<Self, OleError> {
        if a.field() != b.field() {
            return Err(OleError::FieldMismatch);
        }
        Ok(OleSenderInput { a, b })
    }

    pub fn a(&self) -> &FieldElement {
        &self.a
    }

    pub fn b(&self) -> &FieldElement {
        &self.b
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OleReceiverInput {
    c: FieldElement,
}

impl OleReceiverInput {
    pub fn new(c: FieldElement) -> Self {
        OleReceiverInput { c }
    }

    pub fn c(&self) -> &FieldElement {
        &self.c
    }
}

/// The ideal functionality: the receiver learns `a*c + b`, the sender nothing.
pub fn f_ole(sender: &OleSenderInput, receiver: &OleReceiverInput) -> Result<FieldElement, OleError> {
    if sender.a.field() != receiver.c.field() {
        return Err(OleError::FieldMismatch);
    }
    Ok(&sender.a * &receiver.c + &sender.b)
}

/// Which of the two functionality calls inside [`ole_plus`] is being made.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OleStage {
    Mask,
    Combine,
}

/// Raw values submitted to the functionality in one call, before validation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FunctionalityCall {
    pub session: u64,
    pub stage: OleStage,
    pub sender_a: BigUint,
    pub sender_b: BigUint,
    pub receiver_c: BigUint,
}

/// Lets tamper tests rewrite what a party submits to the functionality.
pub trait OleInterceptor {
    fn intercept(&mut self, call: &mut FunctionalityCall);
}

/// Leaves every call untouched.
pub struct Honest;

impl OleInterceptor for Honest {
    fn intercept(&mut self, _call: &mut FunctionalityCall) {}
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub session: u64,
    pub direction: String,
    pub label: String,
    #[serde(with = "wire::decimal")]
    pub value: BigUint,
}

/// Everything one [`ole_plus`] run produced, for tests and debugging.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OlePlusRun {
    pub output: FieldElement,
    /// `t`, the only value the sender receives.
    pub sender_view: FieldElement,
    /// `k = a*c + b + r*c`, before the receiver strips its mask.
    pub receiver_k: FieldElement,
    pub receiver_mask: FieldElement,
    pub transcript: Vec<TranscriptEntry>,
}

impl OlePlusRun {
    /// One JSON object per line.
    pub fn transcript_jsonl(&self) -> String {
        self.transcript
            .iter()
            .map(|e| serde_json::to_string(e).expect("transcript entries serialize") + "\n")
            .collect()
    }
}

fn call_functionality(
    field: &PrimeField,
    mut call: FunctionalityCall,
    hook: &mut dyn OleInterceptor,
) -> Result<FieldElement, OleError> {
    hook.intercept(&mut call);
    let abort = |what: &str| OleError::ProtocolAbort {
        session: call.session,
        reason: format!("{what} is not a canonical field element in the {:?} call", call.stage),
    };
    let a = field.canonical(call.sender_a.clone()).map_err(|_| abort("sender input a"))?;
    let b = field.canonical(call.sender_b.clone()).map_err(|_| abort("sender input b"))?;
    let c = field.canonical(call.receiver_c.clone()).map_err(|_| abort("receiver input c"))?;
    Ok(a * c + b)
}

/// Runs the enhanced protocol with independent randomness for each side.
pub fn ole_plus_session<S, R>(
    session: u64,
    sender: &OleSenderInput,
    receiver: &OleReceiverInput,
    sender_rng: &mut S,
    receiver_rng: &mut R,
    hook: &mut dyn OleInterceptor,
) -> Result<OlePlusRun, OleError>
where
    S: Rng + ?Sized,
    R: Rng + ?Sized,
{
    let field = receiver.c.field();
    let r = field.random(receiver_rng);
    let u = field.random(sender_rng);
    ole_plus_with_masks(session, sender, receiver, &u, &r, hook)
}

/// The protocol with the sender's `u` and the receiver's `r` supplied by the caller.
pub fn ole_plus_with_masks(
    session: u64,
    sender: &OleSenderInput,
    receiver: &OleReceiverInput,
    u: &FieldElement,
    r: &FieldElement,
    hook: &mut dyn OleInterceptor,
) -> Result<OlePlusRun, OleError> {
    let field = receiver.c.field().clone();
    if sender.a.field() != &field || u.field() != &field || r.field() != &field {
        return Err(OleError::FieldMismatch);
    }
    let c_inv = receiver.c.inv().map_err(|_| OleError::ReceiverInputZero)?;
    let mut transcript = Vec::new();
    let mut log = |direction: &str, label: &str, value: &FieldElement| {
        transcript.push(TranscriptEntry {
            session,
            direction: direction.to_string(),
            label: label.to_string(),
            value: value.value().clone(),
        });
    };

    log("receiver->F", "c_inv", &c_inv);
    log("receiver->F", "r", r);
    log("sender->F", "u", u);
    let t = call_functionality(
        &field,
        FunctionalityCall {
            session,
            stage: OleStage::Mask,
            sender_a: c_inv.into_value(),
            sender_b: r.value().clone(),
            receiver_c: u.value().clone(),
        },
        hook,
    )?;
    log("F->sender", "t", &t);

    let masked_a = &t + &sender.a;
    let masked_b = &sender.b - u;
    log("sender->F", "t_plus_a", &masked_a);
    log("sender->F", "b_minus_u", &masked_b);
    log("receiver->F", "c", &receiver.c);
    let k = call_functionality(
        &field,
        FunctionalityCall {
            session,
            stage: OleStage::Combine,
            sender_a: masked_a.into_value(),
            sender_b: masked_b.into_value(),
            receiver_c: receiver.c.value().clone(),
        },
        hook,
    )?;
    log("F->receiver", "k", &k);
    let output = &k - &(r * &receiver.c);
    log("receiver", "output", &output);

    Ok(OlePlusRun { output, sender_view: t, receiver_k: k, receiver_mask: r.clone(), transcript })
}

/// [`ole_plus_session`] with one RNG for both sides and no interception.
pub fn ole_plus<R: Rng + ?Sized>(
    sender: &OleSenderInput,
    receiver: &OleReceiverInput,
    rng: &mut R,
) -> Result<FieldElement, OleError> {
    let mut sender_rng = rand_chacha::ChaCha20Rng::from_rng(&mut *rng).expect("seeding from an RNG");
    ole_plus_session(0, sender, receiver, &mut sender_rng, rng, &mut Honest).map(|run| run.output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_chacha::ChaCha20Rng;

    fn f13() -> PrimeField {
        PrimeField::new(BigUint::from(13u8)).unwrap()
    }

    fn sender(f: &PrimeField, a: u64, b: u64) -> OleSenderInput {
        OleSenderInput::new(f.element(a), f.element(b)).unwrap()
    }

    #[test]
    fn ideal_functionality_examples() {
        let f = f13();
        let c = OleReceiverInput::new(f.element(2u8));
        assert_eq!(f_ole(&sender(&f, 3, 5), &c).unwrap(), f.element(11u8));
        assert!(f_ole(&sender(&f, 0, 0), &c).unwrap().is_zero());
        let zero = OleReceiverInput::new(f.zero());
        assert_eq!(f_ole(&sender(&f, 3, 5), &zero).unwrap(), f.element(5u8));
        let other = PrimeField::new(BigUint::from(17u8)).unwrap();
        assert_eq!(
            f_ole(&sender(&f, 3, 5), &OleReceiverInput::new(other.one())),
            Err(OleError::FieldMismatch)
        );
    }

    #[test]
    fn enhanced_protocol_examples() {
        let f = f13();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..50 {
            let out = ole_plus(&sender(&f, 3, 5), &OleReceiverInput::new(f.element(2u8)), &mut rng);
            assert_eq!(out.unwrap(), f.element(11u8));
        }
        for x in 1u64..13 {
            let out = ole_plus(&sender(&f, 1, 0), &OleReceiverInput::new(f.element(x)), &mut rng);
            assert_eq!(out.unwrap(), f.element(x));
        }
        let zero = OleReceiverInput::new(f.zero());
        assert_eq!(ole_plus(&sender(&f, 3, 5), &zero, &mut rng), Err(OleError::ReceiverInputZero));
    }

    #[test]
    fn receiver_k_minus_output_is_mask_times_c() {
        let f = f13();
        let mut s = ChaCha20Rng::seed_from_u64(2);
        let mut r = ChaCha20Rng::seed_from_u64(3);
        let c = f.element(6u8);
        let run = ole_plus_session(9, &sender(&f, 4, 7), &OleReceiverInput::new(c.clone()), &mut s, &mut r, &mut Honest)
            .unwrap();
        assert_eq!(&run.receiver_k - &run.output, &run.receiver_mask * &c);
        let lines = run.transcript_jsonl();
        assert_eq!(lines.lines().count(), run.transcript.len());
        assert!(lines.lines().all(|l| l.contains("\"session\":9")));
        // the sender's only incoming message is t
        let to_sender: Vec<_> = run.transcript.iter().filter(|e| e.direction == "F->sender").collect();
        assert_eq!(to_sender.len(), 1);
        assert_eq!(to_sender[0].value, *run.sender_view.value());
    }

    #[test]
    fn sender_view_is_uniform_over_receiver_masks() {
        let f = PrimeField::new(BigUint::from(101u8)).unwrap();
        let s = sender(&f, 17, 33);
        let rc = OleReceiverInput::new(f.element(45u8));
        let u = f.element(71u8);
        let mut counts = [0u32; 101];
        for r in 0u8..101 {
            let run = ole_plus_with_masks(0, &s, &rc, &u, &f.element(r), &mut Honest).unwrap();
            assert_eq!(run.output, f_ole(&s, &rc).unwrap());
            let t: usize = run.sender_view.value().try_into().unwrap();
            counts[t] += 1;
        }
        assert!(counts.iter().all(|&c| c == 1));
    }

    struct Corrupt;

    impl OleInterceptor for Corrupt {
        fn intercept(&mut self, call: &mut FunctionalityCall) {
            if call.stage == OleStage::Combine {
                call.sender_b = BigUint::from(1000u32);
            }
        }
    }

    #[test]
    fn malformed_inputs_abort() {
        let f = f13();
        let mut s = ChaCha20Rng::seed_from_u64(4);
        let mut r = ChaCha20Rng::seed_from_u64(5);
        let err = ole_plus_session(3, &sender(&f, 1, 1), &OleReceiverInput::new(f.one()), &mut s, &mut r, &mut Corrupt)
            .unwrap_err();
        assert!(matches!(err, OleError::ProtocolAbort { session: 3, .. }));
    }

    proptest! {
        #[test]
        fn matches_ideal_functionality(a in any::<u64>(), b in any::<u64>(), c in 1u64.., seed in any::<u64>()) {
            let f = PrimeField::new((BigUint::from(1u8) << 127u32) - 1u8).unwrap();
            let s = sender(&f, a, b);
            let rc = OleReceiverInput::new(f.element(c));
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            prop_assert_eq!(ole_plus(&s, &rc, &mut rng).unwrap(), f_ole(&s, &rc).unwrap());
        }
    }
}
