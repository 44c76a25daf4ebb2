use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::dialog::{serialize_state_aligned, DialogState, Edit, LevenshteinState, Schema, TokenRole};

/// What the noise operator did to one input token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Corruption {
    Keep,
    Delete,
    Mask,
}

/// Per-token record of a corruption, aligned with the original input.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionMask(pub Vec<Corruption>);

impl CorruptionMask {
    pub fn all_keep(len: usize) -> Self {
        Self(vec![Corruption::Keep; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn corrupted(&self) -> usize {
        self.0.iter().filter(|c| **c != Corruption::Keep).count()
    }
}

/// Corrupts each token independently with probability `alpha`; a corrupted
/// token is deleted or replaced by `mask_token` with equal probability.
pub fn corrupt_tokens<T: Clone, R: Rng + ?Sized>(
    tokens: &[T],
    mask_token: &T,
    alpha: f64,
    rng: &mut R,
) -> (Vec<T>, CorruptionMask) {
    let mut out = Vec::with_capacity(tokens.len());
    let mut mask = Vec::with_capacity(tokens.len());
    for t in tokens {
        if rng.gen::<f64>() < alpha {
            if rng.gen::<bool>() {
                mask.push(Corruption::Delete);
            } else {
                mask.push(Corruption::Mask);
                out.push(mask_token.clone());
            }
        } else {
            mask.push(Corruption::Keep);
            out.push(t.clone());
        }
    }
    (out, CorruptionMask(mask))
}

/// Replaces each token by `mask_token` with probability `p` (no deletion).
pub fn mask_tokens<T: Clone, R: Rng + ?Sized>(tokens: &[T], mask_token: &T, p: f64, rng: &mut R) -> (Vec<T>, usize) {
    let mut masked = 0;
    let out = tokens
        .iter()
        .map(|t| {
            if rng.gen::<f64>() < p {
                masked += 1;
                mask_token.clone()
            } else {
                t.clone()
            }
        })
        .collect();
    (out, masked)
}

/// The Levenshtein target of state denoising: every slot with at least one
/// corrupted token, restored to its full original value, in schema order.
/// A corrupted domain tag pulls in all slots of that domain.
pub fn denoise_state_target(
    schema: &Schema,
    prev_state: &DialogState,
    mask: &CorruptionMask,
) -> Result<LevenshteinState, CorpusError> {
    let aligned = serialize_state_aligned(schema, prev_state)?;
    if aligned.len() != mask.len() {
        return Err(CorpusError::MaskAlignment { expected: aligned.len(), got: mask.len() });
    }
    let mut hit_domains = BTreeSet::new();
    let mut hit_slots = BTreeSet::new();
    for ((_, role), c) in aligned.iter().zip(&mask.0) {
        if *c == Corruption::Keep {
            continue;
        }
        match role {
            TokenRole::DomainTag(d) => {
                hit_domains.insert(d.as_str());
            }
            TokenRole::Slot { domain, slot } => {
                hit_slots.insert((domain.as_str(), slot.as_str()));
            }
        }
    }
    let edits = prev_state
        .canonical_entries(schema)?
        .into_iter()
        .filter(|(d, s, _)| hit_domains.contains(d) || hit_slots.contains(&(*d, *s)))
        .map(|(d, s, v)| Edit::set(d, s, v))
        .collect();
    Ok(LevenshteinState::new(edits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialog::{diff_state, serialize_state};
    use crate::rng::RngStreams;
    use Corruption::{Delete, Keep, Mask};

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn alpha_zero_is_identity() {
        let t = words("a b c d");
        let (out, mask) = corrupt_tokens(&t, &"<mask>".to_string(), 0.0, &mut RngStreams::new(1).stream("n"));
        assert_eq!(out, t);
        assert_eq!(mask, CorruptionMask::all_keep(4));
    }

    #[test]
    fn alpha_one_keeps_nothing() {
        let t = words("a b c d e f g h i j");
        let m = "<mask>".to_string();
        let (out, mask) = corrupt_tokens(&t, &m, 1.0, &mut RngStreams::new(1).stream("n"));
        assert!(mask.0.iter().all(|c| *c != Keep));
        let masked = mask.0.iter().filter(|c| **c == Mask).count();
        assert_eq!(out.len(), masked);
        assert!(out.iter().all(|t| *t == m));
    }

    #[test]
    fn denoise_all_keep_is_empty() {
        let schema = Schema::default_synthetic();
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        let n = serialize_state(&schema, &st).unwrap().len();
        assert!(denoise_state_target(&schema, &st, &CorruptionMask::all_keep(n)).unwrap().is_empty());
    }

    #[test]
    fn denoise_restores_full_value() {
        // [taxi] destination = stevenage train station ;  with the slot name
        // masked and "train" deleted.
        let schema = Schema::default_synthetic();
        let mut st = DialogState::new();
        st.set("taxi", "destination", "stevenage train station");
        let mask = CorruptionMask(vec![Keep, Mask, Keep, Keep, Delete, Keep, Keep]);
        let target = denoise_state_target(&schema, &st, &mask).unwrap();
        assert_eq!(target.edits, vec![Edit::set("taxi", "destination", "stevenage train station")]);
    }

    #[test]
    fn denoise_names_only_hit_slot() {
        let schema = Schema::default_synthetic();
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        st.set("hotel", "stars", "4");
        // [hotel] area = north ; stars = 4 ;
        let mask = CorruptionMask(vec![Keep, Keep, Keep, Keep, Keep, Keep, Keep, Mask, Keep]);
        let target = denoise_state_target(&schema, &st, &mask).unwrap();
        assert_eq!(target.edits, vec![Edit::set("hotel", "stars", "4")]);
    }

    #[test]
    fn corrupted_tag_pulls_whole_domain() {
        let schema = Schema::default_synthetic();
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        st.set("hotel", "stars", "4");
        st.set("taxi", "leaveat", "10:15");
        let n = serialize_state(&schema, &st).unwrap().len();
        let mut m = vec![Keep; n];
        m[0] = Delete;
        let target = denoise_state_target(&schema, &st, &CorruptionMask(m)).unwrap();
        assert_eq!(target.len(), 2);
        assert!(target.edits.iter().all(|e| e.domain == "hotel"));
    }

    #[test]
    fn full_corruption_recovers_everything() {
        let schema = Schema::default_synthetic();
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        st.set("taxi", "destination", "city station");
        let n = serialize_state(&schema, &st).unwrap().len();
        let target = denoise_state_target(&schema, &st, &CorruptionMask(vec![Mask; n])).unwrap();
        assert_eq!(target, diff_state(&schema, &DialogState::new(), &st));
    }

    #[test]
    fn misaligned_mask_is_an_error() {
        let schema = Schema::default_synthetic();
        let mut st = DialogState::new();
        st.set("hotel", "area", "north");
        assert!(matches!(
            denoise_state_target(&schema, &st, &CorruptionMask::all_keep(3)),
            Err(CorpusError::MaskAlignment { .. })
        ));
    }
}
