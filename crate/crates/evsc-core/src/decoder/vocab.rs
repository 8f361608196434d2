//! Closed token vocabulary for role sequences: specials, role markers,
//! verb labels, and the scene noun-phrase words, with serialization of
//! annotations to id sequences and robust parsing of decoded output.

use std::collections::BTreeMap;

use crate::scene::{Role, VerbOntology, SCENE_VOCAB};

use super::{DecoderError, DecoderResult};

/// Reserved token ids.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;

const MARKER_BASE: usize = 3;
pub const MARKERS: [Role; 5] = [Role::Arg0, Role::Arg1, Role::Arg2, Role::ALoc, Role::AScn];

/// Token table: `PAD BOS EOS [Arg0] [Arg1] [Arg2] [ALoc] [AScn]`, then every
/// verb label in ontology order, then the scene word list. Ids are a pure
/// function of the ontology, so they are stable across runs.
#[derive(Debug, Clone)]
pub struct RoleVocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
    verb_base: usize,
    n_verbs: usize,
}

impl RoleVocab {
    pub fn from_ontology(ontology: &VerbOntology) -> Self {
        let mut tokens = vec!["<pad>".to_string(), "<bos>".to_string(), "<eos>".to_string()];
        for role in MARKERS {
            tokens.push(format!("[{}]", role.name()));
        }
        let verb_base = tokens.len();
        let verbs = ontology.all_names();
        let n_verbs = verbs.len();
        tokens.extend(verbs.iter().map(|v| v.to_string()));
        tokens.extend(SCENE_VOCAB.iter().map(|w| w.to_string()));
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        RoleVocab {
            tokens,
            index,
            verb_base,
            n_verbs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn marker_id(&self, role: Role) -> usize {
        MARKER_BASE + MARKERS.iter().position(|r| *r == role).unwrap()
    }

    /// The role a marker token stands for, if `id` is a marker.
    pub fn marker_role(&self, id: usize) -> Option<Role> {
        if (MARKER_BASE..MARKER_BASE + MARKERS.len()).contains(&id) {
            Some(MARKERS[id - MARKER_BASE])
        } else {
            None
        }
    }

    pub fn is_verb(&self, id: usize) -> bool {
        (self.verb_base..self.verb_base + self.n_verbs).contains(&id)
    }

    fn word_or_verb_id(&self, token: &str) -> DecoderResult<usize> {
        self.id(token).ok_or_else(|| DecoderError::OovToken {
            token: token.to_string(),
        })
    }

    /// Serializes an annotation to
    /// `BOS verb [Arg0] a0… [Arg1] a1… … EOS`, keeping only the roles the
    /// annotation fills, in canonical role order.
    pub fn serialize_target(&self, verb: &str, roles: &[(Role, &str)]) -> DecoderResult<Vec<usize>> {
        let mut out = vec![BOS, self.word_or_verb_id(verb)?];
        let mut ordered: Vec<&(Role, &str)> = roles.iter().collect();
        ordered.sort_by_key(|(role, _)| *role);
        for (role, phrase) in ordered {
            out.push(self.marker_id(*role));
            for word in phrase.split_whitespace() {
                out.push(self.word_or_verb_id(word)?);
            }
        }
        out.push(EOS);
        Ok(out)
    }

    /// Splits decoded tokens on role markers. Tokens before the first
    /// marker are ignored (the verb is given); for duplicate markers the
    /// first occurrence wins; specials never enter a phrase. Never fails.
    pub fn parse_decoded(&self, tokens: &[usize]) -> BTreeMap<Role, String> {
        let mut out = BTreeMap::new();
        let mut current: Option<(Role, Vec<&str>)> = None;
        for &id in tokens {
            if id >= self.tokens.len() {
                continue;
            }
            if let Some(role) = self.marker_role(id) {
                if let Some((r, words)) = current.take() {
                    out.entry(r).or_insert_with(|| words.join(" "));
                }
                current = Some((role, Vec::new()));
                continue;
            }
            if id == EOS {
                break;
            }
            if id == PAD || id == BOS {
                continue;
            }
            if let Some((_, words)) = current.as_mut() {
                words.push(self.token(id));
            }
        }
        if let Some((r, words)) = current {
            out.entry(r).or_insert_with(|| words.join(" "));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use crate::scene::{generate_dataset, DatasetConfig};

    use super::*;

    fn vocab() -> RoleVocab {
        RoleVocab::from_ontology(&VerbOntology::desk())
    }

    #[test]
    fn layout_is_specials_markers_verbs_words() {
        let v = vocab();
        assert_eq!(v.token(PAD), "<pad>");
        assert_eq!(v.token(BOS), "<bos>");
        assert_eq!(v.token(EOS), "<eos>");
        assert_eq!(v.token(3), "[Arg0]");
        assert_eq!(v.token(7), "[AScn]");
        assert!(v.is_verb(v.id("fall").unwrap()));
        assert!(v.is_verb(v.id("munch").unwrap()));
        assert!(v.id("red").is_some());
        assert_eq!(v.len(), 3 + 5 + 24 + SCENE_VOCAB.len());
    }

    #[test]
    fn verb_only_annotation_serializes_to_three_tokens() {
        let v = vocab();
        let seq = v.serialize_target("idle", &[]).unwrap();
        assert_eq!(seq, vec![BOS, v.id("idle").unwrap(), EOS]);
    }

    #[test]
    fn roles_serialize_in_canonical_order_with_markers() {
        let v = vocab();
        let seq = v
            .serialize_target("fall", &[(Role::ALoc, "near wall"), (Role::Arg0, "red block")])
            .unwrap();
        let want = vec![
            BOS,
            v.id("fall").unwrap(),
            v.marker_id(Role::Arg0),
            v.id("red").unwrap(),
            v.id("block").unwrap(),
            v.marker_id(Role::ALoc),
            v.id("near").unwrap(),
            v.id("wall").unwrap(),
            EOS,
        ];
        assert_eq!(seq, want);
    }

    #[test]
    fn unknown_words_are_rejected() {
        let v = vocab();
        let err = v
            .serialize_target("fall", &[(Role::Arg0, "purple zeppelin")])
            .unwrap_err();
        assert!(matches!(err, DecoderError::OovToken { .. }));
    }

    #[test]
    fn parse_splits_on_markers() {
        let v = vocab();
        let toks = vec![
            v.marker_id(Role::Arg0),
            v.id("red").unwrap(),
            v.id("block").unwrap(),
            v.marker_id(Role::Arg1),
            v.id("ball").unwrap(),
        ];
        let parsed = v.parse_decoded(&toks);
        assert_eq!(parsed[&Role::Arg0], "red block");
        assert_eq!(parsed[&Role::Arg1], "ball");
    }

    #[test]
    fn parse_of_empty_or_markerless_output_is_empty() {
        let v = vocab();
        assert!(v.parse_decoded(&[]).is_empty());
        let toks = vec![BOS, v.id("fall").unwrap(), v.id("red").unwrap(), EOS];
        assert!(v.parse_decoded(&toks).is_empty());
    }

    #[test]
    fn duplicate_markers_keep_the_first_phrase() {
        let v = vocab();
        let toks = vec![
            v.marker_id(Role::Arg0),
            v.id("red").unwrap(),
            v.marker_id(Role::Arg0),
            v.id("blue").unwrap(),
        ];
        let parsed = v.parse_decoded(&toks);
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[&Role::Arg0], "red");
    }

    #[test]
    fn serialize_then_parse_round_trips_random_annotations() {
        let v = vocab();
        let mut rng = ChaCha8Rng::seed_from_u64(500);
        let words: Vec<&str> = SCENE_VOCAB.to_vec();
        for _ in 0..500 {
            let mut roles: Vec<(Role, String)> = Vec::new();
            let mut available = vec![Role::Arg0, Role::Arg1, Role::Arg2, Role::ALoc, Role::AScn];
            available.shuffle(&mut rng);
            let n = rng.gen_range(0..=available.len());
            for role in available.into_iter().take(n) {
                let len = rng.gen_range(1..=3);
                let phrase: Vec<&str> = (0..len)
                    .map(|_| *words.choose(&mut rng).unwrap())
                    .collect();
                roles.push((role, phrase.join(" ")));
            }
            let borrowed: Vec<(Role, &str)> = roles
                .iter()
                .map(|(r, p)| (*r, p.as_str()))
                .collect();
            let seq = v.serialize_target("strike", &borrowed).unwrap();
            let parsed = v.parse_decoded(&seq);
            assert_eq!(parsed.len(), roles.len());
            for (role, phrase) in &roles {
                assert_eq!(&parsed[role], phrase);
            }
        }
    }

    #[test]
    fn generated_annotations_all_serialize() {
        let clips = generate_dataset(
            &DatasetConfig {
                clips_per_verb: 5,
                ..DatasetConfig::desk()
            },
            9,
        )
        .unwrap();
        let v = vocab();
        for clip in &clips {
            let roles: Vec<(Role, &str)> = clip
                .annotation
                .roles
                .iter()
                .map(|r| (r.role, r.phrase.as_str()))
                .collect();
            let seq = v.serialize_target(&clip.annotation.verb, &roles).unwrap();
            assert!(seq.len() >= 3);
            assert!(seq.len() <= 24, "sequence too long: {}", seq.len());
        }
    }
}
