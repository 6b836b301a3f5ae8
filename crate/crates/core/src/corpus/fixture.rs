//! Deterministic synthetic corpora for desk-scale experiments.
//!
//! Sentences are built from short clauses around a frame-evoking word.
//! Role fillers are noun phrases whose nouns are specific to the clause's
//! frame, so the frame of an ambiguous lexical unit is recoverable from
//! context. Some lexical units are particle verbs (`give up`) that may be
//! split around a role filler, yielding two-piece predicates; some role
//! fillers are themselves nominal predicates, yielding spans that are both
//! predicate and role.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    AnnotatedSentence, FrameOntology, FrameTuple, Lemmatizer, Predicate, RoleAssignment,
    RuleLemmatizer, Span,
};

#[derive(Clone, Debug)]
pub struct FixtureOptions {
    /// Number of frames in the generated ontology (clamped to 2..=12).
    pub n_frames: usize,
    pub max_roles_per_tuple: usize,
    pub discontinuous_rate: f64,
    pub shared_span_rate: f64,
    pub two_clause_rate: f64,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        FixtureOptions {
            n_frames: 6,
            max_roles_per_tuple: 2,
            discontinuous_rate: 0.2,
            shared_span_rate: 0.2,
            two_clause_rate: 0.4,
        }
    }
}

const FRAME_NAMES: &[&str] = &[
    "Social_event",
    "Discussion",
    "Commerce_buy",
    "Motion",
    "Giving",
    "Quitting",
    "Perception",
    "Statement",
    "Arriving",
    "Creating",
    "Ingestion",
    "Removing",
];

const ROLE_POOL: &[&str] = &[
    "Agent",
    "Theme",
    "Goal",
    "Source",
    "Time",
    "Place",
    "Manner",
    "Recipient",
    "Topic",
    "Speaker",
];

const NOUNS: &[&str] = &[
    "cat", "dog", "car", "book", "plan", "tree", "lamp", "chair", "song", "ship", "road", "cake",
    "desk", "door", "hill", "coin", "card", "bird", "ring", "boat", "cup", "hat", "pen", "bag",
];

const ADJECTIVES: &[&str] = &["red", "big", "old", "new", "small", "green"];
const DETERMINERS: &[&str] = &["the", "a"];
const PREPOSITIONS: &[&str] = &["to", "with", "on"];
const ADVERBS: &[&str] = &["then", "today", "often", "here"];

/// Single-word verbal lexical units.
const VERBS: &[&str] = &[
    "walk", "talk", "visit", "open", "paint", "start", "climb", "help", "play", "call", "jump",
    "cook",
];
/// Nominal lexical units; these may also fill roles of other predicates.
const NOMINALS: &[&str] = &[
    "meeting",
    "purchase",
    "arrival",
    "journey",
    "gift",
    "statement",
];
/// Particle verbs, usable contiguously or split around a role filler.
const PARTICLE_VERBS: &[(&str, &str)] = &[
    ("give", "up"),
    ("pick", "up"),
    ("turn", "off"),
    ("look", "over"),
];
/// Frame-evoking verbs deliberately left out of the lexicon.
const UNLISTED: &[&str] = &["ponder", "wander"];

#[derive(Clone, Debug)]
enum Form {
    Verb(&'static str),
    Nominal(&'static str),
    Particle(&'static str, &'static str),
}

#[derive(Clone, Debug)]
struct Lexeme {
    form: Form,
    frames: Vec<usize>,
}

struct World {
    ontology: FrameOntology,
    frame_names: Vec<String>,
    frame_roles: Vec<Vec<String>>,
    verbs: Vec<Lexeme>,
    nominals: Vec<Lexeme>,
    particles: Vec<Lexeme>,
}

impl World {
    fn build(rng: &mut ChaCha8Rng, options: &FixtureOptions) -> World {
        let n_frames = options.n_frames.clamp(2, FRAME_NAMES.len());
        let frame_names: Vec<String> = FRAME_NAMES[..n_frames]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let frame_roles: Vec<Vec<String>> = (0..n_frames)
            .map(|_| {
                let k = rng.gen_range(2..=4);
                let mut picked: Vec<usize> =
                    rand::seq::index::sample(rng, ROLE_POOL.len(), k).into_vec();
                picked.sort_unstable();
                picked
                    .into_iter()
                    .map(|i| ROLE_POOL[i].to_string())
                    .collect()
            })
            .collect();

        let pick_frames = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            let first = rng.gen_range(0..n_frames);
            let mut frames = vec![first];
            if rng.gen_bool(0.4) {
                let second = (first + rng.gen_range(1..n_frames)) % n_frames;
                frames.push(second);
            }
            frames.sort_unstable();
            frames
        };

        let verbs: Vec<Lexeme> = VERBS
            .iter()
            .map(|&v| Lexeme {
                form: Form::Verb(v),
                frames: pick_frames(rng),
            })
            .collect();
        let nominals: Vec<Lexeme> = NOMINALS
            .iter()
            .map(|&n| Lexeme {
                form: Form::Nominal(n),
                frames: if n == "meeting" {
                    vec![0, 1]
                } else {
                    pick_frames(rng)
                },
            })
            .collect();
        let particles: Vec<Lexeme> = PARTICLE_VERBS
            .iter()
            .map(|&(v, p)| Lexeme {
                form: Form::Particle(v, p),
                frames: vec![rng.gen_range(0..n_frames)],
            })
            .collect();
        let unlisted: Vec<Lexeme> = UNLISTED
            .iter()
            .map(|&v| Lexeme {
                form: Form::Verb(v),
                frames: vec![rng.gen_range(0..n_frames)],
            })
            .collect();

        let lexicon = verbs.iter().chain(&nominals).chain(&particles).map(|lex| {
            let key = match lex.form {
                Form::Verb(v) | Form::Nominal(v) => v.to_string(),
                Form::Particle(v, p) => format!("{v} {p}"),
            };
            (
                key,
                lex.frames.iter().map(|&f| frame_names[f].clone()).collect(),
            )
        });
        let ontology = FrameOntology::new(
            frame_names.iter().cloned().zip(frame_roles.iter().cloned()),
            lexicon,
        )
        .expect("generated ontology is consistent");

        let mut verbs = verbs;
        verbs.extend(unlisted);
        World {
            ontology,
            frame_names,
            frame_roles,
            verbs,
            nominals,
            particles,
        }
    }

    fn nouns_for(&self, frame: usize) -> Vec<&'static str> {
        let n = self.frame_names.len();
        NOUNS
            .iter()
            .enumerate()
            .filter(|(i, _)| i % n == frame)
            .map(|(_, w)| *w)
            .collect()
    }
}

#[derive(Clone, Copy, Default)]
struct ClausePlan {
    discontinuous: bool,
    shared: bool,
}

struct SentenceBuilder<'w> {
    world: &'w World,
    tokens: Vec<String>,
    tuples: Vec<FrameTuple>,
}

impl<'w> SentenceBuilder<'w> {
    fn push(&mut self, word: impl Into<String>) -> usize {
        self.tokens.push(word.into());
        self.tokens.len() - 1
    }

    fn noun_phrase(&mut self, rng: &mut ChaCha8Rng, frame: usize) -> Span {
        let nouns = self.world.nouns_for(frame);
        let noun = *nouns.choose(rng).expect("every frame has nouns");
        let start = self.tokens.len();
        if rng.gen_bool(0.7) {
            self.push(*DETERMINERS.choose(rng).unwrap());
        }
        if rng.gen_bool(0.35) {
            self.push(*ADJECTIVES.choose(rng).unwrap());
        }
        let noun = if rng.gen_bool(0.3) {
            format!("{noun}s")
        } else {
            noun.to_string()
        };
        let end = self.push(noun);
        Span::new(start, end)
    }

    fn verb_form(rng: &mut ChaCha8Rng, verb: &str) -> String {
        match (verb, rng.gen_range(0..3)) {
            (_, 0) => verb.to_string(),
            (_, 1) => format!("{verb}s"),
            ("give", _) => "gave".to_string(),
            _ => format!("{verb}ed"),
        }
    }

    fn clause(&mut self, rng: &mut ChaCha8Rng, plan: ClausePlan, max_roles: usize) {
        let world = self.world;
        let lexeme = if plan.discontinuous {
            world.particles.choose(rng).unwrap().clone()
        } else {
            match rng.gen_range(0..10) {
                0..=5 => world.verbs.choose(rng).unwrap().clone(),
                6..=7 => world.nominals.choose(rng).unwrap().clone(),
                _ => world.particles.choose(rng).unwrap().clone(),
            }
        };
        let frame = *lexeme.frames.choose(rng).unwrap();
        let frame_roles = &world.frame_roles[frame];
        let max_k = max_roles.min(frame_roles.len());
        let min_k = usize::from(plan.shared);
        let k = rng.gen_range(min_k..=max_k.max(min_k));
        let mut role_ids: Vec<usize> =
            rand::seq::index::sample(rng, frame_roles.len(), k).into_vec();
        role_ids.sort_unstable();
        let mut roles: Vec<String> = role_ids
            .into_iter()
            .map(|i| frame_roles[i].clone())
            .collect();
        roles.reverse(); // popped from the back in frame order

        let mut assignments = Vec::new();
        if rng.gen_bool(0.25) {
            self.push(*ADVERBS.choose(rng).unwrap());
        }
        if !plan.shared && !roles.is_empty() && rng.gen_bool(0.6) {
            let name = roles.pop().unwrap();
            let span = self.noun_phrase(rng, frame);
            assignments.push(RoleAssignment::new(name, span));
        }

        let predicate = match lexeme.form {
            Form::Verb(v) => {
                let i = self.push(Self::verb_form(rng, v));
                Predicate::single(Span::new(i, i))
            }
            Form::Nominal(n) => {
                let i = self.push(if rng.gen_bool(0.3) {
                    format!("{n}s")
                } else {
                    n.to_string()
                });
                Predicate::single(Span::new(i, i))
            }
            Form::Particle(v, p) => {
                let head = self.push(Self::verb_form(rng, v));
                if plan.discontinuous {
                    if let Some(name) = roles.pop() {
                        let span = self.noun_phrase(rng, frame);
                        assignments.push(RoleAssignment::new(name, span));
                    } else {
                        self.push("it");
                    }
                    let particle = self.push(p);
                    Predicate::new(vec![Span::new(head, head), Span::new(particle, particle)])
                } else {
                    let particle = self.push(p);
                    Predicate::single(Span::new(head, particle))
                }
            }
        };

        let mut shared_pending = plan.shared;
        while let Some(name) = roles.pop() {
            if rng.gen_bool(0.5) {
                self.push(*PREPOSITIONS.choose(rng).unwrap());
            }
            let span = if shared_pending {
                shared_pending = false;
                let nominal = world.nominals.choose(rng).unwrap().clone();
                let Form::Nominal(word) = nominal.form else {
                    unreachable!()
                };
                let i = self.push(if rng.gen_bool(0.5) {
                    format!("{word}s")
                } else {
                    word.to_string()
                });
                let span = Span::new(i, i);
                let nominal_frame = *nominal.frames.choose(rng).unwrap();
                self.tuples.push(FrameTuple::new(
                    Predicate::single(span),
                    world.frame_names[nominal_frame].clone(),
                    Vec::new(),
                ));
                span
            } else {
                self.noun_phrase(rng, frame)
            };
            assignments.push(RoleAssignment::new(name, span));
        }
        if rng.gen_bool(0.2) {
            self.push(*ADVERBS.choose(rng).unwrap());
        }
        // Keep the clause's own tuple ahead of any nominal filler it introduced.
        let insert_at = if plan.shared {
            self.tuples.len() - 1
        } else {
            self.tuples.len()
        };
        self.tuples.insert(
            insert_at,
            FrameTuple::new(predicate, world.frame_names[frame].clone(), assignments),
        );
    }
}

/// Generates an ontology and `n_sentences` annotated sentences. Output is a
/// pure function of `(seed, n_sentences, options)`. With at least ten
/// sentences the corpus is guaranteed to contain a two-piece predicate and a
/// span that is both a predicate and a role.
pub fn generate_fixture(
    seed: u64,
    n_sentences: usize,
    options: &FixtureOptions,
) -> (FrameOntology, Vec<AnnotatedSentence>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = World::build(&mut rng, options);
    let lemmatizer = RuleLemmatizer;
    let mut sentences = Vec::with_capacity(n_sentences);
    for index in 0..n_sentences {
        let mut builder = SentenceBuilder {
            world: &world,
            tokens: Vec::new(),
            tuples: Vec::new(),
        };
        let clauses = if rng.gen_bool(options.two_clause_rate) {
            2
        } else {
            1
        };
        for c in 0..clauses {
            if c > 0 {
                builder.push("and");
            }
            let forced_disc = n_sentences >= 10 && index == 0 && c == 0;
            let forced_shared = n_sentences >= 10 && index == 1 && c == 0;
            let plan = ClausePlan {
                discontinuous: forced_disc
                    || (!forced_shared && rng.gen_bool(options.discontinuous_rate)),
                shared: forced_shared || (!forced_disc && rng.gen_bool(options.shared_span_rate)),
            };
            let plan = if plan.discontinuous && plan.shared {
                ClausePlan {
                    shared: false,
                    ..plan
                }
            } else {
                plan
            };
            builder.clause(&mut rng, plan, options.max_roles_per_tuple);
        }
        let mut tokens = builder.tokens;
        if let Some(first) = tokens.first_mut() {
            let mut chars = first.chars();
            if let Some(c) = chars.next() {
                *first = c.to_uppercase().chain(chars).collect();
            }
        }
        let lemmas = lemmatizer.lemmatize(&tokens);
        sentences.push(AnnotatedSentence {
            id: Some(format!("fixture-{seed}-{index}")),
            tokens,
            lemmas: Some(lemmas),
            tuples: builder.tuples,
        });
    }
    (world.ontology, sentences)
}
