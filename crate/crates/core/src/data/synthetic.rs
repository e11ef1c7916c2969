//! A small English-German toy language with gold AMRs, used for tests,
//! the bundled sample corpus and quick experiments.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::corpus::ParallelExample;
use crate::amr::parse_penman;
use crate::error::{Error, Result};
use crate::numerics::seeded_rng;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Gender {
    M,
    F,
    N,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Case {
    Nom,
    Acc,
    Dat,
}

struct Noun {
    en: &'static str,
    de: &'static str,
    gender: Gender,
}

const NOUNS: &[Noun] = &[
    Noun { en: "man", de: "Mann", gender: Gender::M },
    Noun { en: "dog", de: "Hund", gender: Gender::M },
    Noun { en: "teacher", de: "Lehrer", gender: Gender::M },
    Noun { en: "father", de: "Vater", gender: Gender::M },
    Noun { en: "woman", de: "Frau", gender: Gender::F },
    Noun { en: "cat", de: "Katze", gender: Gender::F },
    Noun { en: "doctor", de: "Ärztin", gender: Gender::F },
    Noun { en: "girl", de: "Mädchen", gender: Gender::N },
    Noun { en: "child", de: "Kind", gender: Gender::N },
    Noun { en: "horse", de: "Pferd", gender: Gender::N },
];

const THINGS: &[Noun] = &[
    Noun { en: "book", de: "Buch", gender: Gender::N },
    Noun { en: "apple", de: "Apfel", gender: Gender::M },
    Noun { en: "letter", de: "Brief", gender: Gender::M },
    Noun { en: "car", de: "Auto", gender: Gender::N },
    Noun { en: "flower", de: "Blume", gender: Gender::F },
];

const NAMES: &[&str] = &["John", "Mary", "Carla", "Peter", "Anna"];

/// (English, German stem) pairs; German endings follow weak declension.
const ADJECTIVES: &[(&str, &str)] = &[("small", "klein"), ("big", "groß"), ("old", "alt"), ("young", "jung")];

struct Verb {
    base: &'static str,
    en: &'static str,
    de: &'static str,
    de_inf: &'static str,
    concept: &'static str,
    /// Takes things rather than people as object.
    things: bool,
}

const VERBS: &[Verb] = &[
    Verb { base: "see", en: "sees", de: "sieht", de_inf: "sehen", concept: "see-01", things: false },
    Verb { base: "like", en: "likes", de: "mag", de_inf: "mögen", concept: "like-01", things: false },
    Verb { base: "visit", en: "visits", de: "besucht", de_inf: "besuchen", concept: "visit-01", things: false },
    Verb { base: "find", en: "finds", de: "findet", de_inf: "finden", concept: "find-01", things: true },
    Verb { base: "buy", en: "buys", de: "kauft", de_inf: "kaufen", concept: "buy-01", things: true },
    Verb { base: "read", en: "reads", de: "liest", de_inf: "lesen", concept: "read-01", things: true },
];

fn article(g: Gender, c: Case) -> &'static str {
    match (c, g) {
        (Case::Nom, Gender::M) => "der",
        (Case::Acc, Gender::M) => "den",
        (Case::Dat, Gender::M | Gender::N) => "dem",
        (Case::Dat, Gender::F) => "der",
        (_, Gender::F) => "die",
        (_, Gender::N) => "das",
    }
}

fn adjective_ending(g: Gender, c: Case) -> &'static str {
    match (c, g) {
        (Case::Nom, _) | (Case::Acc, Gender::F | Gender::N) => "e",
        _ => "en",
    }
}

/// Allocates unique PENMAN variables.
#[derive(Default)]
struct Vars(HashSet<String>);

impl Vars {
    fn fresh(&mut self, concept: &str) -> String {
        let first = concept.chars().next().unwrap_or('x').to_ascii_lowercase();
        let mut v = first.to_string();
        let mut i = 2;
        while !self.0.insert(v.clone()) {
            v = format!("{first}{i}");
            i += 1;
        }
        v
    }
}

enum Entity {
    Name(&'static str),
    Noun(&'static Noun, Option<(&'static str, &'static str)>),
}

impl Entity {
    fn en(&self) -> Vec<String> {
        match self {
            Entity::Name(n) => vec![n.to_string()],
            Entity::Noun(n, adj) => {
                let mut w = vec!["the".to_string()];
                if let Some((a, _)) = adj {
                    w.push(a.to_string());
                }
                w.push(n.en.to_string());
                w
            }
        }
    }

    fn de(&self, c: Case) -> Vec<String> {
        match self {
            Entity::Name(n) => vec![n.to_string()],
            Entity::Noun(n, adj) => {
                let mut w = vec![article(n.gender, c).to_string()];
                if let Some((_, a)) = adj {
                    w.push(format!("{a}{}", adjective_ending(n.gender, c)));
                }
                w.push(n.de.to_string());
                w
            }
        }
    }

    /// PENMAN fragment and the variable of its head.
    fn amr(&self, vars: &mut Vars) -> (String, String) {
        match self {
            Entity::Name(n) => {
                let p = vars.fresh("person");
                let nm = vars.fresh("name");
                (format!("({p} / person :name ({nm} / name :op1 \"{n}\"))"), p)
            }
            Entity::Noun(n, adj) => {
                let v = vars.fresh(n.en);
                let text = match adj {
                    Some((a, _)) => format!("({v} / {} :mod ({} / {a}))", n.en, vars.fresh(a)),
                    None => format!("({v} / {})", n.en),
                };
                (text, v)
            }
        }
    }
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    modifier_rate: f64,
}

impl Gen<'_> {
    fn person(&mut self) -> Entity {
        if self.rng.gen_bool(0.3) {
            Entity::Name(NAMES.choose(self.rng).expect("names"))
        } else {
            self.noun(NOUNS)
        }
    }

    fn noun(&mut self, pool: &'static [Noun]) -> Entity {
        let n = pool.choose(self.rng).expect("nouns");
        let adj = if self.rng.gen_bool(self.modifier_rate) {
            Some(*ADJECTIVES.choose(self.rng).expect("adjectives"))
        } else {
            None
        };
        Entity::Noun(n, adj)
    }

    fn object(&mut self, v: &Verb) -> Entity {
        if v.things {
            self.noun(THINGS)
        } else {
            self.person()
        }
    }

    /// English words, German words and the PENMAN text of one clause.
    fn clause(&mut self, vars: &mut Vars) -> (Vec<String>, Vec<String>, String) {
        let subj = self.person();
        let (mut en, mut de) = (subj.en(), subj.de(Case::Nom));
        let (s_amr, s_var) = subj.amr(vars);
        let kind = self.rng.gen_range(0..20);
        let amr = if kind < 9 {
            let v = VERBS.choose(self.rng).expect("verbs");
            let obj = self.object(v);
            en.push(v.en.into());
            en.extend(obj.en());
            de.push(v.de.into());
            de.extend(obj.de(Case::Acc));
            let head = vars.fresh(v.concept);
            format!("({head} / {} :ARG0 {s_amr} :ARG1 {})", v.concept, obj.amr(vars).0)
        } else if kind < 13 {
            let rec = self.person();
            let thing = self.noun(THINGS);
            en.push("gives".into());
            en.extend(rec.en());
            en.extend(thing.en());
            de.push("gibt".into());
            de.extend(rec.de(Case::Dat));
            de.extend(thing.de(Case::Acc));
            let head = vars.fresh("give-01");
            let t = thing.amr(vars).0;
            let r = rec.amr(vars).0;
            format!("({head} / give-01 :ARG0 {s_amr} :ARG1 {t} :ARG2 {r})")
        } else if kind < 17 {
            // the subject is shared by both predicates
            let v = VERBS.choose(self.rng).expect("verbs");
            let obj = self.object(v);
            en.extend(["wants", "to", v.base].map(String::from));
            en.extend(obj.en());
            de.push("will".into());
            de.extend(obj.de(Case::Acc));
            de.push(v.de_inf.into());
            let head = vars.fresh("want-01");
            let inner = vars.fresh(v.concept);
            let o = obj.amr(vars).0;
            format!(
                "({head} / want-01 :ARG0 {s_amr} :ARG1 ({inner} / {} :ARG0 {s_var} :ARG1 {o}))",
                v.concept
            )
        } else {
            let v = VERBS.choose(self.rng).expect("verbs");
            let obj = self.object(v);
            en.extend(["does", "not", v.base].map(String::from));
            en.extend(obj.en());
            de.push(v.de.into());
            de.extend(obj.de(Case::Acc));
            de.push("nicht".into());
            let head = vars.fresh(v.concept);
            format!(
                "({head} / {} :polarity - :ARG0 {s_amr} :ARG1 {})",
                v.concept,
                obj.amr(vars).0
            )
        };
        (en, de, amr)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SyntheticOptions {
    /// Clauses joined by "and"; each sentence draws 1..=max_clauses.
    pub max_clauses: usize,
    /// Chance that a common noun gets an adjective.
    pub modifier_rate: f64,
}

impl Default for SyntheticOptions {
    fn default() -> Self {
        SyntheticOptions {
            max_clauses: 2,
            modifier_rate: 0.25,
        }
    }
}

/// `n` distinct sentence pairs with AMRs, determined by `seed`.
pub fn synthetic_corpus(n: usize, seed: u64, opts: SyntheticOptions) -> Result<Vec<ParallelExample>> {
    if opts.max_clauses == 0 {
        return Err(Error::Invalid("max_clauses must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed, &[0x5359_4e54]);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 100 * n + 1000 {
            return Err(Error::Invalid(format!("cannot draw {n} distinct synthetic pairs")));
        }
        let mut gen = Gen {
            rng: &mut rng,
            modifier_rate: opts.modifier_rate,
        };
        let mut vars = Vars::default();
        let clauses = gen.rng.gen_range(1..=opts.max_clauses);
        let parts: Vec<_> = (0..clauses).map(|_| gen.clause(&mut vars)).collect();
        let (mut en, mut de) = (Vec::new(), Vec::new());
        for (i, (e, d, _)) in parts.iter().enumerate() {
            if i > 0 {
                en.push("and".to_string());
                de.push("und".to_string());
            }
            en.extend(e.iter().cloned());
            de.extend(d.iter().cloned());
        }
        en.push(".".into());
        de.push(".".into());
        let amr = if parts.len() == 1 {
            parts[0].2.clone()
        } else {
            let head = vars.fresh("and");
            let ops: Vec<String> = parts
                .iter()
                .enumerate()
                .map(|(i, p)| format!(":op{} {}", i + 1, p.2))
                .collect();
            format!("({head} / and {})", ops.join(" "))
        };
        if !seen.insert(en.join(" ")) {
            continue;
        }
        let graph = parse_penman(&amr)?;
        out.push(ParallelExample::new(en, de, Some(graph))?);
    }
    Ok(out)
}
