//! Slot-template sentence generator with known gold spans.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::EntityMention;
use crate::error::{Error, Module, Result};
use crate::matcher::DEFAULT_MAX_WIDTH;
use crate::trainer::TrainingExample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotType {
    pub name: String,
    pub fillers: Vec<String>,
}

/// Type inventory, templates with `{type}` slots, and split sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub types: Vec<SlotType>,
    pub templates: Vec<String>,
    pub train_size: usize,
    pub dev_size: usize,
    /// No filler may be wider than this many words.
    pub max_width: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let ty = |name: &str, fillers: &[&str]| SlotType {
            name: name.to_string(),
            fillers: fillers.iter().map(|s| s.to_string()).collect(),
        };
        Self {
            types: vec![
                ty("person", &["Alain Farley", "Marie Curie", "John Smith", "Ada Lovelace", "Kenji Sato"]),
                ty("organization", &["McGill University", "Google", "United Nations", "Red Cross", "Acme Corp"]),
                ty("location", &["Montreal", "Paris", "Tokyo", "New York", "Lake Geneva"]),
                ty("date", &["Monday", "June 2020", "12 March", "1998", "last spring"]),
                ty("event", &["Olympics", "World Cup", "Jazz Festival", "Climate Summit"]),
                ty("product", &["iPhone", "Model S", "PlayStation", "Walkman"]),
                ty("language", &["French", "Japanese", "Spanish", "Swahili"]),
                ty("disease", &["influenza", "malaria", "measles", "diabetes"]),
                ty("award", &["Nobel Prize", "Turing Award", "Fields Medal", "Pulitzer Prize"]),
                ty("animal", &["tiger", "red fox", "panda", "barn owl"]),
            ],
            templates: [
                "{person} works at {organization} .",
                "{person} moved to {location} in {date} .",
                "{organization} opened an office in {location} .",
                "{person} won the {award} in {date} .",
                "{person} speaks {language} and lives in {location} .",
                "the {event} was held in {location} on {date} .",
                "{organization} released the {product} on {date} .",
                "doctors in {location} are studying {disease} .",
                "{person} saw a {animal} near {location} .",
                "a {animal} was spotted at the {event} .",
                "{person} caught {disease} after the {event} .",
                "{organization} teaches {language} to new staff .",
                "the {award} went to {person} from {organization} .",
                "{person} bought a {product} in {location} .",
            ]
            .map(String::from)
            .to_vec(),
            train_size: 50,
            dev_size: 50,
            max_width: DEFAULT_MAX_WIDTH,
        }
    }
}

enum Piece {
    Word(String),
    Slot(usize),
}

struct Template {
    pieces: Vec<Piece>,
    slots: Vec<usize>,
}

impl SynthSpec {
    fn compile(&self) -> Result<Vec<Template>> {
        let bad = |msg: String| Err(Error::config(Module::App, msg));
        if self.types.len() < 2 {
            return bad("synthetic data needs at least two types".into());
        }
        if self.templates.is_empty() {
            return bad("synthetic data needs at least one template".into());
        }
        for t in &self.types {
            if t.fillers.is_empty() {
                return bad(format!("type `{}` has no fillers", t.name));
            }
            for f in &t.fillers {
                let width = f.split_whitespace().count();
                if width == 0 || width > self.max_width {
                    return bad(format!("filler `{f}` of type `{}` has {width} words (max {})", t.name, self.max_width));
                }
            }
        }
        let mut compiled = Vec::with_capacity(self.templates.len());
        for tpl in &self.templates {
            let mut pieces = Vec::new();
            let mut slots = Vec::new();
            for w in tpl.split_whitespace() {
                match w.strip_prefix('{').and_then(|w| w.strip_suffix('}')) {
                    Some(name) => {
                        let Some(i) = self.types.iter().position(|t| t.name == name) else {
                            return bad(format!("template `{tpl}` uses unknown type `{name}`"));
                        };
                        pieces.push(Piece::Slot(i));
                        slots.push(i);
                    }
                    None => pieces.push(Piece::Word(w.to_string())),
                }
            }
            compiled.push(Template { pieces, slots });
        }
        for (i, t) in self.types.iter().enumerate() {
            if !compiled.iter().any(|c| c.slots.contains(&i)) {
                return bad(format!("type `{}` appears in no template", t.name));
            }
        }
        Ok(compiled)
    }

    /// `size` sentences; sentence `i` is drawn from a template containing
    /// type `i mod |types|`, so every type appears at least
    /// `⌊size / |types|⌋` times.
    pub fn generate(&self, size: usize, seed: u64, id_prefix: &str) -> Result<Vec<TrainingExample>> {
        let templates = self.compile()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let by_type: Vec<Vec<&Template>> = (0..self.types.len())
            .map(|i| templates.iter().filter(|t| t.slots.contains(&i)).collect())
            .collect();
        (0..size)
            .map(|i| {
                let tpl = by_type[i % self.types.len()].choose(&mut rng).expect("checked in compile");
                let mut words = Vec::new();
                let mut gold = Vec::new();
                for piece in &tpl.pieces {
                    match piece {
                        Piece::Word(w) => words.push(w.clone()),
                        Piece::Slot(t) => {
                            let ty = &self.types[*t];
                            let filler = ty.fillers.choose(&mut rng).expect("checked in compile");
                            let start = words.len();
                            words.extend(filler.split_whitespace().map(String::from));
                            gold.push(EntityMention::new(start, words.len() - 1, &ty.name, 1.0));
                        }
                    }
                }
                TrainingExample::new(format!("{id_prefix}{i}"), words, gold)
            })
            .collect()
    }
}

/// Train and dev splits drawn with independent seeds derived from `seed`.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<(Vec<TrainingExample>, Vec<TrainingExample>)> {
    let train = spec.generate(spec.train_size, seed, "train-")?;
    let dev = spec.generate(spec.dev_size, seed ^ 0x9e37_79b9_7f4a_7c15, "dev-")?;
    Ok((train, dev))
}
