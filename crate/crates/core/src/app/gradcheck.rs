use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::Mode;
use crate::error::Result;
use crate::model::{forward, Model, ModelConfig};
use crate::numerics::{grad_check, Bound, GradCheckOptions, GradCheckReport, Graph, Objective, ParamStore, Real, Stencil, Var};
use crate::prompt::EncodedPrompt;
use crate::tokenizer::Vocab;
use crate::trainer::{bce_loss, build_labels, dataset_types, Reduction, TrainingExample};

use super::synth::SynthSpec;

/// Summed training loss of one synthetic sentence scored against every
/// synthetic type.
struct SentenceLoss {
    config: ModelConfig,
    prompt: EncodedPrompt,
    example: TrainingExample,
}

impl Objective for SentenceLoss {
    fn eval<T: Real>(&self, g: &mut Graph<T>, params: &Bound) -> Result<Var> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = forward(g, params, &self.config, &self.prompt, Mode::Train, &mut rng)?;
        let labels = build_labels(&self.example, &self.prompt.entity_types, &out.spans)?;
        bce_loss(g, out.logits, &labels, Reduction::Sum)
    }
}

#[derive(Debug, Clone)]
pub struct ModelGradCheck {
    pub seed: u64,
    pub f64: GradCheckReport,
    /// f32 autodiff against the f64 finite-difference oracle.
    pub f32: GradCheckReport,
}

impl ModelGradCheck {
    pub fn passes(&self, tol_f32: f64, tol_f64: f64) -> bool {
        self.f64.passes(tol_f64) && self.f32.passes(tol_f32) && self.f64.params.iter().all(|p| p.checked > 0)
    }
}

/// Checks every parameter tensor of a freshly initialized model (dropout
/// off), sampling up to `coords` coordinates per tensor.
pub fn model_gradcheck(config: &ModelConfig, seed: u64, coords: usize) -> Result<ModelGradCheck> {
    let spec = SynthSpec::default();
    let data = spec.generate(4, seed, "gc-")?;
    let corpus: Vec<Vec<String>> = data.iter().map(|e| e.words.clone()).collect();
    let vocab = Vocab::build(&corpus, 400, 1)?;
    let model = Model::new(config.without_dropout(), vocab, seed)?;
    let types = dataset_types(&[&spec.generate(spec.types.len(), 0, "t-")?]);
    let example = data.into_iter().next().expect("four sentences generated");
    let prompt = model.prompt(&types, &example.words)?;
    let objective = SentenceLoss { config: model.config.clone(), prompt, example };
    let opts = GradCheckOptions {
        eps: 1e-3,
        stencil: Stencil::Central4,
        abs_floor: 1e-5,
        max_coords: coords,
        seed,
        kink_margin: None, scale_floor_by_loss: true,
    };
    let p64: ParamStore<f64> = model.params.cast();
    let f64 = grad_check::<f64, f64, _>(&objective, &p64, &opts)?;
    let f32 = grad_check::<f32, f64, _>(&objective, &model.params, &GradCheckOptions { abs_floor: 1e-4, ..opts })?;
    Ok(ModelGradCheck { seed, f64, f32 })
}
