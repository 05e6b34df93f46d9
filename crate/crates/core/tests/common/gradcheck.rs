use std::collections::BTreeMap;

use diagprop::autodiff::Tape;
use diagprop::objectives::{instance_losses, LossValues};
use diagprop::rng::rng_for;
use diagprop::{Instance, JointModel, ObjectiveConfig, Preset};

const H: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
/// Coordinates where both gradients are below this are compared absolutely.
const SCALE_FLOOR: f64 = 1e-6;
pub const LOSS_NAMES: [&str; 4] = ["L_C", "L_E", "L_DC", "L_CI"];

fn objectives() -> ObjectiveConfig {
    ObjectiveConfig { data_consistency: true, confidence_indication: true, ..Preset::Sup.config() }
}

fn values(model: &JointModel<f64>, inst: &Instance) -> [f64; 4] {
    let mut tape = Tape::new();
    let terms = instance_losses(model, &mut tape, inst, &objectives(), 0.0, &mut rng_for(3, &[1])).unwrap();
    let v: LossValues = terms.values(&tape);
    [v.target, v.explanation.unwrap(), v.data_consistency.unwrap(), v.confidence.unwrap()]
}

/// Central-difference check of every scalar of every parameter for the four
/// differentiable losses. Returns the worst relative error per loss.
pub fn check_gradients() -> Result<[f64; 4], String> {
    let (mut model, inst) = super::toy_model::<f64>(11);

    let mut tape = Tape::new();
    let terms = instance_losses(&model, &mut tape, &inst, &objectives(), 0.0, &mut rng_for(3, &[1])).unwrap();
    let vars = [terms.target, terms.explanation.unwrap(), terms.data_consistency.unwrap(), terms.confidence.unwrap()];
    let analytic: Vec<BTreeMap<usize, Vec<f64>>> = vars
        .iter()
        .map(|&v| {
            let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (id, m) in tape.backward(v).grads {
                let slot = acc.entry(id).or_insert_with(|| vec![0.0; m.len()]);
                slot.iter_mut().zip(m.data()).for_each(|(a, b)| *a += b);
            }
            acc
        })
        .collect();

    let num_params = model.params().len();
    let mut worst = [0.0f64; 4];
    let mut touched = vec![false; num_params];
    for id in 0..num_params {
        for i in 0..model.params().get(id).len() {
            let orig = model.params().get(id).data()[i];
            model.params_mut().get_mut(id).data_mut()[i] = orig + H;
            let up = values(&model, &inst);
            model.params_mut().get_mut(id).data_mut()[i] = orig - H;
            let down = values(&model, &inst);
            model.params_mut().get_mut(id).data_mut()[i] = orig;
            for l in 0..4 {
                let fd = (up[l] - down[l]) / (2.0 * H);
                let an = analytic[l].get(&id).map_or(0.0, |g| g[i]);
                touched[id] |= an != 0.0;
                let err = (an - fd).abs();
                let scale = an.abs().max(fd.abs());
                let bad = if scale > SCALE_FLOOR {
                    let rel = err / scale;
                    worst[l] = worst[l].max(rel);
                    rel > REL_TOL
                } else {
                    err > SCALE_FLOOR * REL_TOL
                };
                if bad {
                    return Err(format!(
                        "{} wrt {}[{i}]: analytic {an:e} vs fd {fd:e}",
                        LOSS_NAMES[l],
                        model.params().name(id)
                    ));
                }
            }
        }
    }
    for id in 0..num_params {
        let name = model.params().name(id);
        if !touched[id] && name != "encoder.pos_emb" && name != "encoder.tok_emb" {
            return Err(format!("no loss produced a gradient for {name}"));
        }
    }
    Ok(worst)
}
