use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{CdilBlock, Conv, Dense, Network};
use super::*;
use crate::ecgstore::ModelInput;
use crate::tensornet::gradcheck::check_params;
use crate::tensornet::{Padding, ParamId};

fn random_input(seed: u64) -> ModelInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = ndarray::Array2::from_shape_fn((MODEL_LEAD_COUNT, MODEL_SAMPLES), |_| rng.random_range(-1.0..1.0));
    ModelInput::new(values).unwrap()
}

fn raw(config: EmbedderConfig) -> EmbedderConfig {
    EmbedderConfig { preprocess: PreprocessConfig::disabled(), ..config }
}

// ---- reference forward: plain loops over the layer list ----

fn naive_conv(x: &[Vec<f64>], params: &ParamStore<f64>, c: &Conv) -> Vec<Vec<f64>> {
    let shape = params.get(c.w).shape();
    let (c_out, c_in, k) = (shape[0], shape[1], shape[2]);
    let (w, b) = (params.values(c.w), params.values(c.b));
    let len = x[0].len();
    let total = c.spec.dilation * (k - 1);
    let left = total - total / 2;
    let l_out = (len - 1) / c.spec.stride + 1;
    let mut out = vec![vec![0.0; l_out]; c_out];
    for (co, row) in out.iter_mut().enumerate() {
        for (t, slot) in row.iter_mut().enumerate() {
            let mut acc = b[co];
            for (ci, xr) in x.iter().enumerate().take(c_in) {
                for kk in 0..k {
                    let pos = (t * c.spec.stride + kk * c.spec.dilation) as i64 - left as i64;
                    let v = match c.spec.padding {
                        Padding::Circular => xr[pos.rem_euclid(len as i64) as usize],
                        Padding::Zeros if pos >= 0 && (pos as usize) < len => xr[pos as usize],
                        Padding::Zeros => 0.0,
                    };
                    acc += w[(co * c_in + ci) * k + kk] * v;
                }
            }
            *slot = acc;
        }
    }
    out
}

fn naive_dense(x: &[f64], params: &ParamStore<f64>, d: &Dense) -> Vec<f64> {
    let n = x.len();
    let (w, b) = (params.values(d.w), params.values(d.b));
    (0..b.len()).map(|m| b[m] + (0..n).map(|j| w[m * n + j] * x[j]).sum::<f64>()).collect()
}

fn relu(x: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    x.into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect()
}

fn plus(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect()).collect()
}

/// Returns every block output followed by the final vector.
fn naive_forward(model: &Embedder<f64>, input: &ModelInput) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let p = &model.params;
    let mut h: Vec<Vec<f64>> = input.values().rows().into_iter().map(|r| r.to_vec()).collect();
    let mut stages = Vec::new();
    match &model.net {
        Network::Cdil { blocks, head } => {
            for block in blocks {
                h = match block {
                    CdilBlock::Initial(c) => relu(naive_conv(&h, p, c)),
                    CdilBlock::Base(c) => plus(&h, &relu(naive_conv(&h, p, c))),
                    CdilBlock::Deformable { mix, conv, skip } => {
                        let y = relu(naive_conv(&naive_conv(&h, p, mix), p, conv));
                        let s = skip.as_ref().map_or_else(|| h.clone(), |c| naive_conv(&h, p, c));
                        plus(&s, &y)
                    }
                };
                stages.push(h.clone());
            }
            let pooled: Vec<f64> = h.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
            (stages, naive_dense(&pooled, p, head))
        }
        Network::Resnet { stages: res, mlp } => {
            for blocks in res {
                for block in blocks {
                    let y = naive_conv(&relu(naive_conv(&relu(h.clone()), p, &block.conv1)), p, &block.conv2);
                    let s = block.shortcut.as_ref().map_or_else(|| h.clone(), |c| naive_conv(&h, p, c));
                    h = plus(&s, &y);
                }
                stages.push(h.clone());
            }
            let mut v: Vec<f64> = h.concat();
            for (i, d) in mlp.iter().enumerate() {
                v = naive_dense(&v, p, d);
                if i + 1 < mlp.len() {
                    v.iter_mut().for_each(|x| *x = x.max(0.0));
                }
            }
            (stages, v)
        }
    }
}

#[test]
fn reference_forward_matches_both_architectures() {
    for config in [EmbedderConfig::cdil_desk(), EmbedderConfig::resnet_desk()] {
        let model: Embedder<f64> = Embedder::new(raw(config.with_seed(3))).unwrap();
        let input = random_input(1);
        let (_, expected) = naive_forward(&model, &input);
        let got = model.embed(&input).unwrap();
        assert_eq!(got.dim(), expected.len());
        for (a, b) in got.values().iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn identical_inputs_give_bit_identical_vectors() {
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_desk()).unwrap();
    let input = random_input(2);
    let a = model.embed(&input).unwrap();
    let b = model.embed(&input.clone()).unwrap();
    let bits = |v: &EcgVector| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let batch = model.embed_batch(&[input.clone(), input], Exec::Parallel).unwrap();
    assert_eq!(bits(&batch[0]), bits(&a));
    assert_eq!(bits(&batch[1]), bits(&a));
}

#[test]
fn output_dimension_follows_config() {
    let input = random_input(3);
    for &d in &EMBEDDING_DIMS {
        let model: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_desk().with_embedding_dim(d)).unwrap();
        assert_eq!(model.embed(&input).unwrap().dim(), d);
    }
    assert!(Embedder::<f32>::new(EmbedderConfig::cdil_desk().with_embedding_dim(100)).is_err());
}

/// Layer arithmetic: weights plus biases of every convolution and dense layer.
fn cdil_manual_count(w: usize, expanded: usize, blocks: usize, k: usize, d: usize) -> usize {
    let conv = |c_in: usize, c_out: usize, k: usize| c_in * c_out * k + c_out;
    let mut n = conv(12, w, k);
    n += (blocks + 1) * conv(w, w, k);
    n += conv(w, w, 1) + conv(w, w, k);
    n += conv(w, w, 1) + conv(w, expanded, k) + if expanded != w { conv(w, expanded, 1) } else { 0 };
    n + expanded * d + d
}

#[test]
fn cdil_full_preset_parameter_count() {
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_full()).unwrap();
    let count = model.param_count();
    assert_eq!(count, cdil_manual_count(32, 256, 7, 3, 256));
    assert!((count as f64 - 131_000.0).abs() <= 0.10 * 131_000.0, "{count}");
    let desk: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_desk()).unwrap();
    assert_eq!(desk.param_count(), cdil_manual_count(8, 32, 7, 3, 128));
}

#[test]
fn cdil_keeps_full_length_everywhere() {
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_full()).unwrap();
    let trace = model.forward_trace(&random_input(4)).unwrap();
    let blocks: Vec<_> = trace.iter().filter(|e| e.name.starts_with("block")).collect();
    assert_eq!(blocks.len(), 1 + 7 + 3);
    for e in &blocks[..blocks.len() - 1] {
        assert_eq!(e.shape, vec![32, 4096], "{}", e.name);
    }
    assert_eq!(blocks.last().unwrap().shape, vec![256, 4096]);
    assert_eq!(trace.iter().find(|e| e.name == "mean_over_time").unwrap().shape, vec![256]);
    assert_eq!(trace.last().unwrap().shape, vec![256]);
}

#[test]
fn receptive_field_after_dilated_blocks() {
    let model: Embedder<f64> = Embedder::new(raw(EmbedderConfig::cdil_desk())).unwrap();
    let base = random_input(5);
    let mut bumped = base.values().clone();
    bumped[[0, 2048]] += 1.0;
    let bumped = ModelInput::new(bumped).unwrap();
    let (a, _) = naive_forward(&model, &base);
    let (b, _) = naive_forward(&model, &bumped);
    // initial block + 7 base blocks
    let (a, b) = (&a[7], &b[7]);
    let reached = (0..MODEL_SAMPLES).filter(|&t| a.iter().zip(b).any(|(r, s)| (r[t] - s[t]).abs() > 1e-12)).count();
    assert!(reached >= 128, "perturbation reached {reached} samples");
    // kernel 3 with dilations 1..64 after a kernel-3 initial block
    assert!(reached <= 1 + 2 + 2 * 127);
}

#[test]
fn resnet_full_stage_shapes() {
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::resnet_full()).unwrap();
    let trace = model.forward_trace(&random_input(6)).unwrap();
    let shapes: Vec<_> = trace.iter().filter(|e| e.name.starts_with("stage")).map(|e| e.shape.clone()).collect();
    assert_eq!(shapes, vec![vec![128, 1024], vec![196, 256], vec![256, 64], vec![320, 16]]);
    assert_eq!(trace.iter().find(|e| e.name == "flatten").unwrap().shape, vec![5120]);
    assert_eq!(trace.last().unwrap().shape, vec![256]);
}

#[test]
fn resnet_desk_gives_finite_outputs() {
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::resnet_desk()).unwrap();
    for seed in 0..3 {
        let v = model.embed(&random_input(seed)).unwrap();
        assert!(v.values().iter().all(|x| x.is_finite()));
    }
}

#[test]
fn checkpoint_round_trip_preserves_embeddings() {
    let model: Embedder<f32> = Embedder::new(EmbedderConfig::cdil_desk().with_seed(9)).unwrap();
    let back = Embedder::<f32>::from_checkpoint(&model.to_checkpoint()).unwrap();
    assert_eq!(back.config(), model.config());
    let input = random_input(7);
    assert_eq!(model.embed(&input).unwrap(), back.embed(&input).unwrap());
    assert!(Embedder::<f64>::from_checkpoint(&model.to_checkpoint()).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    let mut c = EmbedderConfig::cdil_desk();
    c.channels = vec![8];
    assert!(c.validate().is_err());
    let mut r = EmbedderConfig::resnet_desk();
    r.channels = vec![8; 7];
    assert!(r.validate().is_err());
    r = EmbedderConfig::resnet_desk();
    r.mlp_hidden = vec![4];
    assert!(r.validate().is_err());
}

pub(crate) fn random_coords(store: &ParamStore<f64>, n: usize, rng: &mut ChaCha8Rng) -> Vec<(ParamId, usize)> {
    let ids: Vec<ParamId> = store.ids().collect();
    (0..n)
        .map(|_| {
            let id = ids[rng.random_range(0..ids.len())];
            (id, rng.random_range(0..store.values(id).len()))
        })
        .collect()
}

#[test]
fn full_graphs_pass_gradient_checks() {
    for (arch, config) in [("cdil", EmbedderConfig::cdil_desk()), ("resnet", EmbedderConfig::resnet_desk())] {
        for trial in 0..5u64 {
            let model: Embedder<f64> = Embedder::new(config.clone().with_seed(trial)).unwrap();
            let input = random_input(100 + trial);
            let pre = preprocess(&input, &model.config().preprocess).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let direction: Vec<f64> = (0..model.embedding_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut store = model.params().clone();
            let coords = random_coords(&store, 6, &mut rng);
            let report = check_params(&mut store, &coords, 1e-5, 1e-7, |g, s| {
                let x = model
                    .input_node(g, &pre)
                    .map_err(|e| TensorError::InvalidArgument { op: "input", reason: e.to_string() })?;
                let out = model
                    .forward_with_params(g, s, x)
                    .map_err(|e| TensorError::InvalidArgument { op: "forward", reason: e.to_string() })?;
                let r = g.input(&[direction.len()], direction.clone())?;
                g.dot(out, r)
            })
            .unwrap();
            assert!(report.passes(1e-3), "{arch} trial {trial}: {report:?}");
        }
    }
}
