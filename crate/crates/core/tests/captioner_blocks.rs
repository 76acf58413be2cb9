//! Hand-evaluated fixtures and structural properties of the captioner's
//! blocks and decoding.

use figcap_core::captioner::layers::{
    att_f, att_l, att_r, attend, attention_keys, build_label_maps, build_relation_maps, encode, init_state, lstm_step,
    make_context, predict, AttnVars, DecoderState, GateVars, LstmVars, OutputVars, RelationVars,
};
use figcap_core::captioner::{init_params, AttnSet, Captioner, ModelConfig, ModelVars};
use figcap_core::captiongen::{build_vocab, Vocabulary, EOS};
use figcap_core::figgen::{render, sample_figure_spec_with, Canvas, FigGenConfig};
use figcap_core::trainer::{sample_gradients, Objective};
use figcap_core::{RasterImage, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn row(t: &Tape, v: Var) -> Vec<f64> {
    t.value(v).data().to_vec()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn vocab() -> Vocabulary {
    build_vocab(&["this is a line plot . it contains 2 categories . yellow sky blue lawn green is the smoothest ."]).unwrap()
}

fn tiny_config(vocab: &Vocabulary, attention: AttnSet) -> ModelConfig {
    ModelConfig {
        canvas: Canvas { height: 32, width: 32 },
        conv_channels: [4, 4],
        feat_dim: 6,
        rel_dim: 5,
        embed_dim: 4,
        hidden: 8,
        att_dim: 4,
        attention,
        vocab_size: vocab.len(),
        ..ModelConfig::default()
    }
}

fn figure(canvas: Canvas, seed: u64) -> (RasterImage, Vec<String>) {
    let cfg = FigGenConfig {
        canvas,
        ..FigGenConfig::default()
    };
    let spec = sample_figure_spec_with(seed, None, &cfg);
    (render(&spec).unwrap(), spec.labels())
}

#[test]
fn encoder_shape_for_64_canvas() {
    let cfg = ModelConfig {
        vocab_size: 10,
        ..ModelConfig::default()
    };
    assert_eq!(cfg.canvas, Canvas { height: 64, width: 64 });
    let params = init_params(&cfg, 1).unwrap();
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let vars = ModelVars::from_bindings(&b, &cfg).unwrap();
    let feats = encode(&mut tape, &RasterImage::white(64, 64), &vars.conv).unwrap();
    assert_eq!(tape.shape(feats), &[64, 32]);
    assert_eq!(cfg.positions(), 64);
}

#[test]
fn white_image_interior_features_agree() {
    let cfg = ModelConfig {
        vocab_size: 10,
        ..ModelConfig::default()
    };
    // Biases are initialized to zero.
    let params = init_params(&cfg, 2).unwrap();
    assert!(params.get("enc.conv1.b").unwrap().data().iter().all(|&x| x == 0.0));
    let mut tape = Tape::new();
    let b = params.bind(&mut tape);
    let vars = ModelVars::from_bindings(&b, &cfg).unwrap();
    let feats = encode(&mut tape, &RasterImage::white(64, 64), &vars.conv).unwrap();
    let f = tape.value(feats);
    // Row 0 and column 0 of the 8×8 grid see zero padding; the rest do not.
    let reference = f.row_slice(9).to_vec();
    for gy in 1..8 {
        for gx in 1..8 {
            let r = f.row_slice(gy * 8 + gx);
            for (a, b) in r.iter().zip(&reference) {
                assert!(close(*a, *b, 1e-12), "position ({gy},{gx}) differs");
            }
        }
    }
}

fn relation_params(tape: &mut Tape, rng: &mut ChaCha8Rng, d: usize, dr: usize) -> RelationVars {
    let mut t = |shape: &[usize]| tape.leaf(Tensor::uniform(shape, 1.0, rng));
    RelationVars {
        w1a: t(&[d, dr]),
        w1b: t(&[d, dr]),
        b1: t(&[1, dr]),
        w2: t(&[dr, dr]),
        b2: t(&[1, dr]),
    }
}

#[test]
fn relation_map_cardinality_is_m_squared() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for m in [4usize, 8, 16, 64] {
        let mut tape = Tape::new();
        let p = relation_params(&mut tape, &mut rng, 3, 4);
        let feats = tape.leaf(Tensor::uniform(&[m, 3], 1.0, &mut rng));
        let r = build_relation_maps(&mut tape, feats, &p).unwrap();
        assert_eq!(tape.shape(r), &[m * m, 4]);
    }
}

#[test]
fn relation_maps_of_identical_features_coincide_and_are_ordered_otherwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tape = Tape::new();
    let p = relation_params(&mut tape, &mut rng, 3, 4);
    let same = tape.leaf(Tensor::from_fn(&[5, 3], |k| [0.3, -0.2, 0.9][k % 3]));
    let r = build_relation_maps(&mut tape, same, &p).unwrap();
    let r = tape.value(r).clone();
    for k in 1..25 {
        assert_eq!(r.row_slice(k), r.row_slice(0));
    }

    let m = 4;
    let feats = tape.leaf(Tensor::uniform(&[m, 3], 1.0, &mut rng));
    let r = build_relation_maps(&mut tape, feats, &p).unwrap();
    let r = tape.value(r);
    let differ = (0..m).any(|i| (0..m).any(|j| i != j && r.row_slice(i * m + j) != r.row_slice(j * m + i)));
    assert!(differ, "r_ij should depend on pair order");
}

#[test]
fn zero_scoring_vector_gives_uniform_weights_and_mean_context() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [1usize, 3, 16] {
        let mut tape = Tape::new();
        let values = Tensor::uniform(&[n, 4], 1.0, &mut rng);
        let mean: Vec<f64> = (0..4)
            .map(|c| (0..n).map(|r| values.row_slice(r)[c]).sum::<f64>() / n as f64)
            .collect();
        let x = tape.leaf(values);
        let h = tape.leaf(Tensor::uniform(&[1, 3], 1.0, &mut rng));
        let p = AttnVars {
            w: tape.leaf(Tensor::uniform(&[4, 2], 1.0, &mut rng)),
            u: tape.leaf(Tensor::uniform(&[3, 2], 1.0, &mut rng)),
            v: tape.leaf(Tensor::zeros(&[2, 1])),
        };
        for a in [
            att_f(&mut tape, h, x, &p).unwrap(),
            att_r(&mut tape, h, x, &p).unwrap(),
            att_l(&mut tape, h, x, &p).unwrap(),
        ] {
            for w in row(&tape, a.weights) {
                assert!(close(w, 1.0 / n as f64, 1e-15));
            }
            for (c, m) in row(&tape, a.context).iter().zip(&mean) {
                assert!(close(*c, *m, 1e-12));
            }
        }
    }
}

#[test]
fn hand_set_two_position_attention() {
    let mut tape = Tape::new();
    let one = |tape: &mut Tape, v: f64| tape.leaf(Tensor::new(vec![1, 1], vec![v]).unwrap());
    let p = AttnVars {
        w: one(&mut tape, 1.0),
        u: one(&mut tape, 0.0),
        v: one(&mut tape, 1.0),
    };
    let h = one(&mut tape, 0.7);
    let f = tape.leaf(Tensor::new(vec![2, 1], vec![0.0, 10.0]).unwrap());
    let a = att_f(&mut tape, h, f, &p).unwrap();
    let w = row(&tape, a.weights);
    let t10 = 10f64.tanh();
    let expect = [1.0 / (1.0 + t10.exp()), t10.exp() / (1.0 + t10.exp())];
    assert!(close(w[0], expect[0], 1e-12) && close(w[1], expect[1], 1e-12));
    assert!(close(w[0], 0.2689, 5e-5) && close(w[1], 0.7311, 5e-5));
}

#[test]
fn single_label_gets_all_the_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::uniform(&[1, 4], 1.0, &mut rng));
    let h = tape.leaf(Tensor::uniform(&[1, 3], 1.0, &mut rng));
    let p = AttnVars {
        w: tape.leaf(Tensor::uniform(&[4, 2], 1.0, &mut rng)),
        u: tape.leaf(Tensor::uniform(&[3, 2], 1.0, &mut rng)),
        v: tape.leaf(Tensor::uniform(&[2, 1], 1.0, &mut rng)),
    };
    let a = att_l(&mut tape, h, x, &p).unwrap();
    assert_eq!(row(&tape, a.weights), vec![1.0]);
    assert_eq!(row(&tape, a.context), row(&tape, x));
}

#[test]
fn label_maps_average_word_embeddings() {
    let v = vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let table = Tensor::uniform(&[v.len(), 4], 1.0, &mut rng);
    let mut tape = Tape::new();
    let e = tape.leaf(table.clone());
    let labels = vec!["Yellow".to_string(), "Sky Blue".to_string(), "Lawn Green".to_string()];
    let l = build_label_maps(&mut tape, &labels, &v, e).unwrap();
    let l = tape.value(l);
    assert_eq!(l.shape(), &[3, 4]);
    assert_eq!(l.row_slice(0), table.row_slice(v.id("yellow")));
    let (sky, blue) = (table.row_slice(v.id("sky")), table.row_slice(v.id("blue")));
    for c in 0..4 {
        assert!(close(l.row_slice(1)[c], (sky[c] + blue[c]) / 2.0, 1e-15));
    }
}

#[test]
fn context_widths_and_order() {
    let cfg = ModelConfig {
        feat_dim: 32,
        rel_dim: 24,
        embed_dim: 16,
        attention: AttnSet::ALL,
        ..ModelConfig::default()
    };
    assert_eq!(cfg.context_dim(), 72);
    assert_eq!(
        ModelConfig {
            attention: AttnSet::F,
            ..cfg.clone()
        }
        .context_dim(),
        32
    );
    assert_eq!(
        ModelConfig {
            attention: AttnSet::NONE,
            ..cfg
        }
        .context_dim(),
        0
    );

    let mut tape = Tape::new();
    let f = tape.leaf(Tensor::row(&[1.0, 2.0]));
    let l = tape.leaf(Tensor::row(&[3.0]));
    let only_f = make_context(&mut tape, Some(f), None, None).unwrap();
    assert_eq!(row(&tape, only_f), vec![1.0, 2.0]);
    let fl = make_context(&mut tape, Some(f), None, Some(l)).unwrap();
    assert_eq!(row(&tape, fl), vec![1.0, 2.0, 3.0]);
    assert!(make_context(&mut tape, None, None, None).is_err());
}

#[test]
fn zero_init_weights_give_half_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut tape = Tape::new();
    let feats = tape.leaf(Tensor::uniform(&[5, 3], 1.0, &mut rng));
    let z = tape.leaf(Tensor::zeros(&[3, 4]));
    let s = init_state(&mut tape, feats, z, z).unwrap();
    assert!(row(&tape, s.h).iter().chain(&row(&tape, s.cell)).all(|&x| x == 0.5));

    let wic = tape.leaf(Tensor::uniform(&[3, 4], 3.0, &mut rng));
    let s = init_state(&mut tape, feats, wic, wic).unwrap();
    assert!(row(&tape, s.h).iter().all(|&x| x > 0.0 && x < 1.0));
}

#[test]
fn zero_lstm_parameters_halve_the_cell() {
    let (e, hd, dc) = (3, 4, 2);
    let mut tape = Tape::new();
    let mut zero = |shape: &[usize]| tape.leaf(Tensor::zeros(shape));
    let mut gate = || GateVars {
        wy: zero(&[e, hd]),
        wh: zero(&[hd, hd]),
        wd: Some(zero(&[dc, hd])),
        b: zero(&[1, hd]),
    };
    let p = LstmVars {
        input: gate(),
        forget: gate(),
        output: gate(),
        cell: [gate(), gate()],
    };
    let v = [0.4, -1.2, 2.0, 0.0];
    let state = DecoderState {
        h: tape.leaf(Tensor::row(&[0.1, 0.2, 0.3, 0.4])),
        cell: tape.leaf(Tensor::row(&v)),
        t: 0,
    };
    let x = tape.leaf(Tensor::row(&[1.0, -1.0, 0.5]));
    let d = tape.leaf(Tensor::row(&[0.3, 0.3]));
    let next = lstm_step(&mut tape, x, &state, Some(d), &p).unwrap();
    let (cell, h) = (row(&tape, next.cell), row(&tape, next.h));
    for k in 0..4 {
        assert!(close(cell[k], 0.5 * v[k], 1e-15));
        assert!(close(h[k], 0.5 * (0.5 * v[k]).tanh(), 1e-15));
    }
    assert_eq!(next.t, 1);
}

#[test]
fn output_distribution_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vsize = 11;
    let mut tape = Tape::new();
    let h = tape.leaf(Tensor::uniform(&[1, 4], 1.0, &mut rng));
    let d = tape.leaf(Tensor::uniform(&[1, 3], 1.0, &mut rng));
    let zero = OutputVars {
        wh: tape.leaf(Tensor::zeros(&[4, vsize])),
        wd: Some(tape.leaf(Tensor::zeros(&[3, vsize]))),
        linear_logits: false,
    };
    let p = predict(&mut tape, h, Some(d), &zero).unwrap();
    assert!(row(&tape, p).iter().all(|&x| close(x, 1.0 / vsize as f64, 1e-15)));

    for _ in 0..200 {
        let scale = rng.gen_range(0.1..20.0);
        let out = OutputVars {
            wh: tape.leaf(Tensor::uniform(&[4, vsize], scale, &mut rng)),
            wd: Some(tape.leaf(Tensor::uniform(&[3, vsize], scale, &mut rng))),
            linear_logits: false,
        };
        let p = predict(&mut tape, h, Some(d), &out).unwrap();
        let p = row(&tape, p);
        assert!(close(p.iter().sum::<f64>(), 1.0, 1e-9));
        assert!(p.iter().all(|&x| x > 0.0 && x < 1.0));
        let (mx, mn) = p.iter().fold((0f64, 1f64), |(a, b), &x| (a.max(x), b.min(x)));
        assert!(mx / mn <= std::f64::consts::E, "ratio {}", mx / mn);
    }
}

#[test]
fn attention_weights_stay_on_the_simplex_while_decoding() {
    let v = vocab();
    let model = Captioner::new(tiny_config(&v, AttnSet::ALL), v.clone(), 11).unwrap();
    let mut steps = 0;
    let mut seed = 0;
    while steps < 1000 {
        let (img, labels) = figure(model.config.canvas, seed);
        let mut ep = model.episode(&img, &labels).unwrap();
        ep.record_weights = true;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ep.decode(40, |r| figcap_core::captioner::sample_from_log_probs(r, &mut rng), false)
            .unwrap();
        for w in &ep.weights {
            let m = model.config.positions();
            for (vec, n) in [(&w.alpha, m), (&w.beta, m * m), (&w.gamma, labels.len())] {
                let vec = vec.as_ref().unwrap();
                assert_eq!(vec.len(), n);
                assert!(vec.iter().all(|&x| x >= 0.0));
                assert!(close(vec.iter().sum::<f64>(), 1.0, 1e-9));
            }
            steps += 1;
        }
        seed += 1;
    }
}

#[test]
fn greedy_decoding_is_deterministic_and_bounded() {
    let v = vocab();
    let model = Captioner::new(tiny_config(&v, AttnSet::ALL), v, 12).unwrap();
    let (img, labels) = figure(model.config.canvas, 3);
    for max_len in [1, 5, 30] {
        let a = model.decode_greedy(&img, &labels, max_len).unwrap();
        let b = model.decode_greedy(&img, &labels, max_len).unwrap();
        assert_eq!(a, b);
        assert!(a.tokens.len() <= max_len);
        let eos = a.tokens.iter().filter(|&&t| t == EOS).count();
        assert!(eos == 0 || (eos == 1 && *a.tokens.last().unwrap() == EOS));
        assert!(a.log_probs.iter().all(|&l| l <= 0.0));
    }
    let s1 = model.decode_sample(&img, &labels, 30, 99).unwrap();
    let s2 = model.decode_sample(&img, &labels, 30, 99).unwrap();
    assert_eq!(s1, s2);
    assert!(s1.log_probs.iter().all(|&l| l <= 0.0));
}

#[test]
fn first_step_samples_match_predicted_probabilities() {
    let v = vocab();
    let mut cfg = tiny_config(&v, AttnSet::FL);
    cfg.linear_logits = true;
    let mut model = Captioner::new(cfg, v.clone(), 13).unwrap();
    // Spread the distribution so that the check has some bite.
    let wh = model.params.get_mut("out.W_h").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    wh.data_mut().iter_mut().for_each(|x| *x = rng.gen_range(-2.0..2.0));
    let (img, labels) = figure(model.config.canvas, 4);

    let mut ep = model.episode(&img, &labels).unwrap();
    let logp = ep.step(None).unwrap();
    let probs: Vec<f64> = ep.tape.value(logp).data().iter().map(|l| l.exp()).collect();

    let n = 10_000;
    let mut counts = vec![0usize; v.len()];
    for seed in 0..n {
        let d = model.decode_sample(&img, &labels, 1, seed).unwrap();
        counts[d.tokens[0]] += 1;
    }
    for (k, (&c, &p)) in counts.iter().zip(&probs).enumerate() {
        let mean = n as f64 * p;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        assert!(
            (c as f64 - mean).abs() <= 3.0 * sd + 1e-9,
            "token {k}: {c} vs {mean:.1} ± {sd:.1}"
        );
    }
}

#[test]
fn disabled_relation_attention_leaves_relation_parameters_untouched() {
    let v = vocab();
    let model = Captioner::new(tiny_config(&v, AttnSet::FL), v.clone(), 14).unwrap();
    let (img, labels) = figure(model.config.canvas, 5);
    let targets = v.encode("this is a line plot .");
    let mut targets = targets;
    targets.push(EOS);
    let g = sample_gradients(&model, &img, &labels, Objective::Mle(&targets)).unwrap();
    for ((name, _), grad) in model.params.iter().zip(&g.grads) {
        if name.starts_with("rel.") || name.starts_with("att_r.") {
            assert_eq!(grad.max_abs(), 0.0, "{name}");
        }
    }
    assert!(g.grads.iter().any(|t| t.max_abs() > 0.0));
}

#[test]
fn keys_are_precomputable() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::uniform(&[6, 4], 1.0, &mut rng));
    let h = tape.leaf(Tensor::uniform(&[1, 3], 1.0, &mut rng));
    let p = AttnVars {
        w: tape.leaf(Tensor::uniform(&[4, 2], 1.0, &mut rng)),
        u: tape.leaf(Tensor::uniform(&[3, 2], 1.0, &mut rng)),
        v: tape.leaf(Tensor::uniform(&[2, 1], 1.0, &mut rng)),
    };
    let keys = attention_keys(&mut tape, x, &p).unwrap();
    let a = attend(&mut tape, h, x, keys, &p).unwrap();
    let b = att_f(&mut tape, h, x, &p).unwrap();
    assert_eq!(row(&tape, a.context), row(&tape, b.context));
}
