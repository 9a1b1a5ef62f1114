//! Analytic gradients against central finite differences (eps = 1e-5,
//! 64-bit), for every layer and for the two full probe networks. Shared by
//! the gradient tests and the acceptance run.

use factprobe::corpus::{ClaimRecord, EvidenceSnippet};
use factprobe::neural::{
    grad_check, match_combine, match_combine_backward, softmax_ce, zeros_like, AttnPool, BiLstm, Embedding,
    EncoderLayer, GradCheckReport, Linear, Tensor, TensorSet, TokenSequence, TrainConfig, Trainable,
    TransformerEncoder,
};
use factprobe::probes::{
    ContextualModel, FeatureAssets, FeatureSettings, InputRegime, RecurrentModel, TransformerArch,
};
use factprobe::seed;
use rand::Rng;

pub const EPS: f64 = 1e-5;
pub const BOUND: f64 = 1e-4;

/// One named comparison and the bound it must meet.
#[derive(Debug)]
pub struct Case {
    pub name: String,
    pub report: GradCheckReport,
    pub bound: f64,
}

impl Case {
    pub fn passed(&self) -> bool {
        self.report.checked > 0 && self.report.max_rel_error < self.bound
    }

    #[allow(dead_code)]
    pub fn summary(&self) -> String {
        format!(
            "{}: max rel {:.3e} (abs {:.3e}) over {} params, worst {}",
            self.name,
            self.report.max_rel_error,
            self.report.max_abs_error,
            self.report.checked,
            self.report.worst_param
        )
    }
}

fn case(name: &str, report: GradCheckReport, bound: f64) -> Case {
    Case {
        name: name.to_string(),
        report,
        bound,
    }
}

fn random(shape: &[usize], s: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut seed::rng(s))
}

/// Fixed random projection used to turn outputs into a scalar loss.
fn weights(n: usize, s: u64) -> Vec<f64> {
    let mut rng = seed::rng(s);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn project(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(a, b)| a * b).sum()
}

pub fn linear() -> Vec<Case> {
    let lin = Linear::new(5, 3, &mut seed::rng(1));
    let x = weights(5, 2);
    let c = weights(3, 3);
    let mut g = zeros_like(&lin);
    lin.backward(&x, &c, &mut g);
    let params = grad_check(&lin, &g, EPS, |m| project(&m.forward(&x), &c));

    let xs = TensorSet(vec![("x".into(), Tensor::from_vec(&[5], x.clone()).unwrap())]);
    let dx = lin.backward(&x, &c, &mut zeros_like(&lin));
    let gx = TensorSet(vec![("x".into(), Tensor::from_vec(&[5], dx).unwrap())]);
    let inputs = grad_check(&xs, &gx, EPS, |s| project(&lin.forward(&s.0[0].1.data), &c));
    vec![case("linear params", params, 1e-7), case("linear input", inputs, 1e-7)]
}

pub fn embedding() -> Vec<Case> {
    let emb = Embedding::new(6, 4, &mut seed::rng(4));
    let ids = [1, 3, 1, 5];
    let c = weights(16, 5);
    let mut g = zeros_like(&emb);
    emb.backward(&ids, &Tensor::from_vec(&[4, 4], c.clone()).unwrap(), &mut g);
    let r = grad_check(&emb, &g, EPS, |m| project(&m.forward(&ids).data, &c));
    vec![case("embedding", r, BOUND)]
}

pub fn attn_pool() -> Vec<Case> {
    let pool = AttnPool::new(4, &mut seed::rng(6));
    let v = random(&[5, 4], 7);
    let mask = [true, false, true, true, false];
    let c = weights(4, 8);
    let loss = |p: &AttnPool, v: &Tensor| project(&p.forward(v, &mask).unwrap().0, &c);
    let (_, cache) = pool.forward(&v, &mask).unwrap();
    let mut g = zeros_like(&pool);
    let dv = pool.backward(&v, &cache, &c, &mut g);
    let vs = TensorSet(vec![("v".into(), v.clone())]);
    let gv = TensorSet(vec![("v".into(), dv)]);
    vec![
        case("attn_pool params", grad_check(&pool, &g, EPS, |p| loss(p, &v)), BOUND),
        case(
            "attn_pool inputs",
            grad_check(&vs, &gv, EPS, |s| loss(&pool, &s.0[0].1)),
            BOUND,
        ),
    ]
}

pub fn match_combine_inputs() -> Vec<Case> {
    let a = weights(6, 9);
    let b = weights(6, 10);
    let c = weights(24, 11);
    let (da, db) = match_combine_backward(&a, &b, &c);
    let set = TensorSet(vec![
        ("a".into(), Tensor::from_vec(&[6], a).unwrap()),
        ("b".into(), Tensor::from_vec(&[6], b).unwrap()),
    ]);
    let g = TensorSet(vec![
        ("a".into(), Tensor::from_vec(&[6], da).unwrap()),
        ("b".into(), Tensor::from_vec(&[6], db).unwrap()),
    ]);
    let r = grad_check(&set, &g, EPS, |s| {
        project(&match_combine(&s.0[0].1.data, &s.0[1].1.data).unwrap(), &c)
    });
    vec![case("match_combine", r, BOUND)]
}

pub fn attn_pool_after_match_combine() -> Vec<Case> {
    let pool = AttnPool::new(12, &mut seed::rng(12));
    let h_c = weights(3, 13);
    let h_e = random(&[4, 3], 14);
    let c = weights(12, 15);
    let forward = |p: &AttnPool, h_c: &[f64], h_e: &Tensor| {
        let rows: Vec<Vec<f64>> = (0..h_e.rows())
            .map(|j| match_combine(h_c, h_e.row(j)).unwrap())
            .collect();
        let s = Tensor::stack(&rows.iter().map(Vec::as_slice).collect::<Vec<_>>());
        let (o, cache) = p.forward(&s, &[true; 4]).unwrap();
        (s, o, cache)
    };
    let (s, _, cache) = forward(&pool, &h_c, &h_e);
    let mut g = zeros_like(&pool);
    let ds = pool.backward(&s, &cache, &c, &mut g);
    let mut dh_c = vec![0.0; 3];
    let mut dh_e = Tensor::zeros(&[4, 3]);
    for j in 0..4 {
        let (da, db) = match_combine_backward(&h_c, h_e.row(j), ds.row(j));
        dh_c.iter_mut().zip(&da).for_each(|(x, y)| *x += y);
        dh_e.row_mut(j).copy_from_slice(&db);
    }
    let params = grad_check(&pool, &g, EPS, |p| project(&forward(p, &h_c, &h_e).1, &c));
    let set = TensorSet(vec![
        ("h_c".into(), Tensor::from_vec(&[3], h_c.clone()).unwrap()),
        ("h_e".into(), h_e.clone()),
    ]);
    let gs = TensorSet(vec![
        ("h_c".into(), Tensor::from_vec(&[3], dh_c).unwrap()),
        ("h_e".into(), dh_e),
    ]);
    let inputs = grad_check(&set, &gs, EPS, |s| {
        project(&forward(&pool, &s.0[0].1.data, &s.0[1].1).1, &c)
    });
    vec![
        case("attn_pool o match_combine params", params, BOUND),
        case("attn_pool o match_combine inputs", inputs, BOUND),
    ]
}

pub fn bilstm(layers: usize) -> Vec<Case> {
    let lstm = BiLstm::new(3, 4, layers, 0.0, &mut seed::rng(20 + layers as u64));
    let x = random(&[3, 3], 21);
    let c = weights(3 * 8, 22);
    let (_, cache) = lstm.forward(&x, None);
    let mut g = zeros_like(&lstm);
    let dx = lstm.backward(&cache, &Tensor::from_vec(&[3, 8], c.clone()).unwrap(), &mut g);
    let params = grad_check(&lstm, &g, EPS, |m| project(&m.forward(&x, None).0.data, &c));
    let xs = TensorSet(vec![("x".into(), x.clone())]);
    let gx = TensorSet(vec![("x".into(), dx)]);
    let inputs = grad_check(&xs, &gx, EPS, |s| project(&lstm.forward(&s.0[0].1, None).0.data, &c));
    vec![
        case(&format!("bilstm {layers}-layer params"), params, BOUND),
        case(&format!("bilstm {layers}-layer inputs"), inputs, BOUND),
    ]
}

pub fn transformer_block() -> Vec<Case> {
    let layer = EncoderLayer::new(8, 2, 16, &mut seed::rng(30));
    let x = random(&[4, 8], 31);
    let mask = [true, true, false, true];
    let c = weights(32, 32);
    let (_, cache) = layer.forward(&x, &mask).unwrap();
    let mut g = zeros_like(&layer);
    let dx = layer.backward(&cache, &Tensor::from_vec(&[4, 8], c.clone()).unwrap(), &mut g);
    let params = grad_check(&layer, &g, EPS, |m| project(&m.forward(&x, &mask).unwrap().0.data, &c));
    let xs = TensorSet(vec![("x".into(), x.clone())]);
    let gx = TensorSet(vec![("x".into(), dx)]);
    let inputs = grad_check(&xs, &gx, EPS, |s| {
        project(&layer.forward(&s.0[0].1, &mask).unwrap().0.data, &c)
    });
    vec![
        case("encoder block params", params, BOUND),
        case("encoder block inputs", inputs, BOUND),
    ]
}

pub fn transformer_encoder_stack() -> Vec<Case> {
    let enc = TransformerEncoder::new(9, 12, 8, 2, 16, 2, &mut seed::rng(33));
    let seq = TokenSequence::build(&[2, 3, 2], Some(&[4, 5]), 7, 8, 12);
    let mask = vec![true; seq.len()];
    let c = weights(seq.len() * 8, 34);
    let (_, cache) = enc.forward(&seq, &mask).unwrap();
    let mut g = zeros_like(&enc);
    enc.backward(&cache, &Tensor::from_vec(&[seq.len(), 8], c.clone()).unwrap(), &mut g);
    let r = grad_check(&enc, &g, EPS, |m| project(&m.forward(&seq, &mask).unwrap().0.data, &c));
    vec![case("transformer encoder", r, BOUND)]
}

pub fn fixture() -> Vec<ClaimRecord> {
    let snippets = vec![
        EvidenceSnippet::new(1, "the senator voted against the bill twice", "a.org"),
        EvidenceSnippet::new(2, "records show a different vote", "b.org"),
        EvidenceSnippet::pad(3),
        EvidenceSnippet::new(4, "fact check rating false", "c.org"),
        EvidenceSnippet::pad(5),
    ];
    vec![ClaimRecord {
        id: "g1".into(),
        claim_text: "the senator never voted for the bill".into(),
        label: "false".into(),
        origin_domain: String::new(),
        snippets,
    }]
}

pub fn assets(dim: usize) -> FeatureAssets {
    let settings = FeatureSettings {
        min_count: 1,
        embedding_dim: dim,
        oov_scale: 1.0,
        ..Default::default()
    };
    FeatureAssets::build(&fixture(), &settings).unwrap()
}

pub fn small_config(layers: usize, hidden: usize) -> TrainConfig {
    TrainConfig {
        lstm_layers: layers,
        hidden_dim: hidden,
        dropout: 0.0,
        seed: 40,
        ..TrainConfig::recurrent()
    }
}

fn check_trainable<M>(what: &str, model: &M, input: &M::Input, gold: usize, set: impl Fn(&mut M, &M::Params)) -> Case
where
    M: Trainable + Clone,
{
    let mut g = zeros_like(model.trainable());
    let mut rng = seed::rng(0);
    model.loss_and_grad(input, gold, &mut rng, &mut g).unwrap();
    let r = grad_check(model.trainable(), &g, EPS, |p| {
        let mut m = model.clone();
        set(&mut m, p);
        softmax_ce(&m.logits(input).unwrap(), gold).0
    });
    case(what, r, BOUND)
}

pub fn recurrent_probe_composites() -> Vec<Case> {
    let a = assets(4);
    let record = &fixture()[0];
    let mut out = Vec::new();
    for regime in InputRegime::ALL {
        for layers in [1, 2] {
            let model = RecurrentModel::new(&a, regime, 5, &small_config(layers, 3));
            let input = model.input(record);
            out.push(check_trainable(
                &format!("recurrent {regime} {layers}-layer"),
                &model,
                &input,
                1,
                |m, p| m.params = p.clone(),
            ));
        }
    }
    out
}

pub fn contextual_probe_composites() -> Vec<Case> {
    let a = assets(4);
    let record = &fixture()[0];
    let arch = TransformerArch {
        heads: 2,
        layers: 1,
        ff_multiplier: 2,
        max_positions: 24,
    };
    InputRegime::ALL
        .into_iter()
        .map(|regime| {
            let model = ContextualModel::new(&a, regime, 5, &arch, &small_config(1, 6));
            let input = model.input(record);
            check_trainable(&format!("contextual {regime}"), &model, &input, 2, |m, p| {
                m.params = p.clone()
            })
        })
        .collect()
}

/// Every case in the suite.
#[allow(dead_code)]
pub fn all() -> Vec<Case> {
    let mut out = Vec::new();
    out.extend(linear());
    out.extend(embedding());
    out.extend(attn_pool());
    out.extend(match_combine_inputs());
    out.extend(attn_pool_after_match_combine());
    out.extend(bilstm(1));
    out.extend(bilstm(2));
    out.extend(transformer_block());
    out.extend(transformer_encoder_stack());
    out.extend(recurrent_probe_composites());
    out.extend(contextual_probe_composites());
    out
}
