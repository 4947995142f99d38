//! Batched inference: CNN encoder, stacked graph-attention layers, decoder.
//!
//! All agents of one configuration go through one pass. Weights are stored
//! as `f32` and widened once; arithmetic runs in `f64`. Neighbor sums run in
//! each target's canonical incoming order, so relabeling agents permutes the
//! outputs bit for bit.

use thiserror::Error;

use super::graph::CommGraph;
use super::observation::{ObservationTensor, CHANNELS};
use super::weights::{PolicyWeights, ACTIONS};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForwardError {
    #[error("expected {expected} observations, got {got}")]
    AgentCount { expected: usize, got: usize },
    #[error("observation radius {got} does not match weights radius {expected}")]
    Radius { expected: usize, got: usize },
    #[error("observation for agent {0} has the wrong length")]
    ObservationLength(usize),
}

struct Dense {
    out: usize,
    inp: usize,
    w: Vec<f64>,
    b: Option<Vec<f64>>,
}

struct Layer {
    w_root: Dense,
    w_node: Dense,
    w_edge: Dense,
    theta_node: Dense,
    theta_edge: Dense,
}

/// Weights widened to `f64`, laid out for the forward pass.
pub struct PolicyNet {
    radius: usize,
    slope: f64,
    convs: Vec<Dense>,
    edge_mlp: [Dense; 2],
    layers: Vec<Layer>,
    decoder: [Dense; 2],
}

/// Everything a forward pass computes, for inspection and testing.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardDetail {
    /// Agent embeddings before the first layer and after each layer, `[agent][dim]`.
    pub embeddings: Vec<Vec<Vec<f64>>>,
    /// Per layer, one attention weight per edge of the graph (same indexing as `graph.edges`).
    pub attention: Vec<Vec<f64>>,
    pub logits: Vec<[f64; ACTIONS]>,
    pub probabilities: Vec<[f64; ACTIONS]>,
}

fn dense(w: &PolicyWeights, weight: &str, bias: Option<&str>) -> Dense {
    let t = w.tensor(weight).expect("validated manifest");
    let (out, inp) = (t.spec.shape[0], t.spec.shape[1..].iter().product());
    Dense {
        out,
        inp,
        w: t.data.iter().map(|&v| v as f64).collect(),
        b: bias.map(|name| {
            w.tensor(name)
                .expect("validated manifest")
                .data
                .iter()
                .map(|&v| v as f64)
                .collect()
        }),
    }
}

/// `c[m×n] = a[m×k] · b`, with `b` read through strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], rsb: usize, csb: usize, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the slices cover every index the strides reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Dense {
    /// Row-wise `x · Wᵀ + b` for `rows` inputs stored `[row][inp]`.
    fn apply(&self, x: &[f64], rows: usize, relu: bool) -> Vec<f64> {
        let mut y = vec![0.0; rows * self.out];
        gemm(rows, self.inp, self.out, x, &self.w, 1, self.inp, &mut y);
        if let Some(b) = &self.b {
            for row in y.chunks_exact_mut(self.out) {
                for (v, bias) in row.iter_mut().zip(b) {
                    *v += bias;
                }
            }
        }
        if relu {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        y
    }
}

impl PolicyNet {
    pub fn new(weights: &PolicyWeights) -> Self {
        let m = &weights.meta;
        let convs = (0..m.cnn_channels.len() - 1)
            .map(|k| dense(weights, &format!("cnn.{k}.weight"), Some(&format!("cnn.{k}.bias"))))
            .collect();
        let layers = (0..m.layers)
            .map(|l| Layer {
                w_root: dense(weights, &format!("gnn.{l}.w_root"), None),
                w_node: dense(weights, &format!("gnn.{l}.w_node"), None),
                w_edge: dense(weights, &format!("gnn.{l}.w_edge"), None),
                theta_node: dense(weights, &format!("gnn.{l}.theta_node"), None),
                theta_edge: dense(weights, &format!("gnn.{l}.theta_edge"), None),
            })
            .collect();
        PolicyNet {
            radius: m.r_obs,
            slope: m.leaky_slope,
            convs,
            edge_mlp: [
                dense(weights, "edge_mlp.0.weight", Some("edge_mlp.0.bias")),
                dense(weights, "edge_mlp.1.weight", Some("edge_mlp.1.bias")),
            ],
            layers,
            decoder: [
                dense(weights, "decoder.0.weight", Some("decoder.0.bias")),
                dense(weights, "decoder.1.weight", Some("decoder.1.bias")),
            ],
        }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn forward(&self, obs: &[ObservationTensor], graph: &CommGraph) -> Result<Vec<[f64; ACTIONS]>, ForwardError> {
        Ok(self.forward_detail(obs, graph)?.probabilities)
    }

    pub fn forward_detail(&self, obs: &[ObservationTensor], graph: &CommGraph) -> Result<ForwardDetail, ForwardError> {
        let b = obs.len();
        if b != graph.agents {
            return Err(ForwardError::AgentCount {
                expected: graph.agents,
                got: b,
            });
        }
        let side = 2 * self.radius + 1;
        for (i, o) in obs.iter().enumerate() {
            if o.radius != self.radius {
                return Err(ForwardError::Radius {
                    expected: self.radius,
                    got: o.radius,
                });
            }
            if o.data.len() != CHANNELS * side * side {
                return Err(ForwardError::ObservationLength(i));
            }
        }

        let mut x = self.encode(obs, side);
        let d = self.layers.first().map_or(self.decoder[0].inp, |l| l.w_root.out);
        let edge_feat = self.edge_features(graph);
        let e_dim = self.edge_mlp[1].out;

        let mut embeddings = vec![split_rows(&x, d)];
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let u = layer.theta_node.apply(&x, b, false);
            let s = transpose_apply(&layer.theta_edge, &x, b);
            let mut alpha = vec![0.0; graph.edges.len()];
            let mut agg_node = vec![0.0; b * d];
            let mut agg_edge = vec![0.0; b * e_dim];
            let nx = layer.w_node.apply(&x, b, false);
            for i in 0..b {
                let inc = &graph.incoming[i];
                if inc.is_empty() {
                    continue;
                }
                let xi = &x[i * d..(i + 1) * d];
                let si = &s[i * e_dim..(i + 1) * e_dim];
                let logits: Vec<f64> = inc
                    .iter()
                    .map(|&e| {
                        let j = graph.edges[e].source;
                        let w = &edge_feat[e * e_dim..(e + 1) * e_dim];
                        let a = dot(xi, &u[j * d..(j + 1) * d]) + dot(si, w);
                        if a >= 0.0 {
                            a
                        } else {
                            self.slope * a
                        }
                    })
                    .collect();
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|&a| (a - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for (k, &e) in inc.iter().enumerate() {
                    let a = exps[k] / z;
                    alpha[e] = a;
                    let j = graph.edges[e].source;
                    let w = &edge_feat[e * e_dim..(e + 1) * e_dim];
                    axpy(a, &nx[j * d..(j + 1) * d], &mut agg_node[i * d..(i + 1) * d]);
                    axpy(a, w, &mut agg_edge[i * e_dim..(i + 1) * e_dim]);
                }
            }
            let root = layer.w_root.apply(&x, b, false);
            let edge_msg = layer.w_edge.apply(&agg_edge, b, false);
            for k in 0..b * d {
                x[k] = (root[k] + (agg_node[k] + edge_msg[k])).max(0.0);
            }
            attention.push(alpha);
            embeddings.push(split_rows(&x, d));
        }

        let h = self.decoder[0].apply(&x, b, true);
        let out = self.decoder[1].apply(&h, b, false);
        let mut logits = Vec::with_capacity(b);
        let mut probabilities = Vec::with_capacity(b);
        for row in out.chunks_exact(ACTIONS) {
            let l: [f64; ACTIONS] = row.try_into().expect("action row");
            logits.push(l);
            probabilities.push(softmax(&l));
        }
        Ok(ForwardDetail {
            embeddings,
            attention,
            logits,
            probabilities,
        })
    }

    /// Valid 3×3 convolutions over `[channel][agent][row][col]`, then a
    /// global max over the remaining spatial cells. Returns `[agent][dim]`.
    fn encode(&self, obs: &[ObservationTensor], side: usize) -> Vec<f64> {
        let b = obs.len();
        let plane = side * side;
        let mut act = vec![0.0; CHANNELS * b * plane];
        for (i, o) in obs.iter().enumerate() {
            for c in 0..CHANNELS {
                let dst = &mut act[(c * b + i) * plane..(c * b + i + 1) * plane];
                for (d, &s) in dst.iter_mut().zip(&o.data[c * plane..(c + 1) * plane]) {
                    *d = s as f64;
                }
            }
        }
        let mut hw = side;
        let mut channels = CHANNELS;
        for conv in &self.convs {
            let ho = hw - 2;
            let cols = b * ho * ho;
            let k = channels * 9;
            let mut col = vec![0.0; k * cols];
            for ci in 0..channels {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let row = &mut col[(ci * 9 + ky * 3 + kx) * cols..][..cols];
                        for a in 0..b {
                            let src = &act[(ci * b + a) * hw * hw..];
                            for oy in 0..ho {
                                let src_row = &src[(oy + ky) * hw + kx..][..ho];
                                row[(a * ho + oy) * ho..][..ho].copy_from_slice(src_row);
                            }
                        }
                    }
                }
            }
            let mut next = vec![0.0; conv.out * cols];
            gemm(conv.out, k, cols, &conv.w, &col, cols, 1, &mut next);
            let bias = conv.b.as_ref().expect("conv bias");
            for (c, chunk) in next.chunks_exact_mut(cols).enumerate() {
                for v in chunk {
                    *v = (*v + bias[c]).max(0.0);
                }
            }
            act = next;
            hw = ho;
            channels = conv.out;
        }
        let cells = hw * hw;
        let mut x = vec![0.0; b * channels];
        for c in 0..channels {
            for a in 0..b {
                let cell = &act[(c * b + a) * cells..][..cells];
                x[a * channels + c] = cell.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        x
    }

    /// `φ(ω)` for every edge, `[edge][edge_dim]`.
    fn edge_features(&self, graph: &CommGraph) -> Vec<f64> {
        let raw: Vec<f64> = graph
            .edges
            .iter()
            .flat_map(|e| e.feature.iter().map(|&v| v as f64))
            .collect();
        let h = self.edge_mlp[0].apply(&raw, graph.edges.len(), true);
        self.edge_mlp[1].apply(&h, graph.edges.len(), false)
    }
}

/// Row-wise `x · W` for `W` shaped `[x_dim, out]` stored as `[rows=x_dim][cols]`,
/// i.e. `(Wᵀ x)` per row; used for `x_iᵀ Θ_e`.
fn transpose_apply(dense: &Dense, x: &[f64], rows: usize) -> Vec<f64> {
    let cols = dense.inp;
    let mut y = vec![0.0; rows * cols];
    gemm(rows, dense.out, cols, x, &dense.w, cols, 1, &mut y);
    y
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (t, s) in y.iter_mut().zip(x) {
        *t += alpha * s;
    }
}

pub fn softmax(logits: &[f64; ACTIONS]) -> [f64; ACTIONS] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = logits.map(|l| (l - max).exp());
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
    out
}

fn split_rows(x: &[f64], d: usize) -> Vec<Vec<f64>> {
    x.chunks_exact(d).map(<[f64]>::to_vec).collect()
}
