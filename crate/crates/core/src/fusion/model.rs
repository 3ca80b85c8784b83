//! Encoders, proposal-gesture-language fusion, and the training loss.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::config::FusionDims;
use crate::error::{Error, Result};
use crate::geom::{Aabb, PointCloud, RigidTransform, Vec3};
use crate::seed::fnv1a;

use super::graph::{Graph, Var};
use super::params::{ModelParams, DECODER_LAYERS, POINT_FEATURES};
use super::tensor::Tensor;

pub const MAX_TOKENS: usize = 126;
/// Box centers and sizes are divided by these before entering the network.
const CENTER_SCALE: f64 = 4.0;
const SIZE_SCALE: f64 = 2.0;
/// Smallest size-bin template (max box extent, meters); bins double.
const SIZE_BIN_BASE: f64 = 0.3;

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Grouped local neighborhoods of the agent cloud, independent of point
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGesture {
    /// One row per grouped point: offset from its centroid over the radius,
    /// then the normal.
    pub rows: Tensor,
    pub groups: Vec<Vec<usize>>,
    /// Centroid positions (G×3).
    pub centroids: Tensor,
}

/// Farthest-point sampling from the lexicographically largest point; ties
/// go to the lexicographically larger point so the result does not depend
/// on input order.
pub fn prepare_gesture(cloud: &PointCloud, dims: &FusionDims) -> Result<PreparedGesture> {
    if cloud.is_empty() {
        return Err(Error::invalid("gesture cloud is empty"));
    }
    let zero = vec![Vec3::zeros(); cloud.len()];
    let normals = cloud.normals().unwrap_or(&zero);
    let keys: Vec<[f64; 6]> = cloud
        .points()
        .iter()
        .zip(normals)
        .map(|(p, n)| [p.x, p.y, p.z, n.x, n.y, n.z])
        .collect();
    let larger = |i: usize, j: usize| lex_cmp(&keys[i], &keys[j]) == Ordering::Greater;

    let n = keys.len();
    let g = dims.centroids.min(n);
    let mut start = 0;
    for i in 1..n {
        if larger(i, start) {
            start = i;
        }
    }
    let mut chosen = vec![start];
    let pts = cloud.points();
    let mut dist: Vec<f64> = pts.iter().map(|p| (p - pts[start]).norm_squared()).collect();
    while chosen.len() < g {
        let mut best = 0;
        for i in 1..n {
            match dist[i].total_cmp(&dist[best]) {
                Ordering::Greater => best = i,
                Ordering::Equal if larger(i, best) => best = i,
                _ => {}
            }
        }
        chosen.push(best);
        for i in 0..n {
            dist[i] = dist[i].min((pts[i] - pts[best]).norm_squared());
        }
    }

    let r = dims.group_radius;
    let mut rows = Vec::new();
    let mut groups = Vec::with_capacity(g);
    let mut centroids = Vec::with_capacity(g * 3);
    for &c in &chosen {
        let cp = pts[c];
        let mut near: Vec<(f64, usize)> = (0..n)
            .map(|i| ((pts[i] - cp).norm_squared(), i))
            .filter(|(d, _)| *d <= r * r)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| lex_cmp(&keys[a.1], &keys[b.1])));
        near.truncate(dims.group_size);
        let first = rows.len() / POINT_FEATURES;
        for (_, i) in &near {
            let d = (pts[*i] - cp) / r;
            rows.extend_from_slice(&[d.x, d.y, d.z, normals[*i].x, normals[*i].y, normals[*i].z]);
        }
        groups.push((first..first + near.len()).collect());
        centroids.extend_from_slice(&[cp.x, cp.y, cp.z]);
    }
    let count = rows.len() / POINT_FEATURES;
    Ok(PreparedGesture {
        rows: Tensor::new(count, POINT_FEATURES, rows)?,
        groups,
        centroids: Tensor::new(g, 3, centroids)?,
    })
}

/// Pooled point sets and geometry of each candidate box.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedProposals {
    /// Centered (and frame-rotated) xyz plus color per sampled point.
    pub rows: Tensor,
    pub groups: Vec<Vec<usize>>,
    /// Normalized center and size per box (M×6).
    pub boxes: Tensor,
    /// Boxes with no scene points; their features come from geometry alone.
    pub empty: Vec<bool>,
}

/// `boxes` pairs each box with the indices of scene points inside it;
/// `frame` maps world coordinates into the model frame.
pub fn prepare_proposals(
    cloud: &PointCloud,
    boxes: &[(Aabb, &[usize])],
    frame: &RigidTransform,
    dims: &FusionDims,
) -> Result<PreparedProposals> {
    if boxes.is_empty() {
        return Err(Error::invalid("at least one proposal box is required"));
    }
    let colors = cloud.colors();
    let mut rows = Vec::new();
    let mut groups = Vec::with_capacity(boxes.len());
    let mut geo = Vec::with_capacity(boxes.len() * 6);
    let mut empty = Vec::with_capacity(boxes.len());
    for (b, idx) in boxes {
        let c = b.center();
        let take = idx.len().min(dims.proposal_points);
        let first = rows.len() / POINT_FEATURES;
        for k in 0..take {
            let i = idx[k * idx.len() / take];
            let p = cloud.points().get(i).ok_or_else(|| Error::invalid(format!("point index {i} out of range")))?;
            let d = frame.apply_vector(&(p - c));
            let col = colors.map_or(Vec3::zeros(), |cs| cs[i]);
            rows.extend_from_slice(&[d.x, d.y, d.z, col.x, col.y, col.z]);
        }
        groups.push((first..first + take).collect());
        empty.push(take == 0);
        let center = if dims.center_channels {
            frame.apply_point(&c).coords / CENTER_SCALE
        } else {
            Vec3::zeros()
        };
        let size = b.size() / SIZE_SCALE;
        geo.extend_from_slice(&[center.x, center.y, center.z, size.x, size.y, size.z]);
    }
    let count = rows.len() / POINT_FEATURES;
    Ok(PreparedProposals {
        rows: Tensor::new(count, POINT_FEATURES, rows)?,
        groups,
        boxes: Tensor::new(boxes.len(), 6, geo)?,
        empty,
    })
}

/// Hashed vocabulary ids.
pub fn token_ids(tokens: &[String], dims: &FusionDims) -> Result<Vec<usize>> {
    if tokens.is_empty() || tokens.len() > MAX_TOKENS {
        return Err(Error::invalid(format!("token count must be in 1..={MAX_TOKENS}, got {}", tokens.len())));
    }
    Ok(tokens.iter().map(|t| (fnv1a(t) % dims.vocab as u64) as usize).collect())
}

pub fn class_of(label: &str, dims: &FusionDims) -> usize {
    (fnv1a(&label.trim().to_lowercase()) % dims.classes as u64) as usize
}

/// Nearest size template in log scale, and the relative residual per axis.
pub fn size_target(size: &Vec3, dims: &FusionDims) -> (usize, [f64; 3]) {
    let extent = size.max().max(1e-6);
    let bin = (0..dims.size_bins)
        .min_by(|&a, &b| {
            let da = (extent / (SIZE_BIN_BASE * 2f64.powi(a as i32))).ln().abs();
            let db = (extent / (SIZE_BIN_BASE * 2f64.powi(b as i32))).ln().abs();
            da.total_cmp(&db)
        })
        .unwrap_or(0);
    let t = SIZE_BIN_BASE * 2f64.powi(bin as i32);
    (bin, [size.x / t - 1.0, size.y / t - 1.0, size.z / t - 1.0])
}

/// Supervision for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub gt_index: usize,
    pub proposal_classes: Vec<usize>,
    pub size_bins: Vec<usize>,
    pub size_residuals: Tensor,
    pub language_class: usize,
}

impl Targets {
    pub fn new(labels: &[&str], sizes: &[Vec3], gt_index: usize, dims: &FusionDims) -> Result<Targets> {
        if gt_index >= labels.len() || labels.len() != sizes.len() {
            return Err(Error::invalid(format!("target index {gt_index} out of range for {} proposals", labels.len())));
        }
        let (bins, res): (Vec<usize>, Vec<[f64; 3]>) = sizes.iter().map(|s| size_target(s, dims)).unzip();
        Ok(Targets {
            gt_index,
            proposal_classes: labels.iter().map(|l| class_of(l, dims)).collect(),
            size_bins: bins,
            size_residuals: Tensor::new(res.len(), 3, res.concat())?,
            language_class: class_of(labels[gt_index], dims),
        })
    }
}

/// Everything the network consumes for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionSample {
    pub gesture: PreparedGesture,
    pub proposals: PreparedProposals,
    pub tokens: Vec<usize>,
    pub targets: Targets,
    /// World boxes of the proposals, for IoU scoring.
    pub boxes: Vec<Aabb>,
}

impl FusionSample {
    pub fn proposal_count(&self) -> usize {
        self.boxes.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeatureBundle {
    pub f_p: Var,
    pub f_g: Var,
    pub f_l: Var,
    pub f_l_global: Var,
    pub f_p_ges: Var,
}

/// Output heads: proposal logits plus the auxiliary detection and
/// language-classification heads.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    /// Proposal logits (1×M).
    pub logits: Var,
    pub objectness: Var,
    pub semantic: Var,
    pub center: Var,
    pub size_cls: Var,
    pub size_reg: Var,
    pub language_cls: Var,
}

#[derive(Debug, Clone)]
pub struct Forward {
    pub features: FeatureBundle,
    pub heads: Heads,
    /// Softmax over proposals (1×M).
    pub confidences: Var,
    /// Every attention matrix, for inspection.
    pub attention: Vec<Var>,
}

/// Loss terms and their fixed compositions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_total: f64,
    pub l_loc: f64,
    pub l_det: f64,
    pub l_cls: f64,
    pub l_vote_reg: f64,
    pub l_objn_cls: f64,
    pub l_sem_cls: f64,
    pub l_box: f64,
    pub l_center_reg: f64,
    pub l_size_cls: f64,
    pub l_size_reg: f64,
}

pub const W_LOC: f64 = 0.3;
pub const W_DET: f64 = 10.0;
pub const W_CLS: f64 = 0.1;
pub const W_OBJN: f64 = 0.1;
pub const W_SEM: f64 = 0.1;
pub const W_SIZE_CLS: f64 = 0.1;

impl LossBreakdown {
    /// Fills the composite terms from the leaf terms.
    pub fn compose(
        l_loc: f64,
        l_cls: f64,
        l_vote_reg: f64,
        l_objn_cls: f64,
        l_sem_cls: f64,
        l_center_reg: f64,
        l_size_cls: f64,
        l_size_reg: f64,
    ) -> LossBreakdown {
        let l_box = l_center_reg + W_SIZE_CLS * l_size_cls + l_size_reg;
        let l_det = l_vote_reg + W_OBJN * l_objn_cls + W_SEM * l_sem_cls + l_box;
        LossBreakdown {
            l_total: W_LOC * l_loc + W_DET * l_det + W_CLS * l_cls,
            l_loc,
            l_det,
            l_cls,
            l_vote_reg,
            l_objn_cls,
            l_sem_cls,
            l_box,
            l_center_reg,
            l_size_cls,
            l_size_reg,
        }
    }
}

/// Graph nodes of every loss term.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub loc: Var,
    pub det: Var,
    pub cls: Var,
    pub vote_reg: Var,
    pub objn: Var,
    pub sem: Var,
    pub bbox: Var,
    pub center: Var,
    pub size_cls: Var,
    pub size_reg: Var,
}

impl LossVars {
    pub fn breakdown(&self, g: &Graph) -> LossBreakdown {
        let v = |x: Var| g.value(x).data()[0];
        LossBreakdown {
            l_total: v(self.total),
            l_loc: v(self.loc),
            l_det: v(self.det),
            l_cls: v(self.cls),
            l_vote_reg: v(self.vote_reg),
            l_objn_cls: v(self.objn),
            l_sem_cls: v(self.sem),
            l_box: v(self.bbox),
            l_center_reg: v(self.center),
            l_size_cls: v(self.size_cls),
            l_size_reg: v(self.size_reg),
        }
    }
}

/// Binds parameters to a graph.
pub struct Model<'a> {
    pub params: &'a ModelParams,
}

impl<'a> Model<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        Model { params }
    }

    fn dims(&self) -> &FusionDims {
        &self.params.dims
    }

    fn p(&self, g: &mut Graph, name: &str) -> Var {
        g.param(self.params.id(name))
    }

    fn linear(&self, g: &mut Graph, x: Var, name: &str) -> Var {
        let w = self.p(g, &format!("{name}.w"));
        let b = self.p(g, &format!("{name}.b"));
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    fn linear_gelu(&self, g: &mut Graph, x: Var, name: &str) -> Var {
        let y = self.linear(g, x, name);
        g.gelu(y)
    }

    /// Scaled dot-product attention with `heads` heads; `prefix.{q,k,v}`
    /// weights and, if `output`, an `prefix.o` projection. Returns the
    /// output and each head's attention matrix.
    fn attention(&self, g: &mut Graph, query: Var, context: Var, prefix: &str, output: bool) -> (Var, Vec<Var>) {
        let h = self.dims().hidden;
        let heads = self.dims().heads;
        let dh = h / heads;
        let wq = self.p(g, &format!("{prefix}.q"));
        let wk = self.p(g, &format!("{prefix}.k"));
        let wv = self.p(g, &format!("{prefix}.v"));
        let q = g.matmul(query, wq);
        let k = g.matmul(context, wk);
        let v = g.matmul(context, wv);
        let mut outs = Vec::with_capacity(heads);
        let mut maps = Vec::with_capacity(heads);
        for i in 0..heads {
            let (qi, ki, vi) = if heads == 1 {
                (q, k, v)
            } else {
                (g.col_slice(q, i * dh, dh), g.col_slice(k, i * dh, dh), g.col_slice(v, i * dh, dh))
            };
            let s = g.matmul_t(qi, ki);
            let s = g.scale(s, 1.0 / (dh as f64).sqrt());
            let a = g.softmax_rows(s);
            maps.push(a);
            outs.push(g.matmul(a, vi));
        }
        let mut out = if heads == 1 { outs[0] } else { g.concat_cols(&outs) };
        if output {
            let wo = self.p(g, &format!("{prefix}.o"));
            out = g.matmul(out, wo);
        }
        (out, maps)
    }

    /// Two shared point perceptrons, per-group max-pool, centroid position
    /// concatenation, a third perceptron, global max-pool and projection.
    pub fn encode_gesture(&self, g: &mut Graph, x: &PreparedGesture) -> Var {
        let rows = g.input(x.rows.clone());
        let h = self.linear_gelu(g, rows, "gesture.sa1");
        let h = self.linear_gelu(g, h, "gesture.sa2");
        let pooled = g.group_max(h, &x.groups);
        let cents = g.input(x.centroids.clone());
        let cat = g.concat_cols(&[pooled, cents]);
        let h3 = self.linear_gelu(g, cat, "gesture.sa3");
        let all: Vec<usize> = (0..x.groups.len()).collect();
        let global = g.group_max(h3, &[all]);
        self.linear(g, global, "gesture.proj")
    }

    /// GRU over hashed embeddings, then self-attention with a residual.
    /// Returns `(F_l, F_l_global, attention maps)`.
    pub fn encode_language(&self, g: &mut Graph, tokens: &[usize]) -> (Var, Var, Vec<Var>) {
        let h = self.dims().hidden;
        let table = self.p(g, "lang.embed");
        let e = g.gather(table, tokens);
        let xg = self.linear(g, e, "lang.gru_x");
        let mut state = g.input(Tensor::zeros(1, h));
        let mut states = Vec::with_capacity(tokens.len());
        for t in 0..tokens.len() {
            let xt = g.row_slice(xg, t, 1);
            let hg = self.linear(g, state, "lang.gru_h");
            let (xz, xr, xn) = (g.col_slice(xt, 0, h), g.col_slice(xt, h, h), g.col_slice(xt, 2 * h, h));
            let (hz, hr, hn) = (g.col_slice(hg, 0, h), g.col_slice(hg, h, h), g.col_slice(hg, 2 * h, h));
            let z = g.add(xz, hz);
            let z = g.sigmoid(z);
            let r = g.add(xr, hr);
            let r = g.sigmoid(r);
            let rh = g.mul(r, hn);
            let n = g.add(xn, rh);
            let n = g.tanh(n);
            // h' = (1 - z)·n + z·h = n + z·(h - n)
            let d = g.sub(state, n);
            let zd = g.mul(z, d);
            state = g.add(n, zd);
            states.push(state);
        }
        let hs = g.concat_rows(&states);
        let (a, maps) = self.attention(g, hs, hs, "lang.attn", false);
        let f_l = g.add(hs, a);
        (f_l, state, maps)
    }

    /// Shared perceptron over each box's points, max-pool, box geometry,
    /// projection to the hidden size.
    pub fn encode_proposals(&self, g: &mut Graph, x: &PreparedProposals) -> Var {
        let rows = g.input(x.rows.clone());
        let h = self.linear_gelu(g, rows, "proposal.mlp1");
        let h = self.linear_gelu(g, h, "proposal.mlp2");
        let pooled = g.group_max(h, &x.groups);
        let geo = g.input(x.boxes.clone());
        let cat = g.concat_cols(&[pooled, geo]);
        self.linear(g, cat, "proposal.proj")
    }

    fn decoder_layer(&self, g: &mut Graph, x: Var, f_l: Var, l: usize, maps: &mut Vec<Var>) -> Var {
        let (a, m) = self.attention(g, x, x, &format!("dec{l}.self"), true);
        maps.extend(m);
        let x = g.add(x, a);
        let x = g.layer_norm_rows(x);
        let (c, m) = self.attention(g, x, f_l, &format!("dec{l}.cross"), true);
        maps.extend(m);
        let x = g.add(x, c);
        let x = g.layer_norm_rows(x);
        let f = self.linear_gelu(g, x, &format!("dec{l}.ffn1"));
        let f = self.linear(g, f, &format!("dec{l}.ffn2"));
        let x = g.add(x, f);
        g.layer_norm_rows(x)
    }

    /// Proposal-gesture fusion, stacked decoder with language keys/values,
    /// and the confidence head. Returns `(F_p_ges, logits, confidences,
    /// final proposal features, attention maps)`.
    pub fn fuse(&self, g: &mut Graph, f_p: Var, f_g: Var, f_l: Var) -> Result<(Var, Var, Var, Var, Vec<Var>)> {
        let h = self.dims().hidden;
        let [m, hp] = g.shape(f_p);
        if hp != h || g.shape(f_g) != [1, h] || g.shape(f_l)[1] != h || m == 0 {
            return Err(Error::invalid(format!(
                "fuse dims: F_p {:?}, F_g {:?}, F_l {:?}, hidden {h}",
                g.shape(f_p),
                g.shape(f_g),
                g.shape(f_l)
            )));
        }
        let fg = g.repeat_rows(f_g, m);
        let cat = g.concat_cols(&[f_p, fg]);
        let f_p_ges = self.linear_gelu(g, cat, "fuse");
        let mut maps = Vec::new();
        let mut x = f_p_ges;
        for l in 0..DECODER_LAYERS {
            x = self.decoder_layer(g, x, f_l, l, &mut maps);
        }
        let col = self.linear(g, x, "head");
        let logits = g.transpose(col);
        let conf = g.softmax_rows(logits);
        Ok((f_p_ges, logits, conf, x, maps))
    }

    pub fn forward(&self, g: &mut Graph, s: &FusionSample) -> Result<Forward> {
        self.forward_with(g, s, None)
    }

    /// Like `forward`, but takes a precomputed gesture feature when given.
    pub fn forward_with(&self, g: &mut Graph, s: &FusionSample, gesture: Option<&Tensor>) -> Result<Forward> {
        let f_g = match gesture {
            Some(t) => g.input(t.clone()),
            None => self.encode_gesture(g, &s.gesture),
        };
        let (f_l, f_l_global, mut attention) = self.encode_language(g, &s.tokens);
        let f_p = self.encode_proposals(g, &s.proposals);
        let (f_p_ges, logits, confidences, x, maps) = self.fuse(g, f_p, f_g, f_l)?;
        attention.extend(maps);
        let heads = Heads {
            logits,
            objectness: self.linear(g, x, "aux.objectness"),
            semantic: self.linear(g, x, "aux.semantic"),
            center: self.linear(g, x, "aux.center"),
            size_cls: self.linear(g, x, "aux.size_cls"),
            size_reg: self.linear(g, x, "aux.size_reg"),
            language_cls: self.linear(g, f_l_global, "lang.cls"),
        };
        Ok(Forward {
            features: FeatureBundle {
                f_p,
                f_g,
                f_l,
                f_l_global,
                f_p_ges,
            },
            heads,
            confidences,
            attention,
        })
    }
}

/// Builds every loss term on the graph. Objectness targets are 1 and
/// center offsets 0 because proposals are ground-truth boxes; the vote
/// regression term is identically zero for the same reason.
pub fn build_loss(g: &mut Graph, f: &Heads, t: &Targets) -> Result<LossVars> {
    let m = g.shape(f.logits)[1];
    if t.gt_index >= m || t.proposal_classes.len() != m || t.size_bins.len() != m {
        return Err(Error::invalid(format!("targets do not fit {m} proposals (gt {})", t.gt_index)));
    }
    let loc = g.cross_entropy_rows(f.logits, &[t.gt_index]);
    let objn = g.cross_entropy_rows(f.objectness, &vec![1; m]);
    let sem = g.cross_entropy_rows(f.semantic, &t.proposal_classes);
    let center = g.smooth_l1(f.center, Tensor::zeros(m, 3));
    let size_cls = g.cross_entropy_rows(f.size_cls, &t.size_bins);
    let size_reg = g.smooth_l1(f.size_reg, t.size_residuals.clone());
    let cls = g.cross_entropy_rows(f.language_cls, &[t.language_class]);
    let vote_reg = g.input(Tensor::scalar(0.0));
    let bbox = g.weighted_sum(&[(center, 1.0), (size_cls, W_SIZE_CLS), (size_reg, 1.0)]);
    let det = g.weighted_sum(&[(vote_reg, 1.0), (objn, W_OBJN), (sem, W_SEM), (bbox, 1.0)]);
    let total = g.weighted_sum(&[(loc, W_LOC), (det, W_DET), (cls, W_CLS)]);
    Ok(LossVars {
        total,
        loc,
        det,
        cls,
        vote_reg,
        objn,
        sem,
        bbox,
        center,
        size_cls,
        size_reg,
    })
}

/// Confidences for one sample, without building a loss.
pub fn predict(params: &ModelParams, s: &FusionSample) -> Result<Vec<f64>> {
    let mut g = Graph::new(params.tensors());
    let f = Model::new(params).forward(&mut g, s)?;
    Ok(g.value(f.confidences).data().to_vec())
}

/// Loss breakdown and parameter gradients of one sample.
pub fn loss_and_grads(params: &ModelParams, s: &FusionSample) -> Result<(LossBreakdown, Vec<Option<Tensor>>)> {
    let mut g = Graph::new(params.tensors());
    let model = Model::new(params);
    let f = model.forward(&mut g, s)?;
    let l = build_loss(&mut g, &f.heads, &s.targets)?;
    let b = l.breakdown(&g);
    if !b.l_total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {}", b.l_total)));
    }
    Ok((b, g.backward(l.total)))
}

/// Total loss of one sample and the branch signature of its forward pass.
pub fn loss_value(params: &ModelParams, s: &FusionSample) -> Result<(f64, u64)> {
    loss_value_with(params, s, None)
}

/// `loss_value` with an optional precomputed gesture feature.
pub fn loss_value_with(params: &ModelParams, s: &FusionSample, gesture: Option<&Tensor>) -> Result<(f64, u64)> {
    let mut g = Graph::new(params.tensors());
    let f = Model::new(params).forward_with(&mut g, s, gesture)?;
    let l = build_loss(&mut g, &f.heads, &s.targets)?;
    Ok((g.value(l.total).data()[0], g.branch_signature()))
}

/// Gesture feature (1×H) of one sample.
pub fn gesture_feature(params: &ModelParams, s: &FusionSample) -> Tensor {
    let mut g = Graph::new(params.tensors());
    let v = Model::new(params).encode_gesture(&mut g, &s.gesture);
    g.value(v).clone()
}
