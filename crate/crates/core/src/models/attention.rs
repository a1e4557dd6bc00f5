use serde::{Deserialize, Serialize};

use super::attention_net::{AttentionNet, HeadConfig, StageWidths, TargetScale};
use super::{ModelKind, SequenceModel};
use crate::error::{Error, Result};
use crate::nn::{Bound, Dropout, Mode, ParamStore};
use crate::tensor::{Graph, Tensor, Var};

/// Attention across all locations of one `(day, season)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialModelConfig {
    pub n_locations: usize,
    pub feature_dim: usize,
    #[serde(flatten)]
    pub head: HeadConfig,
    #[serde(default)]
    pub target: TargetScale,
}

impl SpatialModelConfig {
    pub fn new(n_locations: usize, feature_dim: usize, head: HeadConfig) -> Self {
        Self {
            n_locations,
            feature_dim,
            head,
            target: TargetScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_locations < 2 {
            return Err(Error::config(format!(
                "spatial model needs at least 2 locations, got {}",
                self.n_locations
            )));
        }
        self.head.validate()
    }
}

/// Attention across the days of one location's season.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalModelConfig {
    pub season_length: usize,
    pub feature_dim: usize,
    #[serde(flatten)]
    pub head: HeadConfig,
    #[serde(default)]
    pub target: TargetScale,
}

impl TemporalModelConfig {
    pub fn new(season_length: usize, feature_dim: usize, head: HeadConfig) -> Self {
        Self {
            season_length,
            feature_dim,
            head,
            target: TargetScale::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.season_length < 1 {
            return Err(Error::config("season length must be at least 1"));
        }
        self.head.validate()
    }
}

#[derive(Clone, Debug)]
pub struct SpatialModel {
    pub cfg: SpatialModelConfig,
    net: AttentionNet,
}

impl SpatialModel {
    pub fn new(cfg: SpatialModelConfig) -> Result<Self> {
        cfg.validate()?;
        let net = AttentionNet::new(cfg.n_locations, cfg.feature_dim, &cfg.head, false)?;
        Ok(Self { cfg, net })
    }

    /// Eval-mode forward that also reports the width at each stage.
    pub fn forward_widths(&self, params: &ParamStore, x: &Tensor) -> Result<(Tensor, StageWidths)> {
        traced(&self.net, self.cfg.target, params, x)
    }
}

#[derive(Clone, Debug)]
pub struct TemporalModel {
    pub cfg: TemporalModelConfig,
    net: AttentionNet,
}

impl TemporalModel {
    pub fn new(cfg: TemporalModelConfig) -> Result<Self> {
        cfg.validate()?;
        let net = AttentionNet::new(cfg.season_length, cfg.feature_dim, &cfg.head, true)?;
        Ok(Self { cfg, net })
    }

    pub fn forward_widths(&self, params: &ParamStore, x: &Tensor) -> Result<(Tensor, StageWidths)> {
        traced(&self.net, self.cfg.target, params, x)
    }
}

fn traced(
    net: &AttentionNet,
    target: TargetScale,
    params: &ParamStore,
    x: &Tensor,
) -> Result<(Tensor, StageWidths)> {
    let mut g = Graph::new();
    let p = params.bind(&mut g);
    let xv = g.constant(x.clone());
    let mut widths = StageWidths::default();
    let y = net.forward(&mut g, &p, xv, &mut Dropout::eval(), Some(&mut widths))?;
    let y = target.apply(&mut g, y)?;
    Ok((g.value(y).clone(), widths))
}

impl SequenceModel for SpatialModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Spatial
    }

    fn seq_len(&self) -> usize {
        self.net.seq_len()
    }

    fn feature_dim(&self) -> usize {
        self.net.feature_dim()
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn init_params(&self, seed: u64) -> ParamStore {
        self.net.init(seed)
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var, drop: &mut Dropout) -> Result<Var> {
        let y = self.net.forward(g, p, x, drop, None)?;
        self.cfg.target.apply(g, y)
    }
}

impl SequenceModel for TemporalModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Temporal
    }

    fn seq_len(&self) -> usize {
        self.net.seq_len()
    }

    fn feature_dim(&self) -> usize {
        self.net.feature_dim()
    }

    fn param_count(&self) -> usize {
        self.net.param_count()
    }

    fn init_params(&self, seed: u64) -> ParamStore {
        self.net.init(seed)
    }

    fn forward(&self, g: &mut Graph, p: &Bound, x: Var, drop: &mut Dropout) -> Result<Var> {
        let y = self.net.forward(g, p, x, drop, None)?;
        self.cfg.target.apply(g, y)
    }
}

/// `[n×F]` locations of one day → `[n]` SWE values.
pub fn spatial_forward(
    cfg: &SpatialModelConfig,
    params: &ParamStore,
    x_seq: &Tensor,
    mode: Mode,
    seed: u64,
) -> Result<Tensor> {
    SpatialModel::new(cfg.clone())?.run(params, x_seq, &mut Dropout::new(mode, seed))
}

/// `[m×F]` days of one location → `[m]` SWE values.
pub fn temporal_forward(
    cfg: &TemporalModelConfig,
    params: &ParamStore,
    x_seq: &Tensor,
    mode: Mode,
    seed: u64,
) -> Result<Tensor> {
    TemporalModel::new(cfg.clone())?.run(params, x_seq, &mut Dropout::new(mode, seed))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::models::attention_net::{attention_param_count, planned_widths};
    use crate::nn::uniform_init;
    use crate::tensor::grad_check;

    fn tiny_head(d: usize) -> HeadConfig {
        let mut h = HeadConfig::new(d, 2, 1);
        h.encoder.ffn_hidden_dim = 2 * d;
        h
    }

    #[test]
    fn config_invariants() {
        let mut head = tiny_head(8);
        assert!(SpatialModelConfig::new(1, 6, head.clone())
            .validate()
            .is_err());
        head.reduction_dims = vec![8, 4, 2];
        assert!(SpatialModelConfig::new(4, 6, head.clone())
            .validate()
            .is_err());
        head.reduction_dims = vec![8, 4, 2, 3];
        assert!(SpatialModelConfig::new(4, 6, head).validate().is_err());
        assert!(SpatialModelConfig::new(4, 6, tiny_head(8))
            .validate()
            .is_ok());
    }

    #[test]
    fn paper_width_arithmetic() {
        let head = HeadConfig::paper();
        let w = planned_widths(323, &head);
        assert_eq!(
            (w.embed, w.concat, w.reduced, w.flattened),
            (512, 1024, 128, 323 * 128)
        );
    }

    #[test]
    fn output_shape_and_finite() {
        let model = SpatialModel::new(SpatialModelConfig::new(4, 6, tiny_head(8))).unwrap();
        let params = model.init_params(1);
        assert_eq!(params.num_scalars(), model.param_count());
        assert_eq!(
            model.param_count(),
            attention_param_count(4, 6, &model.cfg.head)
        );
        let x = uniform_init(&[4, 6], 1, &mut ChaCha8Rng::seed_from_u64(2));
        let y = model.predict(&params, &x).unwrap();
        assert_eq!(y.shape(), &[4]);
        assert!(y.all_finite());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let model = SpatialModel::new(SpatialModelConfig::new(4, 6, tiny_head(8))).unwrap();
        let params = model.init_params(1);
        assert!(model.predict(&params, &Tensor::zeros(&[5, 6])).is_err());
        assert!(model.predict(&params, &Tensor::zeros(&[4, 7])).is_err());
    }

    #[test]
    fn spatial_mse_gradients_tiny() {
        let model = SpatialModel::new(SpatialModelConfig::new(4, 6, tiny_head(8))).unwrap();
        let params = model.init_params(3);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = uniform_init(&[4, 6], 1, &mut rng);
        let target = uniform_init(&[4], 1, &mut rng);
        let n = params.len();
        // Entries in [-1, 1]: at the default init the attention scores are
        // near zero and some gradients fall below finite-difference noise.
        let mut inputs: Vec<Tensor> = params
            .tensors()
            .iter()
            .map(|t| uniform_init(t.shape(), 1, &mut rng))
            .collect();
        inputs.push(x);
        let report = grad_check(
            |g, v| {
                let p = params.bind_vars(&v[..n])?;
                let y = model.forward(g, &p, v[n], &mut Dropout::eval())?;
                let t = g.constant(target.clone());
                let d = g.sub(y, t)?;
                let sq = g.mul(d, d)?;
                let s = g.sum(sq);
                Ok(g.scale(s, 0.25))
            },
            &inputs,
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn temporal_single_day_and_order_sensitivity() {
        let one = TemporalModel::new(TemporalModelConfig::new(1, 5, tiny_head(8))).unwrap();
        let p1 = one.init_params(0);
        let y = one.predict(&p1, &Tensor::filled(&[1, 5], 0.3)).unwrap();
        assert_eq!(y.shape(), &[1]);

        let model = TemporalModel::new(TemporalModelConfig::new(6, 5, tiny_head(8))).unwrap();
        let params = model.init_params(5);
        let x = uniform_init(&[6, 5], 1, &mut ChaCha8Rng::seed_from_u64(6));
        let rev_rows: Vec<Vec<f64>> = (0..6).rev().map(|i| x.row(i).to_vec()).collect();
        let xr = Tensor::from_rows(&rev_rows).unwrap();
        let y = model.predict(&params, &x).unwrap();
        let yr = model.predict(&params, &xr).unwrap();
        let reversed: Vec<f64> = yr.data().iter().rev().copied().collect();
        assert!(y
            .data()
            .iter()
            .zip(&reversed)
            .any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn swapping_locations_changes_output() {
        let model = SpatialModel::new(SpatialModelConfig::new(4, 6, tiny_head(8))).unwrap();
        let params = model.init_params(8);
        let x = uniform_init(&[4, 6], 1, &mut ChaCha8Rng::seed_from_u64(9));
        let mut rows: Vec<Vec<f64>> = (0..4).map(|i| x.row(i).to_vec()).collect();
        rows.swap(0, 1);
        let xs = Tensor::from_rows(&rows).unwrap();
        let y = model.predict(&params, &x).unwrap();
        let ys = model.predict(&params, &xs).unwrap();
        // Not simply the swapped output: the head is position dependent.
        assert!(
            (ys.data()[0] - y.data()[1]).abs() > 1e-9 || (ys.data()[1] - y.data()[0]).abs() > 1e-9
        );
    }

    #[test]
    fn eval_forward_is_deterministic_and_train_mode_differs() {
        let model = SpatialModel::new(SpatialModelConfig::new(4, 6, tiny_head(8))).unwrap();
        let params = model.init_params(8);
        let x = uniform_init(&[4, 6], 1, &mut ChaCha8Rng::seed_from_u64(9));
        let a = spatial_forward(&model.cfg, &params, &x, Mode::Eval, 0).unwrap();
        let b = spatial_forward(&model.cfg, &params, &x, Mode::Eval, 1).unwrap();
        assert_eq!(a, b);
        let t = spatial_forward(&model.cfg, &params, &x, Mode::Train, 1).unwrap();
        assert_ne!(a, t);
    }
}
