//! The full two-phase network: single-modality encoder-decoders for RGB and
//! depth, a gated fusion encoder fed by their features, a fusion decoder,
//! attention modules after every decoder, and three prediction heads.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fusion::{assemble_stage_input, forced_gate_vars, GateMode, GateUnit, GateVars, GateWeights};
use crate::nn::blocks::Cbr;
use crate::nn::encoder::{Encoder, EncoderConfig, SideOutputs};
use crate::nn::fpn::{Fpn, FpnOutput, DEFAULT_WIDTH};
use crate::nn::graph::Graph;
use crate::nn::head::PredictionHead;
use crate::nn::weights::{ModelWeights, Registry};
use crate::ops::elementwise::Activation;
use crate::tam::{Tam, TamGates, TamOutput, BRANCHES};
use crate::tape::Var;
use crate::tensor::{Scalar, Tensor};

/// Spatial sizes must be multiples of this.
pub const INPUT_MULTIPLE: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AcfNetConfig {
    pub stage_channels: [usize; 5],
    pub blocks_per_stage: [usize; 5],
    /// Decoder and attention width.
    pub width: usize,
}

impl Default for AcfNetConfig {
    fn default() -> Self {
        Self {
            stage_channels: EncoderConfig::TOY_CHANNELS,
            blocks_per_stage: [1; 5],
            width: DEFAULT_WIDTH,
        }
    }
}

/// Per-pass switches.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardOptions {
    pub gates: GateMode,
    pub tam: TamGates,
    /// Replace every gated guidance tensor with zeros before assembly.
    pub zero_guidance: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            gates: GateMode::Learned,
            tam: TamGates::Learned,
            zero_guidance: false,
        }
    }
}

impl ForwardOptions {
    pub fn forced(w: GateWeights) -> Self {
        Self {
            gates: GateMode::Forced(w),
            ..Self::default()
        }
    }
}

/// Named intermediate features of one pass.
#[derive(Clone, Copy, Debug)]
pub struct Intermediates {
    pub sides_r: SideOutputs,
    pub sides_d: SideOutputs,
    pub dec_r: FpnOutput,
    pub dec_d: FpnOutput,
    pub dec_f: FpnOutput,
    /// Guidance at stride 4 (attention outputs of the first-phase decoders).
    pub r: Var,
    pub d: Var,
    /// Guidance at stride 8 and 16 (first-phase decoder levels).
    pub r3: Var,
    pub d3: Var,
    pub r4: Var,
    pub d4: Var,
    /// Hybrid features.
    pub f2: Var,
    pub f3: Var,
    pub f4: Var,
    pub f5: Var,
    /// Gated, concatenated stage inputs before the width adapters.
    pub i1: Var,
    pub i2: Var,
    pub i3: Var,
}

impl Intermediates {
    pub fn named(&self) -> BTreeMap<&'static str, Var> {
        BTreeMap::from([
            ("F2", self.f2),
            ("F3", self.f3),
            ("F4", self.f4),
            ("F5", self.f5),
            ("R", self.r),
            ("D", self.d),
            ("R3", self.r3),
            ("D3", self.d3),
            ("R4", self.r4),
            ("D4", self.d4),
            ("I1", self.i1),
            ("I2", self.i2),
            ("I3", self.i3),
            ("dec_r", self.dec_r.f),
            ("dec_d", self.dec_d.f),
            ("dec_f", self.dec_f.f),
        ])
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ResinResOutput {
    pub sal_r: Var,
    pub sal_d: Var,
    pub sal_f: Var,
    pub gates: GateVars,
    /// Attention passes after the RGB, depth and fusion decoders.
    pub tam_r: TamOutput,
    pub tam_d: TamOutput,
    pub tam_f: TamOutput,
    pub features: Intermediates,
}

/// Detached forward results for a batch.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub sal_r: Tensor<f32>,
    pub sal_d: Tensor<f32>,
    pub sal_f: Tensor<f32>,
    pub gates: Vec<GateWeights>,
    /// Attention gates per item for the RGB, depth and fusion modules.
    pub tam_gates: Vec<[[f64; BRANCHES]; 3]>,
}

#[derive(Clone, Debug)]
pub struct AcfNet {
    pub config: AcfNetConfig,
    pub enc_r: Encoder,
    pub enc_d: Encoder,
    pub dec_r: Fpn,
    pub dec_d: Fpn,
    pub tam_r: Tam,
    pub tam_d: Tam,
    pub gate: GateUnit,
    pub fuse2: Cbr,
    pub adapters: [Cbr; 3],
    pub enc_f: Encoder,
    pub dec_f: Fpn,
    pub tam_f: Tam,
    pub head_r: PredictionHead,
    pub head_d: PredictionHead,
    pub head_f: PredictionHead,
}

impl AcfNet {
    pub fn new(config: AcfNetConfig) -> Result<Self> {
        let sc = config.stage_channels;
        let w = config.width;
        let enc_cfg = |input_channels| EncoderConfig {
            stage_channels: sc,
            blocks_per_stage: config.blocks_per_stage,
            input_channels,
            skip_stages: Default::default(),
        };
        let sides = [sc[1], sc[2], sc[3], sc[4]];
        let adapter = |k: usize, hybrid: usize, out: usize| {
            Cbr::new(&format!("adapt{k}"), hybrid + 2 * w, out, 1, 1, Activation::Relu)
        };
        Ok(Self {
            enc_r: Encoder::new("enc_r", enc_cfg(3))?,
            enc_d: Encoder::new("enc_d", enc_cfg(1))?,
            dec_r: Fpn::new("dec_r", sides, w)?,
            dec_d: Fpn::new("dec_d", sides, w)?,
            tam_r: Tam::new("tam_r", w)?,
            tam_d: Tam::new("tam_d", w)?,
            gate: GateUnit::new("gate", sc[4]),
            fuse2: Cbr::new("fuse2", 2 * w, w, 3, 1, Activation::Relu)?,
            adapters: [adapter(1, w, sc[1])?, adapter(2, sc[2], sc[2])?, adapter(3, sc[3], sc[3])?],
            enc_f: Encoder::new(
                "enc_f",
                EncoderConfig::without_early_stages(sc, config.blocks_per_stage),
            )?,
            dec_f: Fpn::new("dec_f", [w, sc[2], sc[3], sc[4]], w)?,
            tam_f: Tam::new("tam_f", w)?,
            head_r: PredictionHead::new("head_r", w),
            head_d: PredictionHead::new("head_d", w),
            head_f: PredictionHead::new("head_f", w),
            config,
        })
    }

    pub fn toy() -> Self {
        Self::new(AcfNetConfig::default()).expect("default configuration is valid")
    }

    pub fn registry(&self) -> Registry {
        let mut reg = Registry::default();
        self.enc_r.declare(&mut reg);
        self.enc_d.declare(&mut reg);
        self.dec_r.declare(&mut reg);
        self.dec_d.declare(&mut reg);
        self.tam_r.declare(&mut reg);
        self.tam_d.declare(&mut reg);
        self.gate.declare(&mut reg);
        self.fuse2.declare(&mut reg);
        for a in &self.adapters {
            a.declare(&mut reg);
        }
        self.enc_f.declare(&mut reg);
        self.dec_f.declare(&mut reg);
        self.tam_f.declare(&mut reg);
        self.head_r.declare(&mut reg);
        self.head_d.declare(&mut reg);
        self.head_f.declare(&mut reg);
        reg
    }

    pub fn init(&self, seed: u64) -> ModelWeights<f32> {
        self.registry().initialize(seed)
    }

    /// Checks that `weights` has exactly the declared names and shapes.
    pub fn check_weights<T: Scalar>(&self, weights: &ModelWeights<T>) -> Result<()> {
        self.registry().validate(weights)
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        rgb: &Tensor<T>,
        depth: &Tensor<T>,
        opts: &ForwardOptions,
    ) -> Result<ResinResOutput> {
        opts.gates.validate()?;
        let [n, rc, h, w] = rgb.dims4()?;
        let [dn, dc, dh, dw] = depth.dims4()?;
        if rc != 3 || dc != 1 {
            return Err(Error::shape(format!(
                "expected 3-channel RGB and 1-channel depth, got {rc} and {dc}"
            )));
        }
        if (n, h, w) != (dn, dh, dw) {
            return Err(Error::shape(format!(
                "RGB {:?} and depth {:?} disagree",
                rgb.dims(),
                depth.dims()
            )));
        }
        if h % INPUT_MULTIPLE != 0 || w % INPUT_MULTIPLE != 0 {
            return Err(Error::geometry(format!(
                "input {h}×{w} is not a multiple of {INPUT_MULTIPLE}"
            )));
        }

        let x_r = g.input(rgb.clone());
        let x_d = g.input(depth.clone());
        let sides_r = self.enc_r.forward(g, x_r)?;
        let sides_d = self.enc_d.forward(g, x_d)?;
        let dec_r = self.dec_r.decode(g, &sides_r)?;
        let dec_d = self.dec_d.decode(g, &sides_d)?;
        let tam_r = self.tam_r.forward(g, dec_r.f, opts.tam)?;
        let tam_d = self.tam_d.forward(g, dec_d.f, opts.tam)?;

        let s5 = |s: &SideOutputs| s.get(5).expect("full encoder has stage 5");
        let gates = match opts.gates {
            GateMode::Learned => self.gate.forward(g, s5(&sides_r), s5(&sides_d))?,
            GateMode::Forced(wts) => forced_gate_vars(g, n, &wts)?,
        };

        // Gated copies take a sigmoid where the rest of the network sees ReLU.
        let mut guide = [tam_r.output_pre, tam_d.output_pre, dec_r.f3_pre, dec_d.f3_pre, dec_r.f4_pre, dec_d.f4_pre];
        for v in &mut guide {
            *v = if opts.zero_guidance {
                let zeros = Tensor::zeros(g.value(*v).dims())?;
                g.input(zeros)
            } else {
                g.tape.sigmoid(*v)
            };
        }
        let [r, d, r3, d3, r4, d4] = guide;

        let pair = g.tape.concat_channels(&[dec_r.f, dec_d.f])?;
        let f2 = self.fuse2.forward(g, pair)?;
        let i1 = assemble_stage_input(g, f2, r, d, gates.g_r[0], gates.g_d[0])?;
        let x = self.adapters[0].forward(g, i1)?;
        let f3 = self.enc_f.stage_forward(g, 3, x)?;
        let i2 = assemble_stage_input(g, f3, r3, d3, gates.g_r[1], gates.g_d[1])?;
        let x = self.adapters[1].forward(g, i2)?;
        let f4 = self.enc_f.stage_forward(g, 4, x)?;
        let i3 = assemble_stage_input(g, f4, r4, d4, gates.g_r[2], gates.g_d[2])?;
        let x = self.adapters[2].forward(g, i3)?;
        let f5 = self.enc_f.stage_forward(g, 5, x)?;

        let mut hybrid = SideOutputs::default();
        for (k, v) in [(2, f2), (3, f3), (4, f4), (5, f5)] {
            hybrid.set(k, v);
        }
        let dec_f = self.dec_f.decode(g, &hybrid)?;
        let tam_f = self.tam_f.forward(g, dec_f.f, opts.tam)?;

        let hw = (h, w);
        let sal_r = self.head_r.forward(g, tam_r.output, hw)?;
        let sal_d = self.head_d.forward(g, tam_d.output, hw)?;
        let sal_f = self.head_f.forward(g, tam_f.output, hw)?;

        Ok(ResinResOutput {
            sal_r,
            sal_d,
            sal_f,
            gates,
            tam_r,
            tam_d,
            tam_f,
            features: Intermediates {
                sides_r,
                sides_d,
                dec_r,
                dec_d,
                dec_f,
                r,
                d,
                r3,
                d3,
                r4,
                d4,
                f2,
                f3,
                f4,
                f5,
                i1,
                i2,
                i3,
            },
        })
    }

    /// Eval-mode forward without a gradient tape.
    pub fn predict(
        &self,
        weights: &ModelWeights<f32>,
        rgb: &Tensor<f32>,
        depth: &Tensor<f32>,
        opts: &ForwardOptions,
    ) -> Result<Prediction> {
        let mut g = Graph::inference(weights);
        let out = self.forward(&mut g, rgb, depth, opts)?;
        let n = rgb.dims()[0];
        let tam_gates = (0..n)
            .map(|i| {
                [&out.tam_r, &out.tam_d, &out.tam_f].map(|t| t.gates.map(|v| g.value(v).data()[i] as f64))
            })
            .collect();
        Ok(Prediction {
            sal_r: g.value(out.sal_r).clone(),
            sal_d: g.value(out.sal_d).clone(),
            sal_f: g.value(out.sal_f).clone(),
            gates: out.gates.values(&g),
            tam_gates,
        })
    }
}
