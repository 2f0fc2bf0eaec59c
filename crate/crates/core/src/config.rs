use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Mode, Problem};

/// `(√5 − 1) / 2`: the first-order step-size cap is this over `L`.
pub const GOLDEN_STEP: f64 = 0.618_033_988_749_894_9;

/// Algorithm hyperparameters for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Step size `η`.
    pub eta: f64,
    /// Epoch length `m`.
    pub epoch_len: usize,
    /// Minibatch size `b`.
    pub minibatch: usize,
    /// Large batch `B` (online anchors).
    pub batch: usize,
    /// Perturbation radius `r`.
    pub perturb_radius: f64,
    /// Gradient threshold `𝓖` for entering a super epoch.
    pub g_thres: f64,
    /// Function-decrease threshold `𝓕` for leaving a super epoch.
    pub f_thres: f64,
    /// Super epoch length `𝓣`.
    pub super_epoch_len: u64,
    pub eps: f64,
    pub delta: f64,
    /// Raw SFO budget.
    pub sfo_budget: u64,
    pub seed: u64,
    /// Stand-in for the polylog factors of the parameter settings.
    pub logfactor: f64,
    /// Enables perturbations and the super-epoch state machine checks.
    pub second_order: bool,
    #[serde(default)]
    pub max_epochs: Option<u64>,
    /// Halt at the first epoch start whose anchor gradient norm is `≤ eps`.
    #[serde(default)]
    pub stop_at_fosp: bool,
    #[serde(default)]
    pub without_replacement: bool,
    /// Keep the iterates of every super epoch in the outcome.
    #[serde(default)]
    pub record_super_epochs: bool,
}

impl RunConfig {
    /// Checks the config against itself and the problem's metadata.
    pub fn validate(&self, problem: &dyn Problem) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("step size eta must satisfy eta > 0, got {}", self.eta));
        }
        if self.epoch_len == 0 {
            return bad("epoch length m must be positive".into());
        }
        if self.minibatch == 0 {
            return bad("minibatch size b must be positive".into());
        }
        if problem.mode() == Mode::Online && self.batch == 0 {
            return bad("large batch size B must be positive in online mode".into());
        }
        if !(self.logfactor > 0.0) {
            return bad(format!("logfactor must be positive, got {}", self.logfactor));
        }
        let l = problem.smoothness().lipschitz_grad;
        if !(l > 0.0) {
            return Err(Error::InvalidMetadata(format!(
                "gradient Lipschitz constant must be positive, got {l}"
            )));
        }
        // Tolerate the rounding in `GOLDEN_STEP / L`.
        let slack = 1.0 + 1e-12;
        if self.second_order {
            if self.minibatch < self.epoch_len {
                return bad(format!(
                    "second-order mode needs b >= m (b = {}, m = {})",
                    self.minibatch, self.epoch_len
                ));
            }
            if self.eta > self.logfactor / l * slack {
                return bad(format!(
                    "eta = {} exceeds logfactor / L = {}",
                    self.eta,
                    self.logfactor / l
                ));
            }
            if !(self.perturb_radius >= 0.0)
                || !(self.g_thres >= 0.0)
                || !(self.f_thres > 0.0)
                || self.super_epoch_len == 0
            {
                return bad("second-order mode needs r >= 0, G >= 0, F > 0 and T >= 1".into());
            }
        } else if self.eta > GOLDEN_STEP / l * slack {
            return bad(format!(
                "eta = {} exceeds (sqrt(5) - 1) / (2L) = {}",
                self.eta,
                GOLDEN_STEP / l
            ));
        }
        Ok(())
    }
}
