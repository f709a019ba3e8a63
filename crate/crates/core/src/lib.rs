//! Toolkit for unbounded image composition.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: view boxes that may leave the initial view, IoU and
//!   enclosing boxes.
//! - [`losses`]: L1, generalized IoU and focal terms with analytic
//!   gradients.
//! - [`set_match`]: padding, optimal bipartite matching and the composite
//!   set-prediction loss.
//! - [`labels`]: smooth labels for unmatched predictions (quality guidance,
//!   EMA self-distillation, the switching schedule).
//! - [`metrics`]: `Acc_K/N`, displacement and IoU evaluation.
//! - [`datagen`]: unbounded-composition samples synthesized from densely
//!   annotated crop datasets.
//! - [`tinynet`]: a forward-only encoder / feature-extrapolation / decoder
//!   stack for shape and invariant checks.
//! - [`io`] and [`cli`]: file formats and the `unic-kit` command.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod assignment;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod geometry;
pub mod io;
pub mod labels;
pub mod losses;
pub mod metrics;
pub mod set_match;
pub mod tinynet;
pub mod views;

pub use error::{Error, Result};
pub use geometry::{CompBox, CornerBox};
pub use losses::{LossBreakdown, LossWeights};
pub use set_match::{GtSlot, MatchAssignment};
pub use views::{AnnotatedView, PredictedView};
