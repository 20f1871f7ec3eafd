//! Video representation with layered, motion-compensated coordinate networks.
//!
//! A video is fit by `n` layers. Each layer has a small flow network that maps
//! time to a similarity transform of the frame plane and a color network that
//! maps the transformed coordinates (plus time) to RGB and an opacity logit.
//! The layers are blended by a softmax over their logits.
//!
//! ```no_run
//! use coordflow::media::{make_synthetic, SyntheticSpec};
//! use coordflow::trainer::{train, TrainConfig};
//!
//! let clip = make_synthetic(&SyntheticSpec::new(32, 32, 8)).unwrap();
//! let cfg = TrainConfig { epochs: 5, batch_size: 2048, ..Default::default() };
//! let fit = train(&clip.video, &cfg).unwrap();
//! println!("final PSNR {:.2} dB", fit.log.last().unwrap().psnr);
//! ```

pub mod apps;
pub mod autodiff;
pub(crate) mod bytes;
pub mod cli;
pub mod codec;
pub mod error;
pub mod loss;
pub mod media;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
