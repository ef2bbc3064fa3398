//! Knowledge-guided complex diffusion in the contourlet domain: the noise
//! schedule and training objective, the three guidance networks, scene-level
//! feature extraction and the patch classifier.

pub mod cafe;
pub mod classifier;
pub mod diffusion;
pub mod features;
pub mod kcdm;
pub mod skem;
pub mod train;
pub mod unet;
