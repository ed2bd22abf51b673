//! Synchronous-coupling laboratory for the parameter sensitivity of
//! Fokker-Planck flows in p-Wasserstein distance.
//!
//! * [`model`]: parameterized drift/diffusion and Langevin families, hypothesis
//!   probing, SPD square roots.
//! * [`simulate`]: two Euler-Maruyama chains sharing every Brownian increment.
//! * [`transport`]: exact W_p between empirical clouds with dual certificates.
//! * [`bounds`]: explicit Grönwall envelopes and their constants.
//! * [`oracle`]: closed-form Gaussian and coupled-gap ground truth.
//! * [`harness`]: end-to-end experiments, reports and verdicts.

pub mod bounds;
pub mod harness;
pub mod model;
pub mod oracle;
pub mod simulate;
pub mod transport;
