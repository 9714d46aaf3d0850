//! Maximum-likelihood regression fitters.
//!
//! All three fitters maximize a weight-normalized log-likelihood by damped
//! Newton steps. Covariates are used as given; standardize them upstream if
//! their scales differ wildly. An intercept is always included and must not
//! be passed as a covariate column.

mod cumulative;
mod logit;
mod multinomial;
mod newton;

pub use cumulative::{
    fit_cumulative_logit, fit_cumulative_logit_with, predict_marginal, CumulativeLogitLikelihood, CumulativeLogitModel,
    CumulativeLogitSpec,
};
pub use logit::{fit_logit, fit_logit_with, LogitLikelihood, LogitModel};
pub use multinomial::{
    fit_multinomial_logit, fit_multinomial_logit_soft, MultinomialLikelihood, MultinomialLogitModel, MultinomialSpec,
};
pub use newton::{FitInfo, FitOptions};
pub(crate) use newton::sigmoid;

