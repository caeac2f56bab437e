//! Distributions, divergences, weighting and trade-off formulas used by post-processing.

pub mod distribution;
pub mod divergence;
pub mod tradeoff;

pub use distribution::{
    genre_prob, realized_distribution, smooth, target_distribution, Distribution, GenreMass, SmoothingParams,
};
pub use divergence::{chi_square, hellinger, kl, Divergence};
pub use tradeoff::{
    item_bias, lambda_cgr, lambda_var, log_balance, relevance_sum, tradeoff, tradeoff_lin, tradeoff_log, user_bias,
    Balance, BiasParams, LambdaPolicy, ListItem, TradeOffSpec,
};
