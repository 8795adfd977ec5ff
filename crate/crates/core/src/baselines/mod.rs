//! Classical nonparametric drift estimators for i.i.d. trajectories.
//!
//! All three estimators are fitted from a [`TrajectoryDataset`] and use the
//! left-endpoint pairs `(Y_{t_j}, Y_{t_{j+1}} − Y_{t_j})`, `j = 0..J−1`.
//! Ridge and Hermite are one-dimensional.
//!
//! [`TrajectoryDataset`]: crate::sde::TrajectoryDataset

mod hermite;
mod nw;
mod ridge;
mod select;

pub use hermite::{hermite_fit, hermite_functions, hermite_select_m, HermiteEstimator, HermiteSelection};
pub use nw::{nw_select_bandwidth, NwEstimator, NwValue};
pub use ridge::{bspline_basis, ridge_fit, RidgeConfig, RidgeEstimator};
pub use select::{oracle_error, oracle_grid_search, SelectionTrace};
