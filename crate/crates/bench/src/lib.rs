//! Fixtures shared by the benchmarks.

use hiboost::{derivatives, make_synthetic, Dataset, GradBundle, LossKind, Order};

/// Synthetic logloss data with derivatives taken at a zero margin, as in the
/// first boosting round.
pub fn first_round(n_rows: usize, n_features: usize, order: Order) -> (Dataset, GradBundle) {
    let data = make_synthetic(n_rows, n_features, 1).expect("valid shape");
    let margins = vec![0.0; data.n_rows()];
    let grads = derivatives(LossKind::LogLoss, data.labels(), &margins, order.as_usize())
        .expect("finite margins");
    (data, grads)
}

pub const ORDERS: [Order; 3] = [Order::Second, Order::Third, Order::Fourth];
