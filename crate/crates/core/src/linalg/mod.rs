//! Dense linear algebra: a small row-major matrix type, pivoted QR, and
//! least squares on top of it.

mod matrix;
mod ols;
mod qr;

pub use matrix::Matrix;
pub use ols::{
    drop_one_scan, fit_ols, rank_tolerance, sse, DropEffect, DropOne, DropOneFits, DropOneScan, OlsFit,
    RANK_RTOL,
};
pub use qr::PivotedQr;
