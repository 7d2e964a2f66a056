//! Float functions routed through `libm` so results do not depend on the
//! platform's libm or on whether `std` is linked.

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_4;

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}
