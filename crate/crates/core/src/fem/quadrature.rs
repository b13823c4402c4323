//! Six-point symmetric triangle rule, exact for polynomials of degree 4.
//!
//! Products such as `W(u_h)`, `W'(u_h) N_i`, `W''(u_h) N_i N_j` and
//! `W'''(u_h) lambda_h u_h N_i` of P1 fields are all of degree at most 4, so the
//! nonlinear terms are integrated without quadrature error.

const A1: f64 = 0.445_948_490_915_964_9;
const W1: f64 = 0.223_381_589_678_011_5;
const A2: f64 = 0.091_576_213_509_770_74;
const W2: f64 = 0.109_951_743_655_321_9;

/// Barycentric coordinates of the quadrature points.
pub const POINTS: [[f64; 3]; 6] = [
    [A1, A1, 1.0 - 2.0 * A1],
    [A1, 1.0 - 2.0 * A1, A1],
    [1.0 - 2.0 * A1, A1, A1],
    [A2, A2, 1.0 - 2.0 * A2],
    [A2, 1.0 - 2.0 * A2, A2],
    [1.0 - 2.0 * A2, A2, A2],
];

/// Weights relative to the element area; they sum to one.
pub const WEIGHTS: [f64; 6] = [W1, W1, W1, W2, W2, W2];
