use morphcritic_autodiff::{Graph, Var};

use crate::error::{CoreError, Result};

/// Residual feature-wise modulation `h ⊙ (1 + γ) + β`.
///
/// `head_out` is the raw `[n, 2H]` output of a FiLM head; its first `H`
/// columns give γ and the rest β, both multiplied by `scale` first.
pub fn film_modulate(g: &mut Graph, h: Var, head_out: Var, scale: f64) -> Result<Var> {
    let width = g.value(h).cols();
    let head_width = g.value(head_out).cols();
    if head_width != 2 * width {
        return Err(CoreError::Dimension {
            what: "FiLM head output",
            expected: 2 * width,
            got: head_width,
        });
    }
    let gamma = g.slice_cols(head_out, 0, width)?;
    let beta = g.slice_cols(head_out, width, 2 * width)?;
    let gamma = g.scale(gamma, scale);
    let beta = g.scale(beta, scale);
    let one_plus = g.add_scalar(gamma, 1.0);
    let scaled = g.mul(h, one_plus)?;
    Ok(g.add(scaled, beta)?)
}
