//! Tape-based reverse-mode differentiation on dense tensors.
//!
//! ```bash
//! cargo run -p seqlab --example autodiff_basics
//! ```

use seqlab::tensor::{Tape, Tensor};
use seqlab::Result;

fn main() -> Result<()> {
    // Record y = sum(sigmoid(A x) * w) on the tape.
    let mut tape: Tape<f64> = Tape::new();
    let a = tape.leaf(
        Tensor::new(vec![2, 3], vec![0.5, -1.0, 0.25, 1.5, 0.0, -0.75])?.with_requires_grad(true),
    );
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0, -1.0]).with_requires_grad(true));
    let w = tape.constant(vec![0.3, -0.6]);

    let ax = tape.matvec(a, x)?;
    let s = tape.sigmoid(ax)?;
    let p = tape.mul(s, w)?;
    let y = tape.sum(p)?;
    println!("forward value: {:.6}", tape.value(y).data()[0]);

    tape.backward(y)?;
    println!("d y / d x = {:?}", tape.grad(x).unwrap());
    println!("d y / d A = {:?}", tape.grad(a).unwrap());

    // Cross-check one component against a central finite difference.
    let eval = |x0: f64| -> f64 {
        let mut t: Tape<f64> = Tape::new();
        let a = t
            .leaf(Tensor::new(vec![2, 3], vec![0.5, -1.0, 0.25, 1.5, 0.0, -0.75]).unwrap());
        let x = t.leaf(Tensor::vector(vec![x0, 2.0, -1.0]));
        let w = t.constant(vec![0.3, -0.6]);
        let ax = t.matvec(a, x).unwrap();
        let s = t.sigmoid(ax).unwrap();
        let p = t.mul(s, w).unwrap();
        let y = t.sum(p).unwrap();
        t.value(y).data()[0]
    };
    let h = 1e-6;
    let fd = (eval(1.0 + h) - eval(1.0 - h)) / (2.0 * h);
    println!(
        "finite difference for x[0]: {:.9} (tape says {:.9})",
        fd,
        tape.grad(x).unwrap()[0]
    );

    // Gradients accumulate additively and a second backward is refused.
    match tape.backward(y) {
        Err(e) => println!("second backward correctly refused: {e}"),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
