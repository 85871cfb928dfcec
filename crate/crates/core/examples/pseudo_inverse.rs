//! Pseudo-inverse, column-space containment and minimum-norm solves.

use subteam::matrix::{colspace_contains, pinv, solve_minimum_norm, Mat, Tolerance};

fn main() -> subteam::error::Result<()> {
    let tol = Tolerance::default();

    let a = Mat::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
    let a_pinv = pinv(&a)?;
    println!("rank-one A:{a}A†:{a_pinv}");
    println!("‖A A† A − A‖ = {:e}", (&a * &a_pinv * &a - &a).norm());

    // A column is contained when projecting it onto the candidate span
    // leaves nothing behind.
    let target = Mat::from_row_slice(3, 1, &[-1.0, -2.0, -3.0]);
    let c = colspace_contains(&target, &a, &tol)?;
    println!("[-1 -2 -3]ᵀ in span(A): {} (residual {:e})", c.contained, c.max_residual);
    let off = Mat::from_row_slice(3, 1, &[1.0, 0.0, 0.0]);
    let c = colspace_contains(&off, &a, &tol)?;
    println!("e1 in span(A): {} (residual {:.4})", c.contained, c.max_residual);

    // Underdetermined: x1 + x2 = 2 has the minimum-norm solution (1, 1).
    let s = solve_minimum_norm(
        &Mat::from_row_slice(1, 2, &[1.0, 1.0]),
        &Mat::from_element(1, 1, 2.0),
        &tol,
    )?;
    println!("minimum-norm solution of x1 + x2 = 2:{}", s.solution);

    // Inconsistent: x = 0 and x = 1 together. The least-squares answer is
    // reported along with the failed consistency flag.
    let s = solve_minimum_norm(
        &Mat::from_row_slice(2, 1, &[1.0, 1.0]),
        &Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        &tol,
    )?;
    println!(
        "x = 0, x = 1: least squares x = {}, consistent = {}",
        s.solution[(0, 0)],
        s.consistent
    );
    Ok(())
}
