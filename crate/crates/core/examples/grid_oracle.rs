//! Dense grid checks for the discrete scheme: Laplacian spectrum, the
//! relaxation fixed point, and the conditioning of the linearized adjoint.
//!
//! `cargo run --release --example grid_oracle`

use hjsolve::grid_oracle::{
    assemble_adjoint, minimize_grid_functional, numerical_laplacian_eigenvalue, sigma_min_lower_bound,
    smallest_laplacian_eigenvalue, solve_fd_fixed_point, GridFunction, GridSpec,
};
use hjsolve::hamiltonian::Hamiltonian;
use hjsolve::scheme::uniqueness_condition;

fn main() -> hjsolve::Result<()> {
    let h = Hamiltonian::EikonalNorm;
    println!("{:>3} {:>4} {:>6} {:>12} {:>12} {:>10} {:>10} {:>10}", "d", "n", "alpha", "lambda", "numeric", "margin", "sigma_min", "bound");
    for (dim, n, alpha) in [(1, 16, 1.0), (1, 64, 1.0), (2, 5, 10.0), (2, 12, 1.0)] {
        let grid = GridSpec::new(dim, n)?;
        let scheme = grid.scheme(alpha);
        let sol = solve_fd_fixed_point(&h, &scheme, &grid, |_| 0.0, None, 200_000, 1e-10)?;
        let (_, margin) = uniqueness_condition(&h, &scheme, sol.u.lipschitz(), dim)?;
        let adjoint = assemble_adjoint(&h, &scheme, &grid, &sol.u)?;
        println!(
            "{dim:>3} {n:>4} {alpha:>6} {:>12.6e} {:>12.6e} {margin:>10.4} {:>10.4e} {:>10.4e}",
            smallest_laplacian_eigenvalue(&grid),
            numerical_laplacian_eigenvalue(&grid),
            adjoint.sigma_min(),
            sigma_min_lower_bound(&grid, alpha, adjoint.max_abs_v()),
        );
    }

    // Descent on the least-squares functional from a rough start lands on the same grid function.
    let grid = GridSpec::new(2, 5)?;
    let scheme = grid.scheme(10.0);
    let fixed = solve_fd_fixed_point(&h, &scheme, &grid, |_| 0.0, None, 200_000, 1e-12)?;
    let start = GridFunction::from_fn(grid, |x| (7.0 * x[0]).sin() + x[1]);
    let found = minimize_grid_functional(&h, &scheme, &grid, |_| 0.0, &start, 1.0, 200_000, 1e-13)?;
    println!(
        "descent: {} iterations, sup distance to the fixed point {:.2e}",
        found.iterations,
        found.u.sup_distance(&fixed.u)
    );
    Ok(())
}
