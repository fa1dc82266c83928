//! Interior, boundary and lattice samplers on the supported domains.
//!
//! `cargo run --release --example sampling`

use hjsolve::geometry::{lattice_points, nearest_neighbor_delta, sample_boundary, sample_interior, Domain, SamplerSpec};

fn main() -> hjsolve::Result<()> {
    let domains = [
        ("square", Domain::cube(2, 3.0)),
        ("disc", Domain::ball(2, 3.0)),
        ("car annulus", Domain::annulus(2, 0.2, 5.0).with_torus(1)),
    ];
    for (name, domain) in &domains {
        let inside = sample_interior(domain, &SamplerSpec::uniform_interior(1), 10_000)?;
        let edge = sample_boundary(domain, &SamplerSpec::uniform_boundary(1), 1_000)?;
        let worst = edge.iter().map(|(x, tag)| domain.boundary_residual(x, *tag).abs()).fold(0.0, f64::max);
        let mean: Vec<f64> = (0..domain.dim())
            .map(|i| inside.iter().map(|x| x[i]).sum::<f64>() / inside.len() as f64)
            .collect();
        println!("{name:<12} dim {}  interior mean {mean:.3?}  worst boundary residual {worst:.1e}", domain.dim());
    }

    // Radially uniform draws put as many points near the center as near the rim.
    let ball = Domain::ball(2, 3.0);
    let radial = sample_interior(&ball, &SamplerSpec::radially_uniform(2), 10_000)?;
    let near = radial.iter().filter(|x| x[0].hypot(x[1]) < 1.5).count();
    println!("radially uniform: {near} of 10000 within half the radius (uniform would give about 2500)");

    let lattice = lattice_points(&Domain::cube(2, 1.0), 0.25, &[0.0, 0.0], 10_000)?;
    println!("lattice with spacing 0.25: {} nodes, nearest-neighbor spacing {}", lattice.len(), nearest_neighbor_delta(&lattice)?);
    Ok(())
}
