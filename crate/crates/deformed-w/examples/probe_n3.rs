//! Scratch probe: level-three quadratic verification timing and residuals.

use std::time::Instant;

use deformed_w::coeff::{rfrac, ParamPoint};
use deformed_w::currents::build_lambdas;
use deformed_w::quadratic::verify_quadratic;

fn main() -> deformed_w::Result<()> {
    let p = ParamPoint::new(3, rfrac(2, 3), rfrac(1, 5), 14, 8)?;
    let lambdas = build_lambdas(&p)?;
    for (i, j) in [(2, 3), (3, 3)] {
        let t0 = Instant::now();
        match verify_quadratic(&p, &lambdas, i, j) {
            Ok(r) => println!(
                "({i},{j}) ok in {:?}: residual {:?} ({} classes)",
                t0.elapsed(),
                r.residual_supports,
                r.residual_entries
            ),
            Err(e) => println!("({i},{j}) ERR in {:?}: {e}", t0.elapsed()),
        }
    }
    Ok(())
}
