use num_complex::Complex64;
use perbif::cycles::SolverOptions;
use perbif::paramspace::{pern_roots_in_slice, PernOptions, SliceSpec};

fn main() {
    for (n, res) in [(6u32, 192u32), (8, 256)] {
        let slice = SliceSpec::quadratic(1.6, res).unwrap();
        let t0 = std::time::Instant::now();
        let rep = pern_roots_in_slice(
            &slice, n, Complex64::new(1.0, 0.0),
            &SolverOptions::default(), &PernOptions::default(),
        ).unwrap();
        println!(
            "n={n} ({:.0}s): count {} winding {:?} mismatch {:?}",
            t0.elapsed().as_secs_f64(), rep.count(), rep.boundary_winding, rep.mismatch
        );
    }
}
