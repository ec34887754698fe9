use kinetic_hypo_core::coefficients::CoefficientPath;
use kinetic_hypo_core::semigroup::*;
use kinetic_hypo_core::stable_levy::StableMeasure;
use nalgebra::DMatrix;

fn main() {
    let path = CoefficientPath::constant(
        DMatrix::identity(1, 1),
        DMatrix::identity(1, 1),
        StableMeasure::isotropic(1.0, 1, 1.0).unwrap(),
    )
    .unwrap();
    let packet = FrozenSource(SourceSpec {
        center_xi: vec![0.4],
        center_eta: vec![0.8],
        bandwidth: 1.0,
        time_window: (0.0, 1.0),
        profile_exponent: 1.0,
        amplitude: 1.0,
    });
    let (s, t) = (0.0, 1.5);
    let probes = [(0.0_f64, 0.0_f64), (0.5, -0.4), (-0.7, 0.9)];

    // residual with L applied via the exact Fourier multiplier on the same
    // snapshot (isolates the d/ds side + reconstruction from the generator)
    let quad = KolmogorovQuad::default();
    for h in [0.2_f64, 0.1, 0.05, 0.025] {
        let r = kolmogorov_residual_multiplier_probe(&path, &packet, s, t, &probes, h, &quad);
        println!("multiplier route h={h}: residual {r:.3e}");
    }
    let res = kolmogorov_residual(&path, &packet, s, t, &probes, &[0.2, 0.1, 0.05], &quad).unwrap();
    println!("generator route: {res:?}");
}
