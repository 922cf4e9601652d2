//! Haar-random states, unitaries and channels.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{c, Mat4c, Ptm, PureState, Vec4c, C64};

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn ginibre<R: Rng + ?Sized>(rng: &mut R) -> Mat4c {
    Mat4c::from_fn(|_, _| gaussian(rng))
}

pub fn haar_state<R: Rng + ?Sized>(rng: &mut R) -> PureState {
    let v = Vec4c::from_fn(|_, _| gaussian(rng));
    let n = v.norm();
    PureState::new(v / c(n)).expect("normalized")
}

/// QR of a Ginibre matrix with the phase of R's diagonal divided out.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R) -> Mat4c {
    let qr = ginibre(rng).qr();
    let (q, r) = (qr.q(), qr.r());
    let mut u = q;
    for k in 0..4 {
        let d = r[(k, k)];
        let ph = if d.norm() > 0.0 { d / c(d.norm()) } else { c(1.0) };
        for row in 0..4 {
            u[(row, k)] *= ph;
        }
    }
    u
}

/// Random CPTP channel: `rank` Kraus operators from a Stinespring isometry,
/// mixed with the identity channel with weight `1 - strength`.
pub fn random_channel<R: Rng + ?Sized>(rng: &mut R, rank: usize, strength: f64) -> Ptm {
    // Stack `rank` Ginibre blocks, orthonormalize the 4·rank × 4 isometry.
    let rows = 4 * rank;
    let g = nalgebra::DMatrix::<C64>::from_fn(rows, 4, |_, _| gaussian(rng));
    let q = g.qr().q();
    let kraus: Vec<Mat4c> =
        (0..rank).map(|k| Mat4c::from_fn(|i, j| q[(k * 4 + i, j)])).collect();
    let noisy = Ptm::from_kraus(&kraus);
    Ptm::from_matrix(Ptm::identity().matrix() * (1.0 - strength) + noisy.matrix() * strength)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_channels_are_cptp() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for rank in 1..=4 {
            let ch = random_channel(&mut rng, rank, 1.0);
            assert!(ch.is_tp(1e-12));
            assert!(ch.is_cp(1e-12));
        }
        let u = haar_unitary(&mut rng);
        assert!((u * u.adjoint() - Mat4c::identity()).norm() < 1e-12);
    }
}
