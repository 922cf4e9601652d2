//! The two-qubit Clifford group as signed symplectic tableaus.
//!
//! A tableau stores the conjugation images of `X1, X2, Z1, Z2`. Qubit 1 is
//! the more significant bit of the `x`/`z` masks. Elements are indexed
//! canonically by the rank of their symplectic part among the 720 valid ones
//! (as a 16-bit code, `X1` image most significant), times 16, plus the four
//! sign bits.

mod synth;

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::harness::circuit::{Circuit, GateLabel};
use crate::qcore::{pauli, Mat16, Mat4c, Ptm};

pub use synth::{average_counts, decompose, generators, Decomposition};

pub const GROUP_ORDER: usize = 11_520;

/// `i^k · X^x Z^z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pauli2 {
    pub x: u8,
    pub z: u8,
    pub k: u8,
}

impl Pauli2 {
    pub const IDENTITY: Pauli2 = Pauli2 { x: 0, z: 0, k: 0 };

    /// Hermitian Pauli with the given masks and sign `(−1)^sign`.
    pub fn hermitian(x: u8, z: u8, sign: bool) -> Self {
        let k = ((x & z).count_ones() as u8 + if sign { 2 } else { 0 }) % 4;
        Self { x, z, k }
    }

    pub fn mul(self, o: Pauli2) -> Pauli2 {
        let swaps = (self.z & o.x).count_ones() as u8;
        Pauli2 { x: self.x ^ o.x, z: self.z ^ o.z, k: (self.k + o.k + 2 * swaps) % 4 }
    }

    /// Sign of a Hermitian Pauli relative to `P_a ⊗ P_b`.
    pub fn sign(self) -> bool {
        let y = (self.x & self.z).count_ones() as u8;
        (self.k + 4 - y) % 4 == 2
    }

    pub fn is_hermitian(self) -> bool {
        (self.k + (self.x & self.z).count_ones() as u8) % 2 == 0
    }

    /// Index `4a + b` in the Pauli-product basis (I, X, Y, Z per qubit).
    pub fn basis_index(self) -> usize {
        let one = |x: u8, z: u8| match (x, z) {
            (0, 0) => 0,
            (1, 0) => 1,
            (1, 1) => 2,
            _ => 3,
        };
        4 * one(self.x >> 1, self.z >> 1) + one(self.x & 1, self.z & 1)
    }

    pub fn from_basis_index(i: usize, sign: bool) -> Self {
        let bits = |a: usize| -> (u8, u8) {
            match a {
                0 => (0, 0),
                1 => (1, 0),
                2 => (1, 1),
                _ => (0, 1),
            }
        };
        let (x1, z1) = bits(i / 4);
        let (x2, z2) = bits(i % 4);
        Self::hermitian(x1 << 1 | x2, z1 << 1 | z2, sign)
    }

    fn symplectic_product(self, o: Pauli2) -> u32 {
        ((self.x & o.z).count_ones() + (self.z & o.x).count_ones()) % 2
    }

    fn code(self) -> u16 {
        ((self.x as u16) << 2) | self.z as u16
    }
}

/// Generators in tableau order.
const GENERATORS: [Pauli2; 4] = [
    Pauli2 { x: 2, z: 0, k: 0 },
    Pauli2 { x: 1, z: 0, k: 0 },
    Pauli2 { x: 0, z: 2, k: 0 },
    Pauli2 { x: 0, z: 1, k: 0 },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TwoQubitClifford {
    images: [Pauli2; 4],
}

impl TwoQubitClifford {
    pub fn identity() -> Self {
        Self { images: GENERATORS }
    }

    pub fn images(&self) -> &[Pauli2; 4] {
        &self.images
    }

    /// Column `j` is the `(x1, x2, z1, z2)` image of generator `j`.
    pub fn symplectic(&self) -> [[u8; 4]; 4] {
        let mut m = [[0u8; 4]; 4];
        for (j, p) in self.images.iter().enumerate() {
            let v = [p.x >> 1, p.x & 1, p.z >> 1, p.z & 1];
            for i in 0..4 {
                m[i][j] = v[i];
            }
        }
        m
    }

    pub fn signs(&self) -> [bool; 4] {
        self.images.map(|p| p.sign())
    }

    fn symplectic_code(&self) -> u16 {
        self.images.iter().fold(0u16, |acc, p| (acc << 4) | p.code())
    }

    fn sign_bits(&self) -> usize {
        self.signs().iter().fold(0, |acc, &s| (acc << 1) | s as usize)
    }

    pub fn index(&self) -> usize {
        table().rank[&self.symplectic_code()] * 16 + self.sign_bits()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        (i < GROUP_ORDER).then(|| table().elements[i])
    }

    /// `C P C†`.
    pub fn conjugate(&self, p: Pauli2) -> Pauli2 {
        let mut out = Pauli2 { x: 0, z: 0, k: p.k };
        for (j, g) in [(p.x >> 1) & 1, p.x & 1, (p.z >> 1) & 1, p.z & 1].iter().enumerate() {
            if *g == 1 {
                out = out.mul(self.images[j]);
            }
        }
        out
    }

    /// `a.compose(b)`: `b` first, then `a` (unitary product `a·b`).
    pub fn compose(&self, first: &TwoQubitClifford) -> Self {
        Self { images: first.images.map(|p| self.conjugate(p)) }
    }

    pub fn invert(&self) -> Self {
        // The symplectic part is linear on the 16 masks; invert its table.
        let mut pre = [0u8; 16];
        for v in 0u8..16 {
            let img = self.conjugate(Pauli2 { x: v >> 2, z: v & 3, k: 0 });
            pre[img.code() as usize] = v;
        }
        let images = GENERATORS.map(|g| {
            let v = pre[g.code() as usize];
            let q = Pauli2::hermitian(v >> 2, v & 3, false);
            let back = self.conjugate(q);
            // back = ±g; flip the preimage sign to land on +g.
            Pauli2::hermitian(q.x, q.z, back.sign())
        });
        Self { images }
    }

    pub fn is_valid(&self) -> bool {
        let s = |a: usize, b: usize| self.images[a].symplectic_product(self.images[b]);
        self.images.iter().all(|p| p.is_hermitian())
            && s(0, 1) == 0
            && s(2, 3) == 0
            && s(0, 2) == 1
            && s(1, 3) == 1
            && s(0, 3) == 0
            && s(1, 2) == 0
    }

    /// Tableau of a Clifford unitary; `None` if `u` is not Clifford.
    pub fn from_unitary(u: &Mat4c) -> Option<Self> {
        let mut images = [Pauli2::IDENTITY; 4];
        for (j, g) in GENERATORS.iter().enumerate() {
            let conj = u * pauli::product(g.basis_index()) * u.adjoint();
            let mut found = None;
            for i in 1..16 {
                let overlap = (pauli::product(i) * conj).trace() / 4.0;
                if (overlap.norm() - 1.0).abs() < 1e-9 && overlap.im.abs() < 1e-9 {
                    found = Some(Pauli2::from_basis_index(i, overlap.re < 0.0));
                }
            }
            images[j] = found?;
        }
        let t = Self { images };
        t.is_valid().then_some(t)
    }

    /// Signed-permutation PTM `R_ij = Tr(P_i C P_j C†)/4`.
    pub fn ptm(&self) -> Ptm {
        let mut m = Mat16::zeros();
        m[(0, 0)] = 1.0;
        for j in 1..16 {
            let img = self.conjugate(Pauli2::from_basis_index(j, false));
            m[(img.basis_index(), j)] = if img.sign() { -1.0 } else { 1.0 };
        }
        Ptm::from_matrix(m)
    }

    pub fn from_label(g: &GateLabel) -> Option<Self> {
        Self::from_unitary(&g.unitary())
    }

    /// Product of a circuit's labels; `None` if a label is not Clifford.
    pub fn from_circuit(c: &Circuit) -> Option<Self> {
        c.ops().iter().try_fold(Self::identity(), |acc, g| Some(Self::from_label(g)?.compose(&acc)))
    }
}

struct Table {
    elements: Vec<TwoQubitClifford>,
    rank: HashMap<u16, usize>,
}

fn table() -> &'static Table {
    static CELL: OnceLock<Table> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut codes = Vec::with_capacity(720);
        for code in 0u32..=u16::MAX as u32 {
            let images: [Pauli2; 4] = std::array::from_fn(|j| {
                let nib = (code >> (4 * (3 - j))) & 0xf;
                Pauli2::hermitian((nib >> 2) as u8, (nib & 3) as u8, false)
            });
            if (TwoQubitClifford { images }).is_valid() {
                codes.push(code as u16);
            }
        }
        let rank: HashMap<u16, usize> = codes.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut elements = Vec::with_capacity(GROUP_ORDER);
        for &code in &codes {
            for signs in 0..16usize {
                let images = std::array::from_fn(|j| {
                    let nib = (code >> (4 * (3 - j))) & 0xf;
                    Pauli2::hermitian((nib >> 2) as u8, (nib & 3) as u8, (signs >> (3 - j)) & 1 == 1)
                });
                elements.push(TwoQubitClifford { images });
            }
        }
        Table { elements, rank }
    })
}

pub fn enumerate_group() -> &'static [TwoQubitClifford] {
    &table().elements
}

pub fn sample_random<R: Rng + ?Sized>(rng: &mut R) -> TwoQubitClifford {
    table().elements[rng.random_range(0..GROUP_ORDER)]
}

/// Single-qubit Pauli frame, `0..4` = I, X, Y, Z.
pub fn pauli_frame_circuit(frame: [u8; 2]) -> Circuit {
    let mut ops = Vec::new();
    for (q, &p) in frame.iter().enumerate() {
        let q = q as u8 + 1;
        match p {
            1 => ops.push(GateLabel::Pi(q)),
            2 => ops.extend([GateLabel::Pi(q), GateLabel::Zp(q), GateLabel::Zp(q)]),
            3 => ops.extend([GateLabel::Zp(q), GateLabel::Zp(q)]),
            _ => {}
        }
    }
    Circuit::new(ops)
}

/// Uniformly random Pauli frame on both qubits.
pub fn random_pauli<R: Rng + ?Sized>(rng: &mut R) -> [u8; 2] {
    let k = rng.random_range(0..16u8);
    [k / 4, k % 4]
}
