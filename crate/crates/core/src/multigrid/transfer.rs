//! Trilinear prolongation `I` and its transpose `R = Iᵀ` between adjacent levels.

use rayon::prelude::*;

use crate::grid::{slot_offset, GridLevel, VertexCoord};

/// Interpolation weight of a coarse vertex seen from a fine vertex at fine
/// offset `o` from the coarse vertex's position: `Π (1 - |o_k| / 2)`.
#[inline(always)]
pub fn transfer_weight(o: [i32; 3]) -> f64 {
    o.iter()
        .map(|&x| (1.0 - x.abs() as f64 / 2.0).max(0.0))
        .product()
}

/// `R r`: every coarse vertex gathers its 27 fine neighbors.
pub fn restrict(fine: &GridLevel, coarse: &GridLevel, r: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; coarse.vertex_count()];
    restrict_into(fine, coarse, r, &mut out);
    out
}

pub(crate) fn restrict_into(fine: &GridLevel, coarse: &GridLevel, r: &[[f64; 3]], out: &mut [[f64; 3]]) {
    let weights: [f64; 27] = std::array::from_fn(|s| transfer_weight(slot_offset(s)));
    out.par_iter_mut().enumerate().for_each(|(p, o)| {
        let v = coarse.vertex_at(p);
        let center = VertexCoord(v.0.map(|x| 2 * x));
        let locs = fine.neighbor_locations(center);
        let mut acc = [0.0; 3];
        for s in 0..27 {
            let x = r[locs[s]];
            let w = weights[s];
            acc[0] += w * x[0];
            acc[1] += w * x[1];
            acc[2] += w * x[2];
        }
        *o = acc;
    });
}

/// Coarse parents of a fine coordinate along one axis, with weights.
#[inline(always)]
fn parents(coarse: &GridLevel, k: usize, x: usize) -> ([usize; 2], [f64; 2], usize) {
    if x % 2 == 0 {
        ([x / 2, 0], [1.0, 0.0], 1)
    } else {
        let hi = coarse.wrap_axis(k, (x / 2 + 1) as isize);
        ([x / 2, hi], [0.5, 0.5], 2)
    }
}

/// `u_fine += I u_coarse`.
pub fn prolong_add(coarse: &GridLevel, fine: &GridLevel, uc: &[[f64; 3]], uf: &mut [[f64; 3]]) {
    uf.par_iter_mut().enumerate().for_each(|(p, o)| {
        let v = fine.vertex_at(p);
        let (px, wx, nx) = parents(coarse, 0, v.0[0]);
        let (py, wy, ny) = parents(coarse, 1, v.0[1]);
        let (pz, wz, nz) = parents(coarse, 2, v.0[2]);
        for c in 0..nz {
            for b in 0..ny {
                for a in 0..nx {
                    let w = wx[a] * wy[b] * wz[c];
                    let x = uc[coarse.color_block_location(VertexCoord([px[a], py[b], pz[c]]))];
                    o[0] += w * x[0];
                    o[1] += w * x[1];
                    o[2] += w * x[2];
                }
            }
        }
    });
}

/// `I u_coarse` as a new fine field.
pub fn prolong(coarse: &GridLevel, fine: &GridLevel, uc: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; fine.vertex_count()];
    prolong_add(coarse, fine, uc, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [0; 3].map(|_| rng.gen_range(-1.0..1.0))).collect()
    }

    fn pair() -> (GridLevel, GridLevel) {
        let f = GridLevel::new([8, 12, 8], 0).unwrap();
        let c = f.coarsen().unwrap();
        (f, c)
    }

    #[test]
    fn weights_examples() {
        assert_eq!(transfer_weight([0, 0, 0]), 1.0);
        assert_eq!(transfer_weight([1, 0, 0]), 0.5);
        assert_eq!(transfer_weight([1, -1, 1]), 0.125);
    }

    #[test]
    fn restrict_constant_gives_eight() {
        let (f, c) = pair();
        let r = vec![[1.5, -2.0, 0.25]; f.vertex_count()];
        for x in restrict(&f, &c, &r) {
            assert_eq!(x, [12.0, -16.0, 2.0]);
        }
    }

    #[test]
    fn restrict_delta_mid_cell() {
        let (f, c) = pair();
        let mut r = vec![[0.0; 3]; f.vertex_count()];
        r[f.color_block_location(VertexCoord([3, 5, 7]))] = [1.0, 0.0, 0.0];
        let out = restrict(&f, &c, &r);
        let mut hits = 0;
        for (p, x) in out.iter().enumerate() {
            if x[0] != 0.0 {
                assert_eq!(x[0], 0.125);
                hits += 1;
                let v = c.vertex_at(p);
                assert!([1, 2].contains(&v.0[0]) && [2, 3].contains(&v.0[1]) && [3, 0].contains(&v.0[2]));
            }
        }
        assert_eq!(hits, 8);
    }

    #[test]
    fn prolong_constant_and_delta() {
        let (f, c) = pair();
        let u = prolong(&c, &f, &vec![[2.0, 3.0, -1.0]; c.vertex_count()]);
        assert!(u.iter().all(|&x| x == [2.0, 3.0, -1.0]));
        let mut d = vec![[0.0; 3]; c.vertex_count()];
        d[c.color_block_location(VertexCoord([0, 0, 0]))] = [1.0, 0.0, 0.0];
        let u = prolong(&c, &f, &d);
        for (p, x) in u.iter().enumerate() {
            let v = f.vertex_at(p);
            let off: [i32; 3] = std::array::from_fn(|k| {
                let n = f.res()[k] as i32;
                let x = v.0[k] as i32;
                if x > n / 2 { x - n } else { x }
            });
            assert_eq!(x[0], transfer_weight(off));
        }
        assert_eq!(u[f.color_block_location(VertexCoord([0, 0, 0]))][0], 1.0);
    }

    #[test]
    fn restriction_is_adjoint_of_prolongation() {
        let (f, c) = pair();
        let r = random(f.vertex_count(), 1);
        let v = random(c.vertex_count(), 2);
        let rr = restrict(&f, &c, &r);
        let iv = prolong(&c, &f, &v);
        let lhs: f64 = rr.iter().zip(&v).map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).sum();
        let rhs: f64 = r.iter().zip(&iv).map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
}
