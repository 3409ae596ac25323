//! Exterior algebra over a coordinate basis, with forms stored as dense
//! coefficient arrays indexed by the bitmask of their basis covectors.

#[derive(Clone, Debug)]
pub(crate) struct ExteriorForm {
    dim: usize,
    coeffs: Vec<f64>,
}

/// Sign of the shuffle that sorts the concatenation of index sets `a` and `b`.
fn merge_sign(a: u32, b: u32) -> f64 {
    // count pairs (i in a, j in b) with i > j
    let mut swaps = 0u32;
    let mut rest = a;
    while rest != 0 {
        let i = rest.trailing_zeros();
        rest &= rest - 1;
        swaps += (b & ((1u32 << i) - 1)).count_ones();
    }
    if swaps.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl ExteriorForm {
    /// The constant 0-form 1.
    pub(crate) fn one(dim: usize) -> Self {
        let mut coeffs = vec![0.0; 1 << dim];
        coeffs[0] = 1.0;
        Self { dim, coeffs }
    }

    /// A 2-form from its row-major `dim × dim` component array.
    pub(crate) fn from_two_form(components: &[f64], dim: usize) -> Self {
        let mut coeffs = vec![0.0; 1 << dim];
        for i in 0..dim {
            for j in i + 1..dim {
                coeffs[(1 << i) | (1 << j)] = components[i * dim + j];
            }
        }
        Self { dim, coeffs }
    }

    pub(crate) fn wedge(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim, other.dim);
        let mut coeffs = vec![0.0; 1 << self.dim];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for (b, &cb) in other.coeffs.iter().enumerate() {
                if cb == 0.0 || a & b != 0 {
                    continue;
                }
                coeffs[a | b] += merge_sign(a as u32, b as u32) * ca * cb;
            }
        }
        Self {
            dim: self.dim,
            coeffs,
        }
    }

    /// `self ∧ ζ` for a 2-form given by its row-major components.
    pub(crate) fn wedge_two_form(&self, components: &[f64]) -> Self {
        let dim = self.dim;
        let mut coeffs = vec![0.0; 1 << dim];
        for (a, &ca) in self.coeffs.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            for i in 0..dim {
                if a & (1 << i) != 0 {
                    continue;
                }
                for j in i + 1..dim {
                    if a & (1 << j) != 0 {
                        continue;
                    }
                    let z = components[i * dim + j];
                    if z == 0.0 {
                        continue;
                    }
                    let b = (1u32 << i) | (1u32 << j);
                    coeffs[a | b as usize] += merge_sign(a as u32, b) * ca * z;
                }
            }
        }
        Self { dim, coeffs }
    }

    /// Coefficient of `e¹∧…∧e^dim`, i.e. the value on `(e₁, …, e_dim)`.
    pub(crate) fn top_coefficient(&self) -> f64 {
        self.coeffs[(1 << self.dim) - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_signs() {
        assert_eq!(merge_sign(0b01, 0b10), 1.0);
        assert_eq!(merge_sign(0b10, 0b01), -1.0);
        // {1,3} then {0,2}: pairs (1,0),(3,0),(3,2) -> three swaps
        assert_eq!(merge_sign(0b1010, 0b0101), -1.0);
    }

    #[test]
    fn two_forms_commute() {
        let a = ExteriorForm::from_two_form(
            &[
                0.0, 1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, -2.0, 0.0,
            ],
            4,
        );
        let b = ExteriorForm::from_two_form(
            &[
                0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 0.0, 1.0, -3.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0,
            ],
            4,
        );
        assert_eq!(a.wedge(&b).top_coefficient(), b.wedge(&a).top_coefficient());
    }

    #[test]
    fn two_form_shortcut_matches_general_wedge() {
        let comps = [
            0.0, 1.5, -2.0, 0.5, -1.5, 0.0, 0.25, 3.0, 2.0, -0.25, 0.0, -1.0, -0.5, -3.0, 1.0, 0.0,
        ];
        let z = ExteriorForm::from_two_form(&comps, 4);
        let general = z.wedge(&z);
        let fast = z.wedge_two_form(&comps);
        assert_eq!(general.coeffs, fast.coeffs);
    }
}
