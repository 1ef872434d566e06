use crate::error::{Result, RomError};

/// Uniform 1D mesh with two nodal (endpoint) degrees of freedom per element.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh1D {
    left: f64,
    right: f64,
    n_el: usize,
}

impl Mesh1D {
    pub fn left(&self) -> f64 {
        self.left
    }

    pub fn right(&self) -> f64 {
        self.right
    }

    pub fn n_elements(&self) -> usize {
        self.n_el
    }

    /// Spatial degrees of freedom, `2 * n_el`.
    pub fn n_dofs(&self) -> usize {
        2 * self.n_el
    }

    pub fn width(&self) -> f64 {
        (self.right - self.left) / self.n_el as f64
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        let h = self.width();
        let a = self.left + e as f64 * h;
        let b = if e + 1 == self.n_el { self.right } else { self.left + (e + 1) as f64 * h };
        (a, b)
    }

    pub fn midpoint(&self, e: usize) -> f64 {
        let (a, b) = self.element(e);
        0.5 * (a + b)
    }

    /// Coordinates of the nodal dofs: element-major, left node then right node.
    pub fn node_coordinates(&self) -> Vec<f64> {
        (0..self.n_el)
            .flat_map(|e| {
                let (a, b) = self.element(e);
                [a, b]
            })
            .collect()
    }
}

pub fn build_mesh(left: f64, right: f64, n_el: usize) -> Result<Mesh1D> {
    if !(left.is_finite() && right.is_finite()) || right <= left {
        return Err(RomError::invalid(format!("degenerate domain [{left}, {right}]")));
    }
    if n_el == 0 {
        return Err(RomError::invalid("mesh needs at least one element"));
    }
    Ok(Mesh1D { left, right, n_el })
}
