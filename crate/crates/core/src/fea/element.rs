use crate::error::{Error, Result};

/// Stiffness matrix of a unit-square, unit-thickness bilinear plane-stress
/// element with `E = 1`.
///
/// DOFs are ordered counter-clockwise from the lower-left node, `(u, v)` per
/// node. Integrated with 2×2 Gauss points, which is exact for this element.
pub fn element_stiffness(poisson: f64) -> Result<[[f64; 8]; 8]> {
    if !(poisson > 0.0 && poisson < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "Poisson ratio must lie in (0, 0.5), got {poisson}"
        )));
    }
    let c = 1.0 / (1.0 - poisson * poisson);
    let d = [
        [c, c * poisson, 0.0],
        [c * poisson, c, 0.0],
        [0.0, 0.0, c * (1.0 - poisson) / 2.0],
    ];
    // Natural coordinates of the nodes.
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let g = 1.0 / 3f64.sqrt();
    let mut k = [[0.0; 8]; 8];
    for &(s, t) in &[(-g, -g), (g, -g), (g, g), (-g, g)] {
        // The mapping x = (s + 1) / 2 gives d/dx = 2 d/ds and det J = 1/4.
        let mut b = [[0.0; 8]; 3];
        for (n, &(sn, tn)) in corners.iter().enumerate() {
            let dnx = 2.0 * 0.25 * sn * (1.0 + tn * t);
            let dny = 2.0 * 0.25 * tn * (1.0 + sn * s);
            b[0][2 * n] = dnx;
            b[1][2 * n + 1] = dny;
            b[2][2 * n] = dny;
            b[2][2 * n + 1] = dnx;
        }
        let mut db = [[0.0; 8]; 3];
        for r in 0..3 {
            for col in 0..8 {
                db[r][col] = (0..3).map(|q| d[r][q] * b[q][col]).sum();
            }
        }
        for i in 0..8 {
            for j in 0..8 {
                k[i][j] += 0.25 * (0..3).map(|r| b[r][i] * db[r][j]).sum::<f64>();
            }
        }
    }
    Ok(k)
}
