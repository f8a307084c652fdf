//! Broadcasting and strided iteration helpers.

use crate::error::{Result, TensorError};

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// NumPy-style broadcast of two shapes.
pub(crate) fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return Err(TensorError::Shape { op, lhs: a.to_vec(), rhs: b.to_vec() }),
        };
    }
    Ok(out)
}

/// Strides of `shape` when read as if broadcast to `out` (0 on broadcast axes).
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let rank = out.len();
    let offset = rank - shape.len();
    let mut strides = vec![0; rank];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i + offset] = if shape[i] == 1 && out[i + offset] != 1 { 0 } else { acc };
        acc *= shape[i];
    }
    strides
}

/// Iteration plan over an output shape with two broadcast operands,
/// with adjacent compatible axes merged.
#[derive(Debug, Clone)]
pub(crate) struct Plan {
    dims: Vec<usize>,
    sa: Vec<usize>,
    sb: Vec<usize>,
}

impl Plan {
    pub fn new(a: &[usize], b: &[usize], out: &[usize]) -> Plan {
        let fa = broadcast_strides(a, out);
        let fb = broadcast_strides(b, out);
        let mut dims: Vec<usize> = Vec::new();
        let mut sa: Vec<usize> = Vec::new();
        let mut sb: Vec<usize> = Vec::new();
        for i in 0..out.len() {
            if out[i] == 1 {
                continue;
            }
            if let Some(last) = dims.len().checked_sub(1) {
                if sa[last] == fa[i] * out[i] && sb[last] == fb[i] * out[i] {
                    dims[last] *= out[i];
                    sa[last] = fa[i];
                    sb[last] = fb[i];
                    continue;
                }
            }
            dims.push(out[i]);
            sa.push(fa[i]);
            sb.push(fb[i]);
        }
        if dims.is_empty() {
            dims.push(1);
            sa.push(0);
            sb.push(0);
        }
        Plan { dims, sa, sb }
    }

    /// Calls `f(out_index, a_index, b_index)` in row-major output order.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        let rank = self.dims.len();
        let inner = self.dims[rank - 1];
        let (ia_step, ib_step) = (self.sa[rank - 1], self.sb[rank - 1]);
        let outer: usize = self.dims[..rank - 1].iter().product();
        let mut counter = vec![0usize; rank - 1];
        let (mut base_a, mut base_b) = (0usize, 0usize);
        let mut o = 0;
        for _ in 0..outer {
            let (mut ia, mut ib) = (base_a, base_b);
            for _ in 0..inner {
                f(o, ia, ib);
                o += 1;
                ia += ia_step;
                ib += ib_step;
            }
            for d in (0..rank - 1).rev() {
                counter[d] += 1;
                base_a += self.sa[d];
                base_b += self.sb[d];
                if counter[d] < self.dims[d] {
                    break;
                }
                base_a -= self.sa[d] * self.dims[d];
                base_b -= self.sb[d] * self.dims[d];
                counter[d] = 0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn broadcast_rules() {
        assert_eq!(broadcast_shapes("t", &[2, 3, 4, 4], &[2, 3, 1, 1]).unwrap(), vec![2, 3, 4, 4]);
        assert_eq!(broadcast_shapes("t", &[3], &[2, 1]).unwrap(), vec![2, 3]);
        assert!(broadcast_shapes("t", &[2, 3], &[3, 2]).is_err());
    }

    #[test]
    fn plan_visits_naive_offsets() {
        let a = [2usize, 1, 3];
        let b = [4usize, 1];
        let out = broadcast_shapes("t", &a, &b).unwrap();
        let plan = Plan::new(&a, &b, &out);
        let mut seen = Vec::new();
        plan.for_each(|o, ia, ib| seen.push((o, ia, ib)));
        let mut expected = Vec::new();
        let mut o = 0;
        for i in 0..2 {
            for j in 0..4 {
                for k in 0..3 {
                    expected.push((o, i * 3 + k, j));
                    o += 1;
                }
            }
        }
        assert_eq!(seen, expected);
    }
}
