use super::{fp_op, AccumulationMode, BinOp, Representation, Rounded};

/// Running state for a sum evaluated at a fixed precision.
struct Acc {
    repr: Representation,
    overflow: bool,
}

impl Acc {
    fn add(&mut self, a: f64, b: f64) -> f64 {
        let r = fp_op(self.repr, BinOp::Add, a, b);
        self.overflow |= r.overflow;
        r.value
    }

    fn sub(&mut self, a: f64, b: f64) -> f64 {
        let r = fp_op(self.repr, BinOp::Sub, a, b);
        self.overflow |= r.overflow;
        r.value
    }

    fn pairwise(&mut self, xs: &[f64]) -> f64 {
        match xs.len() {
            0 => 0.0,
            1 => xs[0],
            n => {
                let (l, r) = xs.split_at(n / 2);
                let l = self.pairwise(l);
                let r = self.pairwise(r);
                self.add(l, r)
            }
        }
    }
}

/// Sums `xs` at precision `repr` in the order prescribed by `mode`.
///
/// Every partial result is rounded into `repr`. The compensated mode keeps
/// both the running sum and the correction term in `repr` and adds the
/// correction once at the end. An empty slice sums to zero.
pub fn accumulate(repr: Representation, mode: AccumulationMode, xs: &[f64]) -> Rounded {
    let mut acc = Acc {
        repr,
        overflow: false,
    };
    let Some((&first, rest)) = xs.split_first() else {
        return Rounded::exact(0.0);
    };
    let value = match mode {
        AccumulationMode::NaiveLtr => rest.iter().fold(first, |s, &x| acc.add(s, x)),
        AccumulationMode::Pairwise => acc.pairwise(xs),
        AccumulationMode::Kahan => {
            let mut sum = first;
            let mut comp = 0.0;
            for &x in rest {
                let t = acc.add(sum, x);
                if t.is_finite() {
                    let lost = if sum.abs() >= x.abs() {
                        let d = acc.sub(sum, t);
                        acc.add(d, x)
                    } else {
                        let d = acc.sub(x, t);
                        acc.add(d, sum)
                    };
                    comp = acc.add(comp, lost);
                }
                sum = t;
            }
            acc.add(sum, comp)
        }
    };
    Rounded {
        value,
        overflow: acc.overflow,
    }
}
