use std::io::{self, Write};

use super::hedge::HedgeStrategy;
use super::solve::{LatticeSolution, VarianceChoice};

/// Writes `slice,time,x,aux,value,policy,delta` rows for every node.
pub fn write_surface_csv<W: Write>(out: &mut W, sol: &LatticeSolution, delta: &HedgeStrategy) -> io::Result<()> {
    let layout = sol.surface.layout();
    let spec = layout.spec();
    writeln!(out, "slice,time,x,aux,value,policy,delta")?;
    for i in 0..=layout.last() {
        let axis = layout.aux_axis(i);
        for j in -(i as i64)..=(i as i64) {
            for k in 0..axis.len {
                let policy = if i < layout.last() {
                    match sol.policy.choice(i, j, k) {
                        VarianceChoice::High => "high",
                        VarianceChoice::Low => "low",
                    }
                } else {
                    "terminal"
                };
                writeln!(
                    out,
                    "{i},{:?},{:?},{:?},{:?},{policy},{:?}",
                    spec.times()[i],
                    spec.x(j),
                    axis.level(k),
                    sol.surface.value(i, j, k),
                    delta.node_delta(i, j, k)
                )?;
            }
        }
    }
    Ok(())
}
