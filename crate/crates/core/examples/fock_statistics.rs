//! Output statistics of the three-arm interferometer at the working point Q1
//! for |1,1,1⟩ against distinguishable photons, with their Fisher matrices.
//!
//! cargo run --release --example fock_statistics

use mmzi::evolution::Probe;
use mmzi::fisher::{fisher_at, invert_fisher, SINGULAR_CONDITION};
use mmzi::interferometer::{Circuit, Q1};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = Circuit::three_mode();
    let fock = c.model(&Probe::fock(vec![1, 1, 1]))?;
    let dist = c.model(&Probe::distinguishable(vec![1, 1, 1]))?;
    let (pf, pd) = (fock.probabilities(&Q1), dist.probabilities(&Q1));

    println!("outcome      |1,1,1>   distinguishable");
    for (k, out) in fock.outcomes().iter().enumerate() {
        let j = dist
            .outcomes()
            .iter()
            .position(|o| o == out)
            .ok_or("outcome sets differ")?;
        println!(
            "{:<12} {:.5}   {:.5}",
            format!("{:?}", out.occupations()),
            pf[k],
            pd[j]
        );
    }
    println!(
        "sums         {:.12}   {:.12}",
        pf.iter().sum::<f64>(),
        pd.iter().sum::<f64>()
    );

    for (name, m) in [("|1,1,1>", &fock), ("distinguishable", &dist)] {
        let f = fisher_at(m, &Q1)?;
        let tr = invert_fisher(&f, SINGULAR_CONDITION).trace();
        println!(
            "{name}: F = {:.4?}, Tr[F^-1] = {tr:.4?}",
            f.entries.as_slice()
        );
    }
    Ok(())
}
