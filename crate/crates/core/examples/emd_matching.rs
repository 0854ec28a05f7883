// Matches two point sets with the exact and auction solvers and shows the
// envelope gradient pulling one set onto the other.
//
//     cargo run --release --example emd_matching -- [n_points] [seed]

use pointcmt::emd::{emd_loss, CostMatrix, EmdSolver, solve_assignment_auction, solve_assignment_exact};
use pointcmt::geometry::PointCloud;
use pointcmt::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Summary {
    pub exact: f64,
    pub auction: f64,
    pub before: f64,
    pub after: f64,
}

fn random_cloud(n: usize, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    PointCloud::new((0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect())
}

pub fn run(n: usize, seed: u64) -> Result<Summary> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_cloud(n, &mut rng)?;
    let q = random_cloud(n, &mut rng)?;
    let costs = CostMatrix::from_clouds(&p, &q)?;

    let exact = solve_assignment_exact(&costs);
    let auction = solve_assignment_auction(&costs, 1e-6)?;
    let (ce, ca) = (costs.cost_of(&exact.assignment), costs.cost_of(&auction.assignment));
    println!("n = {n}");
    println!("exact   {ce:.9}");
    println!("auction {ca:.9}  (gap {:.2e}, bound n*eps = {:.2e})", ca - ce, n as f64 * 1e-6);

    // a few plain gradient steps on p
    let before = emd_loss(&p, &q, EmdSolver::Exact)?.value;
    let mut flat = p.to_flat();
    for step in 0..20 {
        let out = emd_loss(&PointCloud::from_flat(&flat)?, &q, EmdSolver::Exact)?;
        if step % 5 == 0 {
            println!("step {step:2}  emd {:.6}", out.value);
        }
        for (x, g) in flat.iter_mut().zip(&out.dp) {
            *x -= 0.05 * g;
        }
    }
    let after = emd_loss(&PointCloud::from_flat(&flat)?, &q, EmdSolver::Exact)?.value;
    println!("emd {before:.6} -> {after:.6}");
    Ok(Summary { exact: ce, auction: ca, before, after })
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    run(n, seed).map(|_| ())
}
