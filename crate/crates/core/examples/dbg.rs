use boxtau::simulation::{Scenario, ScenarioKind};
use boxtau::{delta_hat, tau_matrix, stream_rng};

fn main() {
    let scenario = Scenario { kind: ScenarioKind::GaussLevel { m: 2, p: 3, rho: 0.7071 }, n: 1000, r: 1, seed: 5, b: 0 };
    let family = scenario.boxes().unwrap().unwrap();
    let reps = 400usize;
    let dim = 6;
    let mut stacks: Vec<Vec<f64>> = Vec::new();
    let mut delta_sum = vec![0.0; dim * dim];
    for r in 0..reps {
        let s = scenario.generate(&mut stream_rng(42, r as u64)).unwrap();
        let tau = tau_matrix(&s, &family).unwrap();
        stacks.push(tau.stacked().to_vec());
        let delta = delta_hat(&s, &family).unwrap();
        for i in 0..dim { for j in 0..dim { delta_sum[i*dim+j] += delta.entry(i, j); } }
    }
    let n = 1000.0;
    let means: Vec<f64> = (0..dim).map(|i| stacks.iter().map(|s| s[i]).sum::<f64>() / reps as f64).collect();
    println!("true n*Cov (upper) vs mean delta-hat:");
    for i in 0..dim {
        for j in i..dim {
            let cov: f64 = stacks.iter().map(|s| (s[i]-means[i])*(s[j]-means[j])).sum::<f64>() / (reps-1) as f64;
            let true_cov = n * cov;
            let est = delta_sum[i*dim+j] / reps as f64;
            if true_cov.abs() > 0.02 || est.abs() > 0.02 {
                println!("({i},{j}): true {:+.4}  est {:+.4}", true_cov, est);
            }
        }
    }
}
