use r2g::autodiff::{Tape, Tensor};
use r2g::harness::runner::read_checkpoint_file;
use r2g::nets::{mlp_from_checkpoint, Activation, CentralCritic};
use std::path::Path;

fn main() {
    let path = std::env::args().nth(1).unwrap();
    let ck = read_checkpoint_file(Path::new(&path)).unwrap();
    for agent in 0..2 {
        let critic = CentralCritic {
            net: mlp_from_checkpoint(&ck, &format!("agent{agent}/critic"), Activation::Tanh, false).unwrap(),
        };
        println!("agent {agent} critic Q(s, own, opp):");
        print!("{:>8}", "own\\opp");
        let grid: Vec<f64> = (-5..=5).map(|i| i as f64 / 5.0).collect();
        for o in &grid { print!("{:>7.1}", o); }
        println!();
        for own in &grid {
            print!("{:>8.1}", own);
            for opp in &grid {
                let mut tape = Tape::inference();
                let s = Tensor::from_vec(vec![1, 2], vec![1.0, 1.0]).unwrap();
                let a = Tensor::from_vec(vec![1, 1], vec![*own]).unwrap();
                let b = Tensor::from_vec(vec![1, 1], vec![*opp]).unwrap();
                let q = critic.value(&mut tape, &s, &[&a, &b]).unwrap().values()[0];
                print!("{:>7.1}", q);
            }
            println!();
        }
    }
}
