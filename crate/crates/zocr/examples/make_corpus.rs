//! Writes a synthetic A-Z corpus split into train and test directories.
//!
//! Usage: make_corpus <train_dir> <test_dir> [train_copies] [test_copies] [seed]

use std::path::PathBuf;
use std::process::exit;

use zocr::synth::{write_split_corpus, RenderSpec};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 || args.len() > 5 {
        eprintln!("usage: make_corpus <train_dir> <test_dir> [train_copies] [test_copies] [seed]");
        exit(2);
    }
    let train_dir = PathBuf::from(&args[0]);
    let test_dir = PathBuf::from(&args[1]);
    let parse = |i: usize, default: u64| -> u64 {
        args.get(i).map_or(default, |s| {
            s.parse().unwrap_or_else(|_| {
                eprintln!("bad number {s:?}");
                exit(2);
            })
        })
    };
    let train_copies = parse(2, 10) as usize;
    let test_copies = parse(3, 2) as usize;
    let seed = parse(4, 42);
    let spec = RenderSpec::default();
    if let Err(e) = write_split_corpus(&train_dir, &test_dir, train_copies, test_copies, seed, &spec)
    {
        eprintln!("error: {e}");
        exit(1);
    }
    println!(
        "wrote {} train and {} test images per class under {} and {}",
        train_copies,
        test_copies,
        train_dir.display(),
        test_dir.display()
    );
}
