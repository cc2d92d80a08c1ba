//! The command-line pipeline driven in-process: sample, estimate, learn.

use std::path::Path;

fn gridtopo(args: &[&str]) -> i32 {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = gridtopo::cli::run(
        std::iter::once("gridtopo").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    print!("{}", String::from_utf8_lossy(&out));
    eprint!("{}", String::from_utf8_lossy(&err));
    code
}

fn main() {
    let dir = std::env::temp_dir().join("gridtopo_cli_pipeline");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (samples, conc, topo) = (path("samples.csv"), path("conc.json"), path("topology.json"));

    let steps: [Vec<&str>; 3] = [
        vec![
            "sample", "--grid", "radial20", "--model", "dc", "--n", "5000", "--seed", "1", "--out", &samples,
        ],
        vec!["estimate", "--samples", &samples, "--estimator", "auto", "--out", &conc],
        vec!["learn", "--conc", &conc, "--algo", "thresholding", "--out", &topo],
    ];
    for step in &steps {
        let code = gridtopo(step);
        println!("gridtopo {} -> exit {code}", step[0]);
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!(
        "{}",
        std::fs::read_to_string(Path::new(&topo)).expect("topology written")
    );
}
