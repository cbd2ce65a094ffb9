//! Runs the command-line pipeline in-process: synthetic cohort, baselines,
//! evaluation and the combined report.
//!
//! Usage: cli_pipeline [OUT_DIR]

fn main() {
    let root = std::env::args().nth(1).unwrap_or_else(|| "pipeline_out".into());
    let d = |s: &str| format!("{root}/{s}");
    let steps: Vec<Vec<String>> = vec![
        vec!["synth".into(), "--seed".into(), "9".into(), "--n-patients".into(), "3000".into(), "--out-dir".into(), d("cohort")],
        vec!["fit-baseline".into(), "--input".into(), d("cohort"), "--dataset-slice".into(), "ValA".into(), "--out-dir".into(), d("fit")],
        vec![
            "report".into(), "--input".into(), d("cohort"), "--baselines".into(), d("fit/baselines"), "--dataset-slice".into(),
            "ValA".into(), "--replicates".into(), "200".into(), "--out-dir".into(), d("report"),
        ],
    ];
    for args in steps {
        let argv = std::iter::once("eyelab".to_string()).chain(args.iter().cloned());
        let code = eyelab::cli::run(argv);
        println!("eyelab {} -> exit {code}", args.join(" "));
        if code != 0 {
            std::process::exit(code);
        }
    }
    println!("report at {}", d("report/report.md"));
}
