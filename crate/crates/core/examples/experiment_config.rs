//! Drive an experiment from an inline TOML config, as the `relocsplit` binary does.
use relocsplit::cli::{run_experiment, write_trace_csv, ExperimentConfig};

const CONFIG: &str = r#"
name = "inline"
algorithm = "dr"
dim = 4
seed = 2
n_steps = 120
samples = 300
checks = ["error_bound", "one_step", "rate_theorem", "summability", "consensus"]
"#;

fn main() -> relocsplit::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(CONFIG, &["schedule_r=0.4".into()])?;
    let outcome = run_experiment(&cfg)?;
    print!("{}", outcome.report);
    println!("exit code would be {}", outcome.report.exit_code());

    let mut csv = Vec::new();
    write_trace_csv(&mut csv, &outcome.trace)?;
    let text = String::from_utf8_lossy(&csv);
    for line in text.lines().take(3) {
        println!("{line}");
    }
    Ok(())
}
