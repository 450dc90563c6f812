use clap::Parser;
use pc_cli::{optimize, OptimizeArgs};

#[derive(Parser)]
#[command(name = "tcap-opt", about = "Optimize a TCAP program")]
struct Args {
    #[command(flatten)]
    opt: OptimizeArgs,
}

fn main() {
    let args = Args::parse();
    let (mut out, mut err) = (std::io::stdout().lock(), std::io::stderr().lock());
    if let Err(e) = optimize(&args.opt, &mut out, &mut err) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
