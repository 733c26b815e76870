use clap::Parser;

fn main() {
    let cli = qmle::cli::Cli::parse();
    let code = qmle::cli::run(cli, &mut std::io::stdout(), &mut std::io::stderr());
    std::process::exit(code);
}
