fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_target(false).init();
    let code = mlbn_app::cli::dispatch(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
