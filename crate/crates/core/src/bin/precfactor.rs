fn main() -> std::process::ExitCode {
    precfactor::cli::run(std::env::args_os())
}
