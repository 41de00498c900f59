fn main() -> std::process::ExitCode {
    partret::cli::main()
}
