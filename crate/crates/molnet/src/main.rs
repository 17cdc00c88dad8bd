fn main() -> std::process::ExitCode {
    molnet::cli::main()
}
