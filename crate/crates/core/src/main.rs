fn main() -> std::process::ExitCode {
    partcrf::cli::main()
}
