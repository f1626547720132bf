fn main() -> std::process::ExitCode {
    tracewatch::cli::main()
}
