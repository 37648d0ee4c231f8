fn main() -> std::process::ExitCode {
    cdgan::cli::main()
}
