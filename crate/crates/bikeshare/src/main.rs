fn main() -> std::process::ExitCode {
    std::process::ExitCode::from(bikeshare::cli::main())
}
