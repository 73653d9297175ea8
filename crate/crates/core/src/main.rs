fn main() -> std::process::ExitCode {
    precis::cli::main()
}
