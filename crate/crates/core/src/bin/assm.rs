fn main() {
    anat_ssm::cli::init_logging();
    std::process::exit(anat_ssm::cli::main_with_args(std::env::args_os()));
}
