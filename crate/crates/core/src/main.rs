fn main() {
    std::process::exit(ulsif_fpga::cli::run(std::env::args_os()));
}
