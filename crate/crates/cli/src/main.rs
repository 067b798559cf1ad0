use std::ffi::OsString;

fn main() {
    let args: Vec<OsString> = std::env::args_os().collect();
    let mut out = std::io::stdout();
    let mut err = std::io::stderr();
    std::process::exit(rstkit_cli::run(&args, &mut out, &mut err));
}
