use std::process::Command;

fn main() {
    println!("cargo:rerun-if-changed=build.rs");
    println!("cargo:rerun-if-env-changed=SAAM_VERSION");
    let described = std::env::var("SAAM_VERSION").ok().or_else(|| {
        Command::new("git")
            .args(["describe", "--always", "--dirty", "--tags"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .and_then(|o| String::from_utf8(o.stdout).ok())
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
    });
    let version = match described {
        Some(d) => format!("v{}-{d}", std::env::var("CARGO_PKG_VERSION").unwrap()),
        None => format!("v{}", std::env::var("CARGO_PKG_VERSION").unwrap()),
    };
    println!("cargo:rustc-env=SAAM_BUILD_VERSION={version}");
}
