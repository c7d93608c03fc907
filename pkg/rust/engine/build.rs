fn main() {
    // The artifact fingerprint needs the triple the engine was built for;
    // TARGET is only visible to build scripts, so re-export it.
    println!(
        "cargo:rustc-env=LIMES_BUILD_TARGET={}",
        std::env::var("TARGET").expect("cargo always sets TARGET")
    );
}
