//! Holds the `acceptance` test target, which runs after the unit and
//! integration tests of `beliefmap`. Run it alone with
//! `cargo test -p beliefmap-acceptance --test acceptance`.
