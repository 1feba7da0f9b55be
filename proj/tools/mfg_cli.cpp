#include "mfg/harness.hpp"

int main(int argc, char** argv) { return mfg::cli::run_cli(argc, argv); }
