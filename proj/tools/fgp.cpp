#include "fgp/cli.hpp"

int main(int argc, char** argv) { return fgp::cli::run(argc, argv); }
